#pragma once

#include <stdexcept>
#include <string>

namespace emocvae {

// Model family: the full model, its regularization ablations, the
// conventional CVAE with its ablations, and a plain encoder-free Seq2Seq.
enum class VariantId {
    EMO_CVAE,
    EMO_CVAE_M1,
    EMO_CVAE_M2,
    CVAE,
    CVAE_M1,
    CVAE_M2,
    SEQ2SEQ,
};

inline const char* variant_name(VariantId v) {
    switch (v) {
        case VariantId::EMO_CVAE: return "emo-cvae";
        case VariantId::EMO_CVAE_M1: return "emo-cvae-m1";
        case VariantId::EMO_CVAE_M2: return "emo-cvae-m2";
        case VariantId::CVAE: return "cvae";
        case VariantId::CVAE_M1: return "cvae-m1";
        case VariantId::CVAE_M2: return "cvae-m2";
        case VariantId::SEQ2SEQ: return "seq2seq";
    }
    throw std::invalid_argument("unknown variant");
}

inline VariantId variant_from_name(const std::string& s) {
    if (s == "emo-cvae") return VariantId::EMO_CVAE;
    if (s == "emo-cvae-m1") return VariantId::EMO_CVAE_M1;
    if (s == "emo-cvae-m2") return VariantId::EMO_CVAE_M2;
    if (s == "cvae") return VariantId::CVAE;
    if (s == "cvae-m1") return VariantId::CVAE_M1;
    if (s == "cvae-m2") return VariantId::CVAE_M2;
    if (s == "seq2seq") return VariantId::SEQ2SEQ;
    throw std::invalid_argument("unknown variant: " + s);
}

// Seq2Seq is a bare decoder; everything else carries the latent machinery.
inline bool variant_has_latent(VariantId v) { return v != VariantId::SEQ2SEQ; }

// CVAE-family posteriors are q(z|x,e,y); Emo-CVAE posteriors are q(z|x,y).
inline bool posterior_sees_emotion(VariantId v) {
    return v == VariantId::CVAE || v == VariantId::CVAE_M1 || v == VariantId::CVAE_M2;
}

// Only the unmodified CVAE keeps the emotion token in its decoder input.
inline bool decoder_has_emotion_token(VariantId v) { return v == VariantId::CVAE; }

inline bool has_emo_post_term(VariantId v) {
    return v == VariantId::EMO_CVAE || v == VariantId::EMO_CVAE_M1 || v == VariantId::CVAE_M2;
}

inline bool has_emo_prior_term(VariantId v) {
    return v == VariantId::EMO_CVAE || v == VariantId::CVAE_M2;
}

}  // namespace emocvae
