#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/corpus.hpp"
#include "emocvae/variant.hpp"

namespace emocvae {

enum class TokenRole {
    ENC_POSTERIOR,
    ENC_PRIOR,
    EMOTION,
    POST,
    SEP0,
    RESP,
    SEP1,
    Z,
    SOS,
    EOS,
    PAD,
};

inline const char* role_name(TokenRole r) {
    switch (r) {
        case TokenRole::ENC_POSTERIOR: return "ENC_POSTERIOR";
        case TokenRole::ENC_PRIOR: return "ENC_PRIOR";
        case TokenRole::EMOTION: return "EMOTION";
        case TokenRole::POST: return "POST";
        case TokenRole::SEP0: return "SEP0";
        case TokenRole::RESP: return "RESP";
        case TokenRole::SEP1: return "SEP1";
        case TokenRole::Z: return "Z";
        case TokenRole::SOS: return "SOS";
        case TokenRole::EOS: return "EOS";
        case TokenRole::PAD: return "PAD";
    }
    throw std::invalid_argument("unknown role");
}

enum class LayoutMode { TRAIN, TEST };

// Positioned tokens with their role, segment and vocab id. Attention masks
// are a function of the role sequence alone.
struct TokenLayout {
    struct Item {
        TokenRole role;
        int segment;
        int position;
        int vocab_id;
    };
    std::vector<Item> items;

    int size() const { return int(items.size()); }

    int find_role(TokenRole r) const {
        for (size_t i = 0; i < items.size(); ++i)
            if (items[i].role == r) return int(i);
        return -1;
    }

    std::vector<int> vocab_ids() const {
        std::vector<int> ids;
        ids.reserve(items.size());
        for (const auto& it : items) ids.push_back(it.vocab_id);
        return ids;
    }

    std::vector<int> segments() const {
        std::vector<int> segs;
        segs.reserve(items.size());
        for (const auto& it : items) segs.push_back(it.segment);
        return segs;
    }

    void push(TokenRole role, int segment, int vocab_id) {
        int position = items.empty() ? 0 : items.back().position + 1;
        items.push_back({role, segment, position, vocab_id});
    }

    void push_at(TokenRole role, int segment, int vocab_id, int position) {
        items.push_back({role, segment, position, vocab_id});
    }
};

// Square boolean attend-to matrix: at(i, j) is true iff token i may attend
// to token j. PAD rows and columns are entirely false.
struct AttentionMask {
    int n = 0;
    std::vector<uint8_t> allow;

    AttentionMask() = default;
    explicit AttentionMask(int size) : n(size), allow(size_t(size) * size_t(size), 0) {}

    bool at(int i, int j) const { return allow[size_t(i) * size_t(n) + size_t(j)] != 0; }
    void set(int i, int j, bool v = true) { allow[size_t(i) * size_t(n) + size_t(j)] = v ? 1 : 0; }
    bool operator==(const AttentionMask& o) const { return n == o.n && allow == o.allow; }

    std::string serialize(const TokenLayout& layout) const {
        std::ostringstream os;
        os << "rows=" << n << " roles=";
        for (int i = 0; i < layout.size(); ++i) {
            if (i) os << ',';
            os << role_name(layout.items[size_t(i)].role);
        }
        os << '\n';
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) os << (at(i, j) ? '1' : '0');
            os << '\n';
        }
        return os.str();
    }

    static AttentionMask deserialize(std::istream& is) {
        std::string header;
        if (!std::getline(is, header) || header.rfind("rows=", 0) != 0)
            throw std::runtime_error("attention mask: bad header");
        int n = std::stoi(header.substr(5));
        AttentionMask m(n);
        std::string line;
        for (int i = 0; i < n; ++i) {
            if (!std::getline(is, line) || int(line.size()) < n)
                throw std::runtime_error("attention mask: truncated grid");
            for (int j = 0; j < n; ++j) m.set(i, j, line[size_t(j)] == '1');
        }
        return m;
    }
};

// ---- encoder ----

inline TokenLayout build_encoder_layout(const std::vector<int>& post_ids,
                                        const std::optional<std::vector<int>>& resp_ids,
                                        std::optional<EmotionLabel> emotion, LayoutMode mode) {
    if (post_ids.empty()) throw std::invalid_argument("encoder layout: post must be non-empty");
    if (!emotion) throw std::invalid_argument("encoder layout: emotion required");
    if (mode == LayoutMode::TRAIN && (!resp_ids || resp_ids->empty()))
        throw std::invalid_argument("encoder layout: train mode requires a response");
    TokenLayout L;
    if (mode == LayoutMode::TRAIN) {
        L.push(TokenRole::ENC_POSTERIOR, 0, TOK_ENC_POSTERIOR);
    } else {
        // test layouts keep the training-stage position indices (the
        // [ENC_posterior] slot stays reserved) so the prior network sees
        // the same positional inputs it was trained on
        L.push_at(TokenRole::ENC_PRIOR, 0, TOK_ENC_PRIOR, 1);
    }
    if (mode == LayoutMode::TRAIN) L.push(TokenRole::ENC_PRIOR, 0, TOK_ENC_PRIOR);
    L.push(TokenRole::EMOTION, 0, Vocabulary::emotion_token_id(*emotion));
    for (int id : post_ids) L.push(TokenRole::POST, 0, id);
    L.push(TokenRole::SEP0, 0, TOK_SEP);
    if (mode == LayoutMode::TRAIN) {
        for (int id : *resp_ids) L.push(TokenRole::RESP, 1, id);
        L.push(TokenRole::SEP1, 1, TOK_SEP);
    }
    return L;
}

inline AttentionMask build_encoder_mask(const TokenLayout& layout,
                                        VariantId variant = VariantId::EMO_CVAE) {
    int n = layout.size();
    AttentionMask m(n);
    auto role = [&](int i) { return layout.items[size_t(i)].role; };
    for (int i = 0; i < n; ++i) {
        switch (role(i)) {
            case TokenRole::ENC_POSTERIOR:
                for (int j = 0; j < n; ++j) {
                    TokenRole rj = role(j);
                    bool ok = j == i || rj == TokenRole::POST || rj == TokenRole::RESP;
                    if (posterior_sees_emotion(variant) && rj == TokenRole::EMOTION) ok = true;
                    if (ok) m.set(i, j);
                }
                break;
            case TokenRole::ENC_PRIOR:
                for (int j = 0; j < n; ++j) {
                    TokenRole rj = role(j);
                    if (j == i || rj == TokenRole::EMOTION || rj == TokenRole::POST) m.set(i, j);
                }
                break;
            case TokenRole::EMOTION:
                m.set(i, i);
                break;
            case TokenRole::POST:
                for (int j = 0; j < n; ++j)
                    if (role(j) == TokenRole::POST || role(j) == TokenRole::SEP0) m.set(i, j);
                break;
            case TokenRole::SEP0:
                for (int j = 0; j < n; ++j)
                    if (j == i || role(j) == TokenRole::POST) m.set(i, j);
                break;
            case TokenRole::RESP:
                for (int j = 0; j < n; ++j)
                    if (role(j) == TokenRole::RESP || role(j) == TokenRole::SEP1) m.set(i, j);
                break;
            case TokenRole::SEP1:
                for (int j = 0; j < n; ++j)
                    if (j == i || role(j) == TokenRole::RESP) m.set(i, j);
                break;
            case TokenRole::PAD:
                break;
            default:
                throw std::invalid_argument("encoder mask: unexpected role in layout");
        }
    }
    return m;
}

// ---- decoder ----

inline TokenLayout build_decoder_layout(const std::vector<int>& post_ids,
                                        const std::optional<std::vector<int>>& resp_ids,
                                        LayoutMode mode, VariantId variant = VariantId::EMO_CVAE,
                                        std::optional<EmotionLabel> emotion = std::nullopt) {
    if (post_ids.empty()) throw std::invalid_argument("decoder layout: post must be non-empty");
    if (mode == LayoutMode::TRAIN && (!resp_ids || resp_ids->empty()))
        throw std::invalid_argument("decoder layout: train mode requires a response");
    bool emo_head = decoder_has_emotion_token(variant) || variant == VariantId::SEQ2SEQ;
    if (emo_head && !emotion)
        throw std::invalid_argument("decoder layout: variant requires an emotion label");
    TokenLayout L;
    if (emo_head) L.push(TokenRole::EMOTION, 0, Vocabulary::emotion_token_id(*emotion));
    if (variant != VariantId::SEQ2SEQ) L.push(TokenRole::Z, 0, TOK_Z);
    for (int id : post_ids) L.push(TokenRole::POST, 0, id);
    L.push(TokenRole::SOS, 1, TOK_SOS);
    if (mode == LayoutMode::TRAIN) {
        for (int id : *resp_ids) L.push(TokenRole::RESP, 1, id);
        L.push(TokenRole::EOS, 1, TOK_EOS);
    }
    return L;
}

inline AttentionMask build_decoder_mask(const TokenLayout& layout) {
    int n = layout.size();
    AttentionMask m(n);
    auto role = [&](int i) { return layout.items[size_t(i)].role; };
    // condition head = Z plus an optional EMOTION token in front of it; for
    // the Seq2Seq layout the EMOTION token occupies the Z slot itself.
    bool has_z = layout.find_role(TokenRole::Z) >= 0;
    auto is_cond = [&](int j) {
        return role(j) == TokenRole::Z || (role(j) == TokenRole::EMOTION && !has_z);
    };
    auto is_head_emotion = [&](int j) { return role(j) == TokenRole::EMOTION && has_z; };
    for (int i = 0; i < n; ++i) {
        switch (role(i)) {
            case TokenRole::Z:
                for (int j = 0; j < n; ++j)
                    if (is_cond(j) || role(j) == TokenRole::POST || is_head_emotion(j)) m.set(i, j);
                break;
            case TokenRole::EMOTION:
                if (has_z) {
                    // static condition token: mirrors the Z row
                    for (int j = 0; j < n; ++j)
                        if (j == i || role(j) == TokenRole::Z || role(j) == TokenRole::POST)
                            m.set(i, j);
                } else {
                    for (int j = 0; j < n; ++j)
                        if (j == i || role(j) == TokenRole::POST) m.set(i, j);
                }
                break;
            case TokenRole::POST:
                for (int j = 0; j < n; ++j)
                    if (is_cond(j) || role(j) == TokenRole::POST || is_head_emotion(j)) m.set(i, j);
                break;
            case TokenRole::SOS:
                for (int j = 0; j < n; ++j)
                    if (is_cond(j) || role(j) == TokenRole::POST || is_head_emotion(j) || j == i)
                        m.set(i, j);
                break;
            case TokenRole::RESP:
                // all except future response tokens and EOS
                for (int j = 0; j < n; ++j) {
                    if (role(j) == TokenRole::EOS || role(j) == TokenRole::PAD) continue;
                    if (role(j) == TokenRole::RESP && j > i) continue;
                    m.set(i, j);
                }
                break;
            case TokenRole::EOS:
                for (int j = 0; j < n; ++j)
                    if (role(j) != TokenRole::PAD) m.set(i, j);
                break;
            case TokenRole::PAD:
                break;
            default:
                throw std::invalid_argument("decoder mask: unexpected role in layout");
        }
    }
    return m;
}

// Append one generated response token (or EOS) to a test-mode decoder
// layout, extending the mask without touching existing rows.
inline void extend_decoder(TokenLayout& layout, AttentionMask& mask, int new_token_id) {
    if (!layout.items.empty() && layout.items.back().role == TokenRole::EOS)
        throw std::invalid_argument("extend_decoder: sequence already ended with EOS");
    bool is_eos = new_token_id == TOK_EOS;
    layout.push(is_eos ? TokenRole::EOS : TokenRole::RESP, 1, new_token_id);
    int n = layout.size();
    AttentionMask grown(n);
    for (int i = 0; i < n - 1; ++i)
        for (int j = 0; j < n - 1; ++j) grown.set(i, j, mask.at(i, j));
    // new row: attends everything so far (there are no future tokens yet)
    for (int j = 0; j < n; ++j)
        if (layout.items[size_t(j)].role != TokenRole::PAD) grown.set(n - 1, j);
    mask = std::move(grown);
}

// ---- variant bundles ----

struct VariantLayouts {
    std::optional<TokenLayout> encoder_layout;
    std::optional<AttentionMask> encoder_mask;
    TokenLayout decoder_layout;
    AttentionMask decoder_mask;
};

inline VariantLayouts build_cvae_variant_layouts(VariantId variant,
                                                 const std::vector<int>& post_ids,
                                                 const std::optional<std::vector<int>>& resp_ids,
                                                 EmotionLabel emotion, LayoutMode mode) {
    VariantLayouts out;
    if (variant_has_latent(variant)) {
        out.encoder_layout = build_encoder_layout(post_ids, resp_ids, emotion, mode);
        out.encoder_mask = build_encoder_mask(*out.encoder_layout, variant);
    }
    out.decoder_layout = build_decoder_layout(post_ids, resp_ids, mode, variant, emotion);
    out.decoder_mask = build_decoder_mask(out.decoder_layout);
    return out;
}

}  // namespace emocvae
