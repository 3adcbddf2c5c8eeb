#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/corpus.hpp"
#include "emocvae/latent.hpp"
#include "emocvae/masks.hpp"
#include "emocvae/transformer.hpp"
#include "emocvae/variant.hpp"

namespace emocvae {

struct LossBreakdown {
    double nll = 0.0;       // per response token (EOS included)
    double kl = 0.0;        // per example
    double emo_post = 0.0;  // -log q(e|z), z from the posterior
    double emo_prior = 0.0;  // -log q(e|z), z from the prior
};

struct TrainingSchedule {
    long max_steps = 1000;
    int batch_size = 32;
    double lr = 1e-3;
    long pretrain_steps = 200;
    long warmup_steps = 500;
    int kl_interval = 15;
    double emo_weight = 1.0;
    long emo_from_step = 0;
    bool kl_alternating = false;
    bool stop_grad_prior_emo = false;

    void validate() const {
        if (kl_interval < 1) throw std::invalid_argument("kl_interval must be >= 1");
        if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
        if (batch_size < 1 || max_steps < 1)
            throw std::invalid_argument("batch_size and max_steps must be >= 1");
        if (pretrain_steps < 0 || emo_from_step < 0)
            throw std::invalid_argument("step thresholds must be >= 0");
        if (emo_weight < 0.0) throw std::invalid_argument("emo_weight must be >= 0");
    }

    // linear anneal 0 -> 1 after the pretrain phase
    double kl_weight(long step) const {
        if (step < pretrain_steps) return 0.0;
        double w = double(step - pretrain_steps) / double(warmup_steps);
        return w > 1.0 ? 1.0 : w;
    }

    bool kl_gate(long step) const { return step % kl_interval == 0; }
};

// loss = nll + g(step) * w(step) * kl + emo_post + emo_prior
inline double total_loss(const LossBreakdown& b, const TrainingSchedule& s, long step) {
    if (step < 0) throw std::invalid_argument("total_loss: step must be >= 0");
    double kl_coef = (s.kl_gate(step) ? 1.0 : 0.0) * s.kl_weight(step);
    double ew = step >= s.emo_from_step ? s.emo_weight : 0.0;
    if (s.kl_alternating && s.kl_gate(step) && step >= s.pretrain_steps)
        return kl_coef * b.kl;
    return b.nll + kl_coef * b.kl + ew * (b.emo_post + b.emo_prior);
}

struct ModelConfig {
    VariantId variant = VariantId::EMO_CVAE;
    TransformerConfig tf;  // applied to both stacks; vocab_size set from the vocabulary
    int latent_dim = 64;
    bool share_enc_dec = false;
    double init_scale = 0.02;
};

// forward_train output: graph nodes for the backward pass plus plain values
struct ForwardResult {
    Tensor nll;       // 1x1, per-token mean
    Tensor kl;        // 1x1 or null
    Tensor emo_post;  // 1x1 or null
    Tensor emo_prior; // 1x1 or null
    int resp_token_count = 0;

    LossBreakdown values() const {
        LossBreakdown b;
        b.nll = nll->val.at(0, 0);
        if (kl) b.kl = kl->val.at(0, 0);
        if (emo_post) b.emo_post = emo_post->val.at(0, 0);
        if (emo_prior) b.emo_prior = emo_prior->val.at(0, 0);
        return b;
    }
};

// Full response generator: variant-specific encoder/decoder wiring, latent
// networks and the emotion regularizer.
class EmoCvaeModel {
  public:
    EmoCvaeModel() = default;

    EmoCvaeModel(ModelConfig cfg, Vocabulary vocab, uint64_t init_seed)
        : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
        cfg_.tf.vocab_size = vocab_.size();
        Rng rng(init_seed);
        bool latent = variant_has_latent(cfg_.variant);
        std::string enc_prefix = cfg_.share_enc_dec ? "tf." : "enc.";
        std::string dec_prefix = cfg_.share_enc_dec ? "tf." : "dec.";
        if (latent) {
            encoder_.emplace(params_, enc_prefix, cfg_.tf, 0, rng, cfg_.init_scale);
        }
        decoder_ = Transformer(params_, dec_prefix, cfg_.tf, latent ? cfg_.latent_dim : 0, rng,
                               cfg_.init_scale);
        if (latent) {
            posterior_net_.emplace(params_, "posterior.", cfg_.tf.hidden_dim, cfg_.latent_dim, rng,
                                   cfg_.init_scale);
            prior_net_.emplace(params_, "prior.", cfg_.tf.hidden_dim, cfg_.latent_dim, rng,
                               cfg_.init_scale);
        }
        if (has_emo_post_term(cfg_.variant) || has_emo_prior_term(cfg_.variant)) {
            emo_net_.emplace(params_, "emopred.", cfg_.latent_dim, rng, cfg_.init_scale);
        }
    }

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    VariantId variant() const { return cfg_.variant; }
    const Transformer& decoder() const { return decoder_; }
    const Transformer& encoder() const {
        if (!encoder_) throw std::logic_error("variant has no encoder");
        return *encoder_;
    }
    const EmotionPredNet& emotion_net() const {
        if (!emo_net_) throw std::logic_error("variant has no emotion prediction network");
        return *emo_net_;
    }

    // teacher-forced decoder pass; returns (per-token mean NLL node, token count)
    std::pair<Tensor, int> decoder_nll(const EncodedPair& ex, const Tensor& z) const {
        auto layout = build_decoder_layout(ex.post_ids, ex.resp_ids, LayoutMode::TRAIN,
                                           cfg_.variant, EmotionLabel(ex.emotion_id));
        auto mask = build_decoder_mask(layout);
        Tensor h = decoder_.forward(layout, mask, z);
        Tensor logits = decoder_.lm_logits(h);
        std::vector<int> targets(size_t(layout.size()), -1);
        int sos = layout.find_role(TokenRole::SOS);
        int n_resp = int(ex.resp_ids.size());
        targets[size_t(sos)] = ex.resp_ids[0];
        for (int t = 0; t < n_resp; ++t) {
            int row = sos + 1 + t;
            targets[size_t(row)] = t + 1 < n_resp ? ex.resp_ids[size_t(t) + 1] : TOK_EOS;
        }
        int count = n_resp + 1;
        Tensor nll = scale(cross_entropy_sum(logits, targets), 1.0 / double(count));
        return {nll, count};
    }

    ForwardResult forward_train(const EncodedPair& ex, const Mat& noise_post,
                                const Mat& noise_prior, bool stop_grad_prior_emo = false) const {
        if (ex.post_ids.empty() || ex.resp_ids.empty())
            throw std::invalid_argument("forward_train: empty post or response");
        ForwardResult out;
        switch (cfg_.variant) {
            case VariantId::SEQ2SEQ: {
                auto [nll, count] = decoder_nll(ex, nullptr);
                out.nll = nll;
                out.resp_token_count = count;
                return out;
            }
            case VariantId::EMO_CVAE:
            case VariantId::EMO_CVAE_M1:
            case VariantId::EMO_CVAE_M2:
            case VariantId::CVAE:
            case VariantId::CVAE_M1:
            case VariantId::CVAE_M2: {
                auto enc_layout = build_encoder_layout(ex.post_ids, ex.resp_ids,
                                                       EmotionLabel(ex.emotion_id),
                                                       LayoutMode::TRAIN);
                auto enc_mask = build_encoder_mask(enc_layout, cfg_.variant);
                Tensor h = encoder_->forward(enc_layout, enc_mask);
                Tensor enc_post_row = slice_rows(h, 0, 1);
                Tensor enc_prior_row = slice_rows(h, 1, 2);
                GaussianNodes q = posterior_net_->forward(enc_post_row);
                GaussianNodes p = prior_net_->forward(enc_prior_row);
                Tensor z_post = reparam_sample(q, noise_post);
                out.kl = gaussian_kl(q.mu, q.log_var, p.mu, p.log_var);
                auto [nll, count] = decoder_nll(ex, z_post);
                out.nll = nll;
                out.resp_token_count = count;
                std::vector<int> target{ex.emotion_id};
                if (has_emo_post_term(cfg_.variant))
                    out.emo_post = cross_entropy_sum(emo_net_->logits(z_post), target);
                if (has_emo_prior_term(cfg_.variant)) {
                    GaussianNodes pp = p;
                    if (stop_grad_prior_emo) {
                        pp.mu = make_constant(p.mu->val);
                        pp.log_var = make_constant(p.log_var->val);
                    }
                    Tensor z_prior = reparam_sample(pp, noise_prior);
                    out.emo_prior = cross_entropy_sum(emo_net_->logits(z_prior), target);
                }
                return out;
            }
        }
        throw std::invalid_argument("forward_train: unknown variant");
    }

    // test-time prior p(z|x,e) from the test-mode encoder layout
    DiagonalGaussian prior_distribution(const std::vector<int>& post_ids,
                                        EmotionLabel emotion) const {
        if (!variant_has_latent(cfg_.variant))
            throw std::logic_error("variant has no latent prior");
        NoGradGuard ng;
        auto layout = build_encoder_layout(post_ids, std::nullopt, emotion, LayoutMode::TEST);
        auto mask = build_encoder_mask(layout, cfg_.variant);
        Tensor h = encoder_->forward(layout, mask);
        // ENC_PRIOR is position 0 of the test layout
        Tensor row = slice_rows(h, 0, 1);
        GaussianNodes g = prior_net_->forward(row);
        return DiagonalGaussian{g.mu->val, g.log_var->val};
    }

    DiagonalGaussian posterior_distribution(const EncodedPair& ex) const {
        if (!variant_has_latent(cfg_.variant))
            throw std::logic_error("variant has no latent posterior");
        NoGradGuard ng;
        auto layout = build_encoder_layout(ex.post_ids, ex.resp_ids, EmotionLabel(ex.emotion_id),
                                           LayoutMode::TRAIN);
        auto mask = build_encoder_mask(layout, cfg_.variant);
        Tensor h = encoder_->forward(layout, mask);
        Tensor row = slice_rows(h, 0, 1);
        GaussianNodes g = posterior_net_->forward(row);
        return DiagonalGaussian{g.mu->val, g.log_var->val};
    }

    // initial decode state over the test-mode decoder prefix
    DecodeState begin_decode(const std::vector<int>& post_ids, EmotionLabel emotion,
                             const Mat* z) const {
        auto layout = build_decoder_layout(post_ids, std::nullopt, LayoutMode::TEST, cfg_.variant,
                                           emotion);
        auto mask = build_decoder_mask(layout);
        if (variant_has_latent(cfg_.variant)) {
            if (!z) throw std::invalid_argument("begin_decode: variant requires a z sample");
            return DecodeState(decoder_, layout, mask, z);
        }
        return DecodeState(decoder_, layout, mask, nullptr);
    }

  private:
    ModelConfig cfg_;
    Vocabulary vocab_;
    ParamStore params_;
    std::optional<Transformer> encoder_;
    Transformer decoder_;
    std::optional<GaussianNet> posterior_net_, prior_net_;
    std::optional<EmotionPredNet> emo_net_;
};

}  // namespace emocvae
