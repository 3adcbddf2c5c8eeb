#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/autodiff.hpp"
#include "emocvae/corpus.hpp"
#include "emocvae/params.hpp"

namespace emocvae {

constexpr double kLogVarClampLo = -10.0;
constexpr double kLogVarClampHi = 10.0;

// (mu, log variance) rows of a diagonal Gaussian; plain values for
// inference-side code.
struct DiagonalGaussian {
    Mat mu;       // 1 x d
    Mat log_var;  // 1 x d

    int dim() const { return mu.cols; }
};

struct LatentSample {
    Mat z;  // 1 x d
    enum class Source { POSTERIOR, PRIOR } source = Source::POSTERIOR;
};

// graph-side pair
struct GaussianNodes {
    Tensor mu;
    Tensor log_var;
};

// Single affine map from an encoding row to concatenated (mu, log var),
// followed by the log-variance clamp.
class GaussianNet {
  public:
    GaussianNet() = default;
    GaussianNet(ParamStore& store, const std::string& prefix, int hidden_dim, int latent_dim,
                Rng& rng, double init_scale = 0.02)
        : latent_dim_(latent_dim) {
        w_ = store.create(prefix + "w", hidden_dim, 2 * latent_dim, rng, init_scale);
        b_ = store.create_const(prefix + "b", 1, 2 * latent_dim, 0.0);
    }

    GaussianNodes forward(const Tensor& enc_row) const {
        if (enc_row->val.rows != 1 || enc_row->val.cols != w_->val.rows)
            throw std::invalid_argument("gaussian net: input dimension mismatch");
        Tensor out = add_rowvec(matmul(enc_row, w_), b_);
        GaussianNodes g;
        g.mu = slice_cols(out, 0, latent_dim_);
        g.log_var = clamp_t(slice_cols(out, latent_dim_, 2 * latent_dim_), kLogVarClampLo,
                            kLogVarClampHi);
        return g;
    }

    DiagonalGaussian forward_value(const Mat& enc_row) const {
        NoGradGuard ng;
        GaussianNodes g = forward(make_constant(enc_row));
        return DiagonalGaussian{g.mu->val, g.log_var->val};
    }

    int latent_dim() const { return latent_dim_; }

  private:
    int latent_dim_ = 0;
    Tensor w_, b_;
};

// KL(q || p), closed form, non-negative up to numerical slack.
inline double kl_divergence(const DiagonalGaussian& q, const DiagonalGaussian& p) {
    if (q.dim() != p.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
    double kl = 0.0;
    for (int c = 0; c < q.dim(); ++c) {
        double mq = q.mu.at(0, c), lq = q.log_var.at(0, c);
        double mp = p.mu.at(0, c), lp = p.log_var.at(0, c);
        kl += 0.5 * (lp - lq + (std::exp(lq) + (mq - mp) * (mq - mp)) * std::exp(-lp) - 1.0);
    }
    return kl;
}

// z = mu + exp(log_var / 2) * noise, differentiable in mu and log_var
inline Tensor reparam_sample(const GaussianNodes& g, const Mat& noise) {
    if (noise.rows != 1 || noise.cols != g.mu->val.cols)
        throw std::invalid_argument("reparam_sample: noise length mismatch");
    Tensor sigma = exp_t(scale(g.log_var, 0.5));
    return add(g.mu, hadamard(sigma, make_constant(noise)));
}

inline LatentSample sample_value(const DiagonalGaussian& d, const Mat& noise,
                                 LatentSample::Source src) {
    if (noise.rows != 1 || noise.cols != d.dim())
        throw std::invalid_argument("sample: noise length mismatch");
    LatentSample s;
    s.source = src;
    s.z = Mat(1, d.dim());
    for (int c = 0; c < d.dim(); ++c)
        s.z.at(0, c) = d.mu.at(0, c) + std::exp(0.5 * d.log_var.at(0, c)) * noise.at(0, c);
    return s;
}

// tanh MLP from z to log probabilities over the 8 emotions
class EmotionPredNet {
  public:
    EmotionPredNet() = default;
    EmotionPredNet(ParamStore& store, const std::string& prefix, int latent_dim, Rng& rng,
                   double init_scale = 0.02) {
        w1_ = store.create(prefix + "w1", latent_dim, latent_dim, rng, init_scale);
        b1_ = store.create_const(prefix + "b1", 1, latent_dim, 0.0);
        w2_ = store.create(prefix + "w2", latent_dim, kNumEmotions, rng, init_scale);
        b2_ = store.create_const(prefix + "b2", 1, kNumEmotions, 0.0);
    }

    Tensor logits(const Tensor& z) const {
        Tensor hidden = tanh_t(add_rowvec(matmul(z, w1_), b1_));
        return add_rowvec(matmul(hidden, w2_), b2_);
    }

    Tensor log_probs(const Tensor& z) const { return log_softmax_rows(logits(z)); }

    Mat log_probs_value(const Mat& z) const {
        NoGradGuard ng;
        return log_probs(make_constant(z))->val;
    }

    int predict(const Mat& z) const {
        Mat lp = log_probs_value(z);
        int best = 0;
        for (int c = 1; c < lp.cols; ++c)
            if (lp.at(0, c) > lp.at(0, best)) best = c;
        return best;
    }

  private:
    Tensor w1_, b1_, w2_, b2_;
};

}  // namespace emocvae
