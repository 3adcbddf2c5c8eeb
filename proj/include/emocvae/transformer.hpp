#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/autodiff.hpp"
#include "emocvae/masks.hpp"
#include "emocvae/params.hpp"

namespace emocvae {

struct TransformerConfig {
    int layers = 2;
    int heads = 4;
    int hidden_dim = 64;
    int ffn_dim = 256;
    int max_positions = 64;
    int vocab_size = 0;
    bool tie_lm_head = true;

    void validate() const {
        if (layers < 1 || heads < 1 || hidden_dim < 1 || ffn_dim < 1 || max_positions < 1 ||
            vocab_size < 1)
            throw std::invalid_argument("transformer config: counts must be >= 1");
        if (hidden_dim % heads != 0)
            throw std::invalid_argument("transformer config: hidden_dim not divisible by heads");
    }
};

inline std::shared_ptr<const std::vector<uint8_t>> mask_bits(const AttentionMask& m) {
    return std::make_shared<const std::vector<uint8_t>>(m.allow);
}

// Pre-norm self-attention stack shared by the encoder and decoder roles.
// A TokenLayout plus AttentionMask fully determines the forward pass; the
// same parameters serve both the training graph and the plain-matrix
// incremental decoding path.
class Transformer {
  public:
    Transformer() = default;

    Transformer(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg,
                int latent_dim, Rng& rng, double init_scale = 0.02)
        : cfg_(cfg), latent_dim_(latent_dim) {
        cfg_.validate();
        auto P = [&](const std::string& n, int r, int c) {
            return store.create(prefix + n, r, c, rng, init_scale);
        };
        auto ones = [&](const std::string& n, int c) { return store.create_const(prefix + n, 1, c, 1.0); };
        auto zeros = [&](const std::string& n, int c) { return store.create_const(prefix + n, 1, c, 0.0); };
        int d = cfg_.hidden_dim;
        tok_emb_ = P("tok_emb", cfg_.vocab_size, d);
        seg_emb_ = P("seg_emb", 2, d);
        pos_emb_ = P("pos_emb", cfg_.max_positions, d);
        if (latent_dim_ > 0) {
            z_proj_w_ = P("z_proj.w", latent_dim_, d);
            z_proj_b_ = zeros("z_proj.b", d);
        }
        for (int l = 0; l < cfg_.layers; ++l) {
            std::string lp = "layer" + std::to_string(l) + ".";
            Layer L;
            L.ln1_g = ones(lp + "ln1.g", d);
            L.ln1_b = zeros(lp + "ln1.b", d);
            L.wq = P(lp + "attn.wq", d, d);
            L.bq = zeros(lp + "attn.bq", d);
            L.wk = P(lp + "attn.wk", d, d);
            L.bk = zeros(lp + "attn.bk", d);
            L.wv = P(lp + "attn.wv", d, d);
            L.bv = zeros(lp + "attn.bv", d);
            L.wo = P(lp + "attn.wo", d, d);
            L.bo = zeros(lp + "attn.bo", d);
            L.ln2_g = ones(lp + "ln2.g", d);
            L.ln2_b = zeros(lp + "ln2.b", d);
            L.w1 = P(lp + "ffn.w1", d, cfg_.ffn_dim);
            L.b1 = zeros(lp + "ffn.b1", cfg_.ffn_dim);
            L.w2 = P(lp + "ffn.w2", cfg_.ffn_dim, d);
            L.b2 = zeros(lp + "ffn.b2", d);
            layers_.push_back(L);
        }
        lnf_g_ = ones("lnf.g", d);
        lnf_b_ = zeros("lnf.b", d);
        lm_bias_ = zeros("lm.bias", cfg_.vocab_size);
        if (!cfg_.tie_lm_head) lm_w_ = P("lm.w", d, cfg_.vocab_size);
    }

    const TransformerConfig& config() const { return cfg_; }
    int latent_dim() const { return latent_dim_; }

    // token + segment + position embeddings; the Z slot's token embedding is
    // replaced by a learned projection of the latent vector
    Tensor embed(const TokenLayout& layout, const Tensor& z = nullptr) const {
        std::vector<int> ids = layout.vocab_ids();
        int zpos = layout.find_role(TokenRole::Z);
        if (zpos >= 0) {
            if (!z) throw std::invalid_argument("embed: layout has a Z slot but no z vector");
            if (z->val.rows != 1 || z->val.cols != latent_dim_)
                throw std::invalid_argument("embed: z vector has wrong dimension");
            ids[size_t(zpos)] = -1;
        }
        for (const auto& it : layout.items)
            if (it.position >= cfg_.max_positions)
                throw std::invalid_argument("embed: layout exceeds max_positions");
        Tensor tok = row_select(tok_emb_, ids);
        if (zpos >= 0) {
            Tensor zrow = add_rowvec(matmul(z, z_proj_w_), z_proj_b_);
            tok = add_row_at(tok, zpos, zrow);
        }
        Tensor seg = row_select(seg_emb_, layout.segments());
        std::vector<int> positions;
        positions.reserve(layout.items.size());
        for (const auto& it : layout.items) positions.push_back(it.position);
        Tensor pos = row_select(pos_emb_, positions);
        return add(add(tok, seg), pos);
    }

    Tensor encode(Tensor h, const std::shared_ptr<const std::vector<uint8_t>>& allow) const {
        int n = h->val.rows;
        if (allow->size() != size_t(n) * size_t(n))
            throw std::invalid_argument("encode: mask side must equal row count");
        int d = cfg_.hidden_dim, dh = d / cfg_.heads;
        double inv_sqrt = 1.0 / std::sqrt(double(dh));
        for (size_t l = 0; l < layers_.size(); ++l) {
            const Layer& L = layers_[l];
            Tensor x = layer_norm(h, L.ln1_g, L.ln1_b);
            Tensor q = add_rowvec(matmul(x, L.wq), L.bq);
            Tensor k = add_rowvec(matmul(x, L.wk), L.bk);
            Tensor v = add_rowvec(matmul(x, L.wv), L.bv);
            std::vector<Tensor> heads;
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
                Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
                Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
                Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
                Tensor attn = masked_softmax_rows(scores, allow);
                heads.push_back(matmul(attn, vh));
            }
            Tensor o = concat_cols(heads);
            h = add(h, add_rowvec(matmul(o, L.wo), L.bo));
            Tensor x2 = layer_norm(h, L.ln2_g, L.ln2_b);
            Tensor f = gelu(add_rowvec(matmul(x2, L.w1), L.b1));
            h = add(h, add_rowvec(matmul(f, L.w2), L.b2));
            if (!h->val.all_finite())
                throw std::runtime_error("non-finite activations at layer " + std::to_string(l));
        }
        return layer_norm(h, lnf_g_, lnf_b_);
    }

    Tensor forward(const TokenLayout& layout, const AttentionMask& mask,
                   const Tensor& z = nullptr) const {
        return encode(embed(layout, z), mask_bits(mask));
    }

    Tensor lm_logits(Tensor h) const {
        if (cfg_.tie_lm_head) return add_rowvec(matmul_nt(h, tok_emb_), lm_bias_);
        return add_rowvec(matmul(h, lm_w_), lm_bias_);
    }

    // ---- plain-matrix inference path (used by incremental decoding) ----

    Mat project_z(const Mat& z) const {
        Mat out(1, cfg_.hidden_dim);
        matmul_acc(z, z_proj_w_->val, out);
        for (int c = 0; c < out.cols; ++c) out.at(0, c) += z_proj_b_->val.at(0, c);
        return out;
    }

    Mat embed_rows(const TokenLayout& layout, const Mat* z) const {
        int d = cfg_.hidden_dim;
        Mat h(layout.size(), d);
        int zpos = layout.find_role(TokenRole::Z);
        Mat zrow;
        if (zpos >= 0) {
            if (!z) throw std::invalid_argument("embed_rows: missing z");
            zrow = project_z(*z);
        }
        for (int i = 0; i < layout.size(); ++i) {
            const auto& it = layout.items[size_t(i)];
            double* hrow = h.row(i);
            if (i == zpos) {
                for (int c = 0; c < d; ++c) hrow[c] = zrow.at(0, c);
            } else {
                const double* te = tok_emb_->val.row(it.vocab_id);
                for (int c = 0; c < d; ++c) hrow[c] = te[c];
            }
            const double* se = seg_emb_->val.row(it.segment);
            const double* pe = pos_emb_->val.row(it.position);
            for (int c = 0; c < d; ++c) hrow[c] += se[c] + pe[c];
        }
        return h;
    }

    Mat logits_row(const Mat& hidden_row) const {
        Mat out(1, cfg_.vocab_size);
        if (cfg_.tie_lm_head)
            matmul_nt_acc(hidden_row, tok_emb_->val, out);
        else
            matmul_acc(hidden_row, lm_w_->val, out);
        for (int c = 0; c < out.cols; ++c) out.at(0, c) += lm_bias_->val.at(0, c);
        return out;
    }

    struct Layer {
        Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };
    const std::vector<Layer>& layers() const { return layers_; }
    Tensor token_embedding() const { return tok_emb_; }
    Tensor segment_embedding() const { return seg_emb_; }
    Tensor position_embedding() const { return pos_emb_; }
    Tensor final_ln_gain() const { return lnf_g_; }
    Tensor final_ln_bias() const { return lnf_b_; }

    static void layer_norm_rows(Mat& x, const Mat& g, const Mat& b, double eps = 1e-5) {
        for (int r = 0; r < x.rows; ++r) {
            double* xr = x.row(r);
            double mu = 0.0;
            for (int c = 0; c < x.cols; ++c) mu += xr[c];
            mu /= x.cols;
            double var = 0.0;
            for (int c = 0; c < x.cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
            var /= x.cols;
            double is = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < x.cols; ++c)
                xr[c] = (xr[c] - mu) * is * g.at(0, c) + b.at(0, c);
        }
    }

    static Mat linear_rows(const Mat& x, const Mat& w, const Mat& b) {
        Mat out(x.rows, w.cols);
        matmul_acc(x, w, out);
        for (int r = 0; r < out.rows; ++r) {
            double* orow = out.row(r);
            for (int c = 0; c < out.cols; ++c) orow[c] += b.at(0, c);
        }
        return out;
    }

    static void gelu_rows(Mat& x) {
        for (auto& v : x.a) v = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
    }

  private:
    TransformerConfig cfg_;
    int latent_dim_ = 0;
    Tensor tok_emb_, seg_emb_, pos_emb_, z_proj_w_, z_proj_b_;
    std::vector<Layer> layers_;
    Tensor lnf_g_, lnf_b_, lm_w_, lm_bias_;
};

// Incremental decoding state: the condition prefix ([z]/[Emotion] + post +
// [SOS]) is computed once under its exact mask; per-layer key/value rows are
// cached, and each appended response token attends everything cached so far,
// which matches the decoder mask rule for response tokens. Output-equivalent
// to a batch forward because nothing ever attends a later position.
class DecodeState {
  public:
    DecodeState() = default;

    DecodeState(const Transformer& tf, const TokenLayout& prefix_layout,
                const AttentionMask& prefix_mask, const Mat* z)
        : tf_(&tf), layout_(prefix_layout) {
        const auto& cfg = tf.config();
        int n = prefix_layout.size(), d = cfg.hidden_dim, dh = d / cfg.heads;
        double inv_sqrt = 1.0 / std::sqrt(double(dh));
        Mat h = tf.embed_rows(prefix_layout, z);
        K_.assign(size_t(cfg.layers), Mat());
        V_.assign(size_t(cfg.layers), Mat());
        for (int l = 0; l < cfg.layers; ++l) {
            const auto& L = tf.layers()[size_t(l)];
            Mat x = h;
            Transformer::layer_norm_rows(x, L.ln1_g->val, L.ln1_b->val);
            Mat q = Transformer::linear_rows(x, L.wq->val, L.bq->val);
            Mat k = Transformer::linear_rows(x, L.wk->val, L.bk->val);
            Mat v = Transformer::linear_rows(x, L.wv->val, L.bv->val);
            K_[size_t(l)] = k;
            V_[size_t(l)] = v;
            Mat attn_out(n, d);
            for (int hd = 0; hd < cfg.heads; ++hd) {
                int c0 = hd * dh;
                for (int i = 0; i < n; ++i) {
                    // masked softmax over allowed columns, exact zeros elsewhere
                    double mx = -1e300;
                    bool any = false;
                    std::vector<double> s(size_t(n), 0.0);
                    for (int j = 0; j < n; ++j) {
                        if (!prefix_mask.at(i, j)) continue;
                        double dot = 0.0;
                        for (int c = 0; c < dh; ++c) dot += q.at(i, c0 + c) * k.at(j, c0 + c);
                        s[size_t(j)] = dot * inv_sqrt;
                        mx = std::max(mx, s[size_t(j)]);
                        any = true;
                    }
                    if (!any) continue;
                    double zsum = 0.0;
                    for (int j = 0; j < n; ++j)
                        if (prefix_mask.at(i, j)) zsum += std::exp(s[size_t(j)] - mx);
                    for (int j = 0; j < n; ++j) {
                        if (!prefix_mask.at(i, j)) continue;
                        double w = std::exp(s[size_t(j)] - mx) / zsum;
                        for (int c = 0; c < dh; ++c) attn_out.at(i, c0 + c) += w * v.at(j, c0 + c);
                    }
                }
            }
            Mat proj = Transformer::linear_rows(attn_out, L.wo->val, L.bo->val);
            add_inplace(h, proj);
            Mat x2 = h;
            Transformer::layer_norm_rows(x2, L.ln2_g->val, L.ln2_b->val);
            Mat f = Transformer::linear_rows(x2, L.w1->val, L.b1->val);
            Transformer::gelu_rows(f);
            Mat f2 = Transformer::linear_rows(f, L.w2->val, L.b2->val);
            add_inplace(h, f2);
        }
        Mat hl = h;
        Transformer::layer_norm_rows(hl, tf.final_ln_gain()->val, tf.final_ln_bias()->val);
        Mat last(1, d);
        for (int c = 0; c < d; ++c) last.at(0, c) = hl.at(n - 1, c);
        last_logits_ = tf.logits_row(last);
    }

    // append one generated token; returns logits for the next prediction
    const Mat& append(int token_id) {
        const auto& cfg = tf_->config();
        int d = cfg.hidden_dim, dh = d / cfg.heads;
        double inv_sqrt = 1.0 / std::sqrt(double(dh));
        int position = layout_.size();
        if (position >= cfg.max_positions) throw std::runtime_error("decode exceeded max_positions");
        layout_.push(token_id == TOK_EOS ? TokenRole::EOS : TokenRole::RESP, 1, token_id);
        Mat h(1, d);
        {
            const auto& it = layout_.items.back();
            const double* te = tf_->token_embedding()->val.row(token_id);
            const double* se = tf_->segment_embedding()->val.row(it.segment);
            const double* pe = tf_->position_embedding()->val.row(it.position);
            for (int c = 0; c < d; ++c) h.at(0, c) = te[c] + se[c] + pe[c];
        }
        for (int l = 0; l < cfg.layers; ++l) {
            const auto& L = tf_->layers()[size_t(l)];
            Mat x = h;
            Transformer::layer_norm_rows(x, L.ln1_g->val, L.ln1_b->val);
            Mat q = Transformer::linear_rows(x, L.wq->val, L.bq->val);
            Mat k = Transformer::linear_rows(x, L.wk->val, L.bk->val);
            Mat v = Transformer::linear_rows(x, L.wv->val, L.bv->val);
            Mat& Kc = K_[size_t(l)];
            Mat& Vc = V_[size_t(l)];
            // grow caches by one row
            Mat K2(Kc.rows + 1, d), V2(Vc.rows + 1, d);
            std::copy(Kc.a.begin(), Kc.a.end(), K2.a.begin());
            std::copy(Vc.a.begin(), Vc.a.end(), V2.a.begin());
            for (int c = 0; c < d; ++c) {
                K2.at(K2.rows - 1, c) = k.at(0, c);
                V2.at(V2.rows - 1, c) = v.at(0, c);
            }
            Kc = std::move(K2);
            Vc = std::move(V2);
            int m = Kc.rows;
            Mat attn_out(1, d);
            for (int hd = 0; hd < cfg.heads; ++hd) {
                int c0 = hd * dh;
                std::vector<double> s(size_t(m), 0.0);
                double mx = -1e300;
                for (int j = 0; j < m; ++j) {
                    double dot = 0.0;
                    for (int c = 0; c < dh; ++c) dot += q.at(0, c0 + c) * Kc.at(j, c0 + c);
                    s[size_t(j)] = dot * inv_sqrt;
                    mx = std::max(mx, s[size_t(j)]);
                }
                double zsum = 0.0;
                for (int j = 0; j < m; ++j) zsum += std::exp(s[size_t(j)] - mx);
                for (int j = 0; j < m; ++j) {
                    double w = std::exp(s[size_t(j)] - mx) / zsum;
                    for (int c = 0; c < dh; ++c) attn_out.at(0, c0 + c) += w * Vc.at(j, c0 + c);
                }
            }
            Mat proj = Transformer::linear_rows(attn_out, L.wo->val, L.bo->val);
            add_inplace(h, proj);
            Mat x2 = h;
            Transformer::layer_norm_rows(x2, L.ln2_g->val, L.ln2_b->val);
            Mat f = Transformer::linear_rows(x2, L.w1->val, L.b1->val);
            Transformer::gelu_rows(f);
            Mat f2 = Transformer::linear_rows(f, L.w2->val, L.b2->val);
            add_inplace(h, f2);
        }
        Transformer::layer_norm_rows(h, tf_->final_ln_gain()->val, tf_->final_ln_bias()->val);
        last_logits_ = tf_->logits_row(h);
        return last_logits_;
    }

    const Mat& logits() const { return last_logits_; }
    const TokenLayout& layout() const { return layout_; }
    int length() const { return layout_.size(); }

  private:
    const Transformer* tf_ = nullptr;
    TokenLayout layout_;
    std::vector<Mat> K_, V_;
    Mat last_logits_;
};

}  // namespace emocvae
