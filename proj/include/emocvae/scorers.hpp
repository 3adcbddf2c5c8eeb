#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/checkpoint.hpp"
#include "emocvae/corpus.hpp"
#include "emocvae/train.hpp"
#include "emocvae/transformer.hpp"

namespace emocvae {

struct ScorerConfig {
    TransformerConfig tf{2, 4, 48, 192, 64, 0, true};
    long steps = 500;
    int batch_size = 32;
    double lr = 1e-3;
    double holdout_fraction = 0.1;
};

inline AttentionMask full_attention(int n) {
    AttentionMask m(n);
    std::fill(m.allow.begin(), m.allow.end(), uint8_t(1));
    return m;
}

inline AttentionMask causal_attention(int n) {
    AttentionMask m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) m.set(i, j);
    return m;
}

namespace detail {

// shared Adam loop over an example-indexed loss builder
template <typename LossFn>
inline void run_training(ParamStore& params, size_t data_size, long steps, int batch_size,
                         double lr, Rng& rng, LossFn&& example_loss) {
    AdamOptimizer adam(lr);
    std::vector<size_t> order(data_size);
    for (size_t i = 0; i < data_size; ++i) order[i] = i;
    rng.shuffle(order);
    size_t cursor = 0;
    for (long step = 0; step < steps; ++step) {
        params.zero_grads();
        for (int b = 0; b < batch_size; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            Tensor loss = example_loss(order[cursor++]);
            if (!std::isfinite(loss->val.at(0, 0)))
                throw std::runtime_error("scorer training diverged at step " + std::to_string(step));
            backward(loss, 1.0 / double(batch_size));
        }
        adam.step(params);
    }
}

inline TokenLayout plain_layout(const std::vector<int>& ids, int segment) {
    TokenLayout L;
    for (int id : ids) L.push(TokenRole::RESP, segment, id);
    return L;
}

}  // namespace detail

// Sentence-level emotion classifier: mean-pooled transformer encoding of
// the response tokens, linear head over the 8 labels.
class EmotionClassifier {
  public:
    EmotionClassifier() = default;

    EmotionClassifier(const Vocabulary& vocab, const ScorerConfig& cfg, uint64_t seed)
        : vocab_(vocab), cfg_(cfg) {
        cfg_.tf.vocab_size = vocab_.size();
        Rng rng(seed);
        tf_ = Transformer(params_, "tf.", cfg_.tf, 0, rng, 0.02);
        head_w_ = params_.create("head.w", cfg_.tf.hidden_dim, kNumEmotions, rng, 0.02);
        head_b_ = params_.create_const("head.b", 1, kNumEmotions, 0.0);
    }

    Tensor logits(const std::vector<int>& resp_ids) const {
        if (resp_ids.empty()) throw std::invalid_argument("classifier: empty input");
        TokenLayout L = detail::plain_layout(resp_ids, 0);
        AttentionMask m = full_attention(L.size());
        Tensor h = tf_.forward(L, m);
        return add_rowvec(matmul(mean_rows(h), head_w_), head_b_);
    }

    int predict(const std::vector<int>& resp_ids) const {
        NoGradGuard ng;
        Mat l = logits(resp_ids)->val;
        int best = 0;
        for (int c = 1; c < l.cols; ++c)
            if (l.at(0, c) > l.at(0, best)) best = c;
        return best;
    }

    int predict_tokens(const std::vector<std::string>& tokens) const {
        return predict(vocab_.encode_tokens(tokens));
    }

    // returns held-out accuracy
    double train(const std::vector<ConversationPair>& labeled, uint64_t seed) {
        std::set<int> classes;
        for (const auto& p : labeled) classes.insert(p.emotion.id);
        if (classes.size() < 2)
            throw std::invalid_argument("classifier training needs at least 2 emotion classes");
        auto enc = encode_pairs(labeled, vocab_);
        Rng rng(seed * 31 + 5);
        std::vector<size_t> idx(enc.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        size_t holdout = std::max<size_t>(1, size_t(double(enc.size()) * cfg_.holdout_fraction));
        std::vector<size_t> eval_idx(idx.begin(), idx.begin() + long(holdout));
        std::vector<size_t> train_idx(idx.begin() + long(holdout), idx.end());
        if (train_idx.empty()) throw std::invalid_argument("classifier: corpus too small");
        Rng order_rng(seed * 63 + 9);
        detail::run_training(params_, train_idx.size(), cfg_.steps, cfg_.batch_size, cfg_.lr,
                             order_rng, [&](size_t i) {
                                 const EncodedPair& ex = enc[train_idx[i]];
                                 return cross_entropy_sum(logits(ex.resp_ids), {ex.emotion_id});
                             });
        int correct = 0;
        for (size_t i : eval_idx)
            if (predict(enc[i].resp_ids) == enc[i].emotion_id) ++correct;
        return double(correct) / double(eval_idx.size());
    }

    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }

    void save(const std::string& path) const { save_scorer(path, "classifier"); }
    static EmotionClassifier load(const std::string& path) {
        EmotionClassifier c;
        c.load_scorer(path, "classifier");
        return c;
    }

  protected:
    void save_scorer(const std::string& path, const std::string& kind) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
        os << kCheckpointMagic << '\n';
        std::map<std::string, std::string> meta;
        meta["kind"] = kind;
        meta["layers"] = std::to_string(cfg_.tf.layers);
        meta["heads"] = std::to_string(cfg_.tf.heads);
        meta["hidden_dim"] = std::to_string(cfg_.tf.hidden_dim);
        meta["ffn_dim"] = std::to_string(cfg_.tf.ffn_dim);
        meta["max_positions"] = std::to_string(cfg_.tf.max_positions);
        meta["tie_lm_head"] = cfg_.tf.tie_lm_head ? "1" : "0";
        write_meta(os, meta);
        write_vocab_section(os, vocab_);
        save_params(os, params_);
    }

    void load_scorer(const std::string& path, const std::string& kind) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
        std::string magic;
        if (!std::getline(is, magic) || magic != kCheckpointMagic)
            throw std::runtime_error("not an emocvae-ckpt-v1 file: " + path);
        auto meta = read_meta(is);
        if (meta.at("kind") != kind)
            throw std::runtime_error("checkpoint kind mismatch: expected " + kind + " in " + path);
        Vocabulary vocab = read_vocab_section(is);
        ScorerConfig cfg;
        cfg.tf.layers = std::stoi(meta.at("layers"));
        cfg.tf.heads = std::stoi(meta.at("heads"));
        cfg.tf.hidden_dim = std::stoi(meta.at("hidden_dim"));
        cfg.tf.ffn_dim = std::stoi(meta.at("ffn_dim"));
        cfg.tf.max_positions = std::stoi(meta.at("max_positions"));
        cfg.tf.tie_lm_head = meta.at("tie_lm_head") == "1";
        *this = EmotionClassifier(vocab, cfg, 0);
        load_params(is, params_);
    }

    Vocabulary vocab_;
    ScorerConfig cfg_;
    ParamStore params_;
    Transformer tf_;
    Tensor head_w_, head_b_;
};

// Topic coherence discriminator p(true | post, response). Both sequences go
// through the shared transformer tower; the decision statistic is a smooth
// maximum of response-token / post-token similarities, which is what topic
// coherence on this corpus reduces to. A joint concatenated encoding with a
// pooled head stays at chance from random initialization, so the two-tower
// readout is used instead. Negatives are derangement-shuffled pairs.
class TopicDiscriminator {
  public:
    TopicDiscriminator() = default;

    TopicDiscriminator(const Vocabulary& vocab, const ScorerConfig& cfg, uint64_t seed)
        : vocab_(vocab), cfg_(cfg) {
        cfg_.tf.vocab_size = vocab_.size();
        Rng rng(seed);
        tf_ = Transformer(params_, "tf.", cfg_.tf, 0, rng, 0.02);
        scale_ = params_.create_const("head.scale", 1, 1, 1.0);
        bias_ = params_.create_const("head.bias", 1, 1, 0.0);
    }

    Tensor encode_side(const std::vector<int>& ids, int segment) const {
        TokenLayout L;
        for (int id : ids) L.push(TokenRole::RESP, segment, id);
        AttentionMask m = full_attention(L.size());
        return tf_.forward(L, m);
    }

    Tensor logits(const std::vector<int>& post_ids, const std::vector<int>& resp_ids) const {
        if (post_ids.empty() || resp_ids.empty())
            throw std::invalid_argument("tcd: empty input");
        Tensor sims = matmul_nt(encode_side(resp_ids, 1), encode_side(post_ids, 0));
        // row-wise log-sum-exp as a smooth max over post positions
        Tensor lse = slice_cols(add(sims, scale(log_softmax_rows(sims), -1.0)), 0, 1);
        Tensor s = add(hadamard(mean_rows(lse), scale_), bias_);
        return concat_cols({make_constant(Mat(1, 1)), s});
    }

    // p(true | post, response) in [0, 1]
    double score(const std::vector<int>& post_ids, const std::vector<int>& resp_ids) const {
        NoGradGuard ng;
        Mat l = logits(post_ids, resp_ids)->val;
        double mx = std::max(l.at(0, 0), l.at(0, 1));
        double e0 = std::exp(l.at(0, 0) - mx), e1 = std::exp(l.at(0, 1) - mx);
        return e1 / (e0 + e1);
    }

    double score_tokens(const std::vector<std::string>& post,
                        const std::vector<std::string>& resp) const {
        return score(vocab_.encode_tokens(post), vocab_.encode_tokens(resp));
    }

    // returns held-out accuracy over balanced positives and negatives
    double train(const std::vector<ConversationPair>& pairs, uint64_t seed) {
        if (pairs.size() < 2) throw std::invalid_argument("tcd training needs at least 2 pairs");
        std::set<std::string> distinct_posts;
        for (const auto& p : pairs) distinct_posts.insert(join_tokens(p.post));
        if (distinct_posts.size() < 2)
            throw std::invalid_argument("tcd: all posts identical, cannot build negatives");
        auto enc = encode_pairs(pairs, vocab_);
        // derangement of response indices (Sattolo cycle: no fixed points)
        Rng rng(seed * 131 + 7);
        std::vector<size_t> shuffled(enc.size());
        for (size_t i = 0; i < enc.size(); ++i) shuffled[i] = i;
        for (size_t i = shuffled.size() - 1; i > 0; --i)
            std::swap(shuffled[i], shuffled[size_t(rng.below(i))]);

        struct Example {
            size_t post_idx;
            size_t resp_idx;
            int label;
        };
        std::vector<Example> data;
        for (size_t i = 0; i < enc.size(); ++i) {
            data.push_back({i, i, 1});
            data.push_back({i, shuffled[i], 0});
        }
        Rng split_rng(seed * 17 + 3);
        std::vector<size_t> idx(data.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        split_rng.shuffle(idx);
        size_t holdout = std::max<size_t>(2, size_t(double(data.size()) * cfg_.holdout_fraction));
        std::vector<size_t> eval_idx(idx.begin(), idx.begin() + long(holdout));
        std::vector<size_t> train_idx(idx.begin() + long(holdout), idx.end());
        Rng order_rng(seed * 257 + 11);
        detail::run_training(params_, train_idx.size(), cfg_.steps, cfg_.batch_size, cfg_.lr,
                             order_rng, [&](size_t i) {
                                 const Example& e = data[train_idx[i]];
                                 return cross_entropy_sum(
                                     logits(enc[e.post_idx].post_ids, enc[e.resp_idx].resp_ids),
                                     {e.label});
                             });
        int correct = 0;
        for (size_t i : eval_idx) {
            const Example& e = data[i];
            double s = score(enc[e.post_idx].post_ids, enc[e.resp_idx].resp_ids);
            if ((s >= 0.5 ? 1 : 0) == e.label) ++correct;
        }
        return double(correct) / double(eval_idx.size());
    }

    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
        os << kCheckpointMagic << '\n';
        std::map<std::string, std::string> meta;
        meta["kind"] = "tcd";
        meta["layers"] = std::to_string(cfg_.tf.layers);
        meta["heads"] = std::to_string(cfg_.tf.heads);
        meta["hidden_dim"] = std::to_string(cfg_.tf.hidden_dim);
        meta["ffn_dim"] = std::to_string(cfg_.tf.ffn_dim);
        meta["max_positions"] = std::to_string(cfg_.tf.max_positions);
        meta["tie_lm_head"] = cfg_.tf.tie_lm_head ? "1" : "0";
        write_meta(os, meta);
        write_vocab_section(os, vocab_);
        save_params(os, params_);
    }

    static TopicDiscriminator load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
        std::string magic;
        if (!std::getline(is, magic) || magic != kCheckpointMagic)
            throw std::runtime_error("not an emocvae-ckpt-v1 file: " + path);
        auto meta = read_meta(is);
        if (meta.at("kind") != "tcd")
            throw std::runtime_error("checkpoint kind mismatch: expected tcd in " + path);
        Vocabulary vocab = read_vocab_section(is);
        ScorerConfig cfg;
        cfg.tf.layers = std::stoi(meta.at("layers"));
        cfg.tf.heads = std::stoi(meta.at("heads"));
        cfg.tf.hidden_dim = std::stoi(meta.at("hidden_dim"));
        cfg.tf.ffn_dim = std::stoi(meta.at("ffn_dim"));
        cfg.tf.max_positions = std::stoi(meta.at("max_positions"));
        cfg.tf.tie_lm_head = meta.at("tie_lm_head") == "1";
        TopicDiscriminator t(vocab, cfg, 0);
        load_params(is, t.params_);
        return t;
    }

  private:
    Vocabulary vocab_;
    ScorerConfig cfg_;
    ParamStore params_;
    Transformer tf_;
    Tensor scale_, bias_;
};

// Causal language model over responses; used only for the PPL metric.
class EvalLm {
  public:
    EvalLm() = default;

    EvalLm(const Vocabulary& vocab, const ScorerConfig& cfg, uint64_t seed)
        : vocab_(vocab), cfg_(cfg) {
        cfg_.tf.vocab_size = vocab_.size();
        Rng rng(seed);
        tf_ = Transformer(params_, "tf.", cfg_.tf, 0, rng, 0.02);
    }

    // teacher-forced loss node over [SOS] resp [EOS]
    Tensor loss(const std::vector<int>& resp_ids) const {
        if (resp_ids.empty()) throw std::invalid_argument("eval lm: empty input");
        TokenLayout L;
        L.push(TokenRole::SOS, 0, TOK_SOS);
        for (int id : resp_ids) L.push(TokenRole::RESP, 0, id);
        AttentionMask m = causal_attention(L.size());
        Tensor h = tf_.forward(L, m);
        Tensor logits = tf_.lm_logits(h);
        std::vector<int> targets(size_t(L.size()), -1);
        for (size_t t = 0; t < resp_ids.size(); ++t) targets[t] = resp_ids[t];
        targets[resp_ids.size()] = TOK_EOS;
        return cross_entropy_sum(logits, targets);
    }

    // (summed NLL, token count) with EOS counted
    std::pair<double, int> nll(const std::vector<int>& resp_ids) const {
        NoGradGuard ng;
        Tensor l = loss(resp_ids);
        return {l->val.at(0, 0), int(resp_ids.size()) + 1};
    }

    double perplexity(const std::vector<std::vector<int>>& responses) const {
        double total = 0.0;
        long count = 0;
        for (const auto& r : responses) {
            auto [s, c] = nll(r);
            total += s;
            count += c;
        }
        if (count == 0) throw std::invalid_argument("perplexity: no tokens");
        return std::exp(total / double(count));
    }

    // returns held-out perplexity
    double train(const std::vector<std::vector<int>>& responses, uint64_t seed) {
        if (responses.empty()) throw std::invalid_argument("eval lm: empty corpus");
        Rng split_rng(seed * 41 + 13);
        std::vector<size_t> idx(responses.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        split_rng.shuffle(idx);
        size_t holdout = std::max<size_t>(1, size_t(double(responses.size()) * cfg_.holdout_fraction));
        if (responses.size() == 1) holdout = 0;  // memorization probe corpora
        std::vector<size_t> eval_idx(idx.begin(), idx.begin() + long(holdout));
        std::vector<size_t> train_idx(idx.begin() + long(holdout), idx.end());
        Rng order_rng(seed * 97 + 29);
        detail::run_training(params_, train_idx.size(), cfg_.steps, cfg_.batch_size, cfg_.lr,
                             order_rng,
                             [&](size_t i) { return loss(responses[train_idx[i]]); });
        std::vector<std::vector<int>> eval_set;
        for (size_t i : eval_idx) eval_set.push_back(responses[i]);
        if (eval_set.empty())
            for (size_t i : train_idx) eval_set.push_back(responses[i]);
        return perplexity(eval_set);
    }

    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
        os << kCheckpointMagic << '\n';
        std::map<std::string, std::string> meta;
        meta["kind"] = "evallm";
        meta["layers"] = std::to_string(cfg_.tf.layers);
        meta["heads"] = std::to_string(cfg_.tf.heads);
        meta["hidden_dim"] = std::to_string(cfg_.tf.hidden_dim);
        meta["ffn_dim"] = std::to_string(cfg_.tf.ffn_dim);
        meta["max_positions"] = std::to_string(cfg_.tf.max_positions);
        meta["tie_lm_head"] = cfg_.tf.tie_lm_head ? "1" : "0";
        write_meta(os, meta);
        write_vocab_section(os, vocab_);
        save_params(os, params_);
    }

    static EvalLm load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
        std::string magic;
        if (!std::getline(is, magic) || magic != kCheckpointMagic)
            throw std::runtime_error("not an emocvae-ckpt-v1 file: " + path);
        auto meta = read_meta(is);
        if (meta.at("kind") != "evallm")
            throw std::runtime_error("checkpoint kind mismatch: expected evallm in " + path);
        Vocabulary vocab = read_vocab_section(is);
        ScorerConfig cfg;
        cfg.tf.layers = std::stoi(meta.at("layers"));
        cfg.tf.heads = std::stoi(meta.at("heads"));
        cfg.tf.hidden_dim = std::stoi(meta.at("hidden_dim"));
        cfg.tf.ffn_dim = std::stoi(meta.at("ffn_dim"));
        cfg.tf.max_positions = std::stoi(meta.at("max_positions"));
        cfg.tf.tie_lm_head = meta.at("tie_lm_head") == "1";
        EvalLm lm(vocab, cfg, 0);
        load_params(is, lm.params_);
        return lm;
    }

  private:
    Vocabulary vocab_;
    ScorerConfig cfg_;
    ParamStore params_;
    Transformer tf_;
};

}  // namespace emocvae
