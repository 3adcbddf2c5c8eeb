#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/decode.hpp"
#include "emocvae/scorers.hpp"

namespace emocvae {

struct RerankConfig {
    double lambda = 0.5;

    void validate() const {
        if (lambda < 0.0) throw std::invalid_argument("rerank lambda must be >= 0");
    }
};

inline double score_emo(const std::vector<std::string>& response, EmotionLabel target,
                        const EmotionClassifier& classifier) {
    return classifier.predict_tokens(response) == target.id ? 1.0 : 0.0;
}

inline double score_rele(const std::vector<std::string>& post,
                         const std::vector<std::string>& response,
                         const TopicDiscriminator& tcd) {
    return tcd.score_tokens(post, response);
}

// Sort descending by combined = score_rele + lambda * score_emo; ties broken
// by higher log_prob, then lexicographic tokens, so the order is total.
inline void rerank(std::vector<GenerationCandidate>& candidates, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("rerank lambda must be >= 0");
    for (auto& c : candidates) {
        if (c.score_emo < 0.0 || c.score_rele < 0.0)
            throw std::invalid_argument("rerank: candidates must be scored first");
        c.combined = c.score_rele + lambda * c.score_emo;
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const GenerationCandidate& a, const GenerationCandidate& b) {
                  if (a.combined != b.combined) return a.combined > b.combined;
                  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                  return a.tokens < b.tokens;
              });
}

// ---- objective metrics ----

struct EvalEntry {
    std::vector<int> tokens;
    int target_emotion = 0;
    double score_emo = 0.0;
    double score_rele = 0.0;
};

struct EvalReport {
    double emo_acc_pct = 0.0;
    double rele = 0.0;
    double distinct1 = 0.0;
    double distinct2 = 0.0;
    double uniq_pct = 0.0;
    double ppl = 0.0;
    std::array<double, kNumEmotions> per_emotion_acc{};
    std::array<int, kNumEmotions> per_emotion_count{};

    std::string table() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        os << "EmoAcc(%)  Rele    Distinct-1/2     Uniq(%)  PPL\n";
        os << std::setprecision(2) << emo_acc_pct << "      " << std::setprecision(4) << rele
           << "  " << distinct1 << "/" << distinct2 << "  " << std::setprecision(2) << uniq_pct
           << "    " << ppl << "\n";
        return os.str();
    }

    std::string csv_row() const {
        std::ostringstream os;
        os << emo_acc_pct << ',' << rele << ',' << distinct1 << ',' << distinct2 << ','
           << uniq_pct << ',' << ppl;
        return os.str();
    }
};

inline EvalReport compute_metrics(const std::vector<EvalEntry>& entries, const EvalLm* lm) {
    if (entries.empty()) throw std::invalid_argument("compute_metrics: no candidates");
    EvalReport r;
    std::set<int> unigrams;
    std::set<std::pair<int, int>> bigrams;
    std::set<std::vector<int>> sentences;
    long total_uni = 0, total_bi = 0;
    double lm_nll = 0.0;
    long lm_tokens = 0;
    for (const auto& e : entries) {
        r.emo_acc_pct += e.score_emo;
        r.rele += e.score_rele;
        r.per_emotion_acc[size_t(e.target_emotion)] += e.score_emo;
        r.per_emotion_count[size_t(e.target_emotion)] += 1;
        for (int t : e.tokens) unigrams.insert(t);
        total_uni += long(e.tokens.size());
        for (size_t i = 0; i + 1 < e.tokens.size(); ++i) {
            bigrams.emplace(e.tokens[i], e.tokens[i + 1]);
        }
        total_bi += e.tokens.size() >= 2 ? long(e.tokens.size()) - 1 : 0;
        sentences.insert(e.tokens);
        if (lm && !e.tokens.empty()) {
            auto [s, c] = lm->nll(e.tokens);
            lm_nll += s;
            lm_tokens += c;
        }
    }
    double n = double(entries.size());
    r.emo_acc_pct = 100.0 * r.emo_acc_pct / n;
    r.rele /= n;
    r.distinct1 = total_uni > 0 ? double(unigrams.size()) / double(total_uni) : 0.0;
    r.distinct2 = total_bi > 0 ? double(bigrams.size()) / double(total_bi) : 0.0;
    r.uniq_pct = 100.0 * double(sentences.size()) / n;
    r.ppl = lm_tokens > 0 ? std::exp(lm_nll / double(lm_tokens)) : 0.0;
    for (int e = 0; e < kNumEmotions; ++e)
        if (r.per_emotion_count[size_t(e)] > 0)
            r.per_emotion_acc[size_t(e)] =
                100.0 * r.per_emotion_acc[size_t(e)] / double(r.per_emotion_count[size_t(e)]);
    return r;
}

// ---- lambda sweep ----

struct SweepRow {
    double lambda = 0.0;
    double mean_score_emo = 0.0;
    double mean_score_rele = 0.0;
};

inline std::vector<SweepRow> lambda_sweep(
    const std::vector<std::vector<GenerationCandidate>>& per_post_candidates,
    const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("lambda_sweep: empty grid");
    std::vector<SweepRow> rows;
    for (double lambda : grid) {
        SweepRow row;
        row.lambda = lambda;
        long n = 0;
        for (const auto& cands : per_post_candidates) {
            if (cands.empty()) continue;
            std::vector<GenerationCandidate> copy = cands;
            rerank(copy, lambda);
            row.mean_score_emo += copy.front().score_emo;
            row.mean_score_rele += copy.front().score_rele;
            ++n;
        }
        if (n > 0) {
            row.mean_score_emo /= double(n);
            row.mean_score_rele /= double(n);
        }
        rows.push_back(row);
    }
    return rows;
}

// ---- latent dumps, probe, projection ----

struct LatentPoint {
    int emotion = 0;
    std::string source;  // "posterior" | "prior"
    std::vector<double> z;
};

inline std::vector<LatentPoint> collect_latents(const EmoCvaeModel& model,
                                                const std::vector<ConversationPair>& pairs,
                                                LatentSample::Source source, Rng& noise_rng) {
    if (!variant_has_latent(model.variant()))
        throw std::invalid_argument("latent dump: variant has no latent space");
    std::vector<LatentPoint> points;
    points.reserve(pairs.size());
    for (const auto& p : pairs) {
        EncodedPair ex = encode_pair(p, model.vocab());
        DiagonalGaussian d = source == LatentSample::Source::POSTERIOR
                                 ? model.posterior_distribution(ex)
                                 : model.prior_distribution(ex.post_ids, p.emotion);
        Mat noise(1, d.dim());
        for (auto& x : noise.a) x = noise_rng.normal();
        LatentSample s = sample_value(d, noise, source);
        LatentPoint lp;
        lp.emotion = p.emotion.id;
        lp.source = source == LatentSample::Source::POSTERIOR ? "posterior" : "prior";
        lp.z.assign(s.z.a.begin(), s.z.a.end());
        points.push_back(std::move(lp));
    }
    return points;
}

inline void write_latent_dump(std::ostream& os, const std::vector<LatentPoint>& points) {
    if (points.empty()) throw std::invalid_argument("latent dump: no points");
    os << "latent_dim=" << points.front().z.size() << '\n';
    os.precision(10);
    for (const auto& p : points) {
        os << emotion_names()[size_t(p.emotion)] << '\t' << p.source << '\t';
        for (size_t i = 0; i < p.z.size(); ++i) {
            if (i) os << ',';
            os << p.z[i];
        }
        os << '\n';
    }
}

inline std::vector<LatentPoint> read_latent_dump(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("latent_dim=", 0) != 0)
        throw std::runtime_error("latent dump: bad header");
    size_t dim = std::stoul(header.substr(11));
    std::vector<LatentPoint> points;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error("latent dump: bad line");
        LatentPoint p;
        p.emotion = EmotionLabel::from_name(line.substr(0, t1)).id;
        p.source = line.substr(t1 + 1, t2 - t1 - 1);
        std::string values = line.substr(t2 + 1);
        std::istringstream vs(values);
        std::string item;
        while (std::getline(vs, item, ',')) p.z.push_back(std::stod(item));
        if (p.z.size() != dim) throw std::runtime_error("latent dump: dimension mismatch");
        points.push_back(std::move(p));
    }
    return points;
}

// top-2 principal components via power iteration with deflation
inline std::vector<std::array<double, 2>> project_2d(const std::vector<LatentPoint>& points) {
    if (points.empty()) return {};
    size_t n = points.size(), d = points.front().z.size();
    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (size_t c = 0; c < d; ++c) mean[c] += p.z[c];
    for (auto& m : mean) m /= double(n);
    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < d; ++c) centered[i][c] = points[i].z[c] - mean[c];

    auto mat_vec = [&](const std::vector<double>& v) {
        // (X^T X / n) v without forming the covariance matrix
        std::vector<double> xv(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t c = 0; c < d; ++c) xv[i] += centered[i][c] * v[c];
        std::vector<double> out(d, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t c = 0; c < d; ++c) out[c] += centered[i][c] * xv[i];
        for (auto& x : out) x /= double(n);
        return out;
    };

    std::vector<std::vector<double>> comps;
    Rng rng(12345);
    for (int k = 0; k < 2; ++k) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.normal();
        for (int iter = 0; iter < 200; ++iter) {
            auto w = mat_vec(v);
            // deflate previous components
            for (const auto& c : comps) {
                double dot = 0.0;
                for (size_t j = 0; j < d; ++j) dot += w[j] * c[j];
                for (size_t j = 0; j < d; ++j) w[j] -= dot * c[j];
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-12) break;
            for (auto& x : w) x /= norm;
            v = std::move(w);
        }
        comps.push_back(v);
    }
    std::vector<std::array<double, 2>> out(n);
    for (size_t i = 0; i < n; ++i)
        for (int k = 0; k < 2; ++k) {
            double dot = 0.0;
            for (size_t c = 0; c < d; ++c) dot += centered[i][c] * comps[size_t(k)][c];
            out[i][size_t(k)] = dot;
        }
    return out;
}

// Multinomial logistic probe: fit on a split of the points, report held-out
// accuracy. Quantifies how linearly decodable the emotion is from z.
inline double linear_probe_accuracy(const std::vector<LatentPoint>& points, uint64_t seed,
                                    long steps = 1500, double lr = 0.2) {
    if (points.size() < 10) throw std::invalid_argument("probe: too few points");
    size_t d = points.front().z.size();
    Rng rng(seed * 53 + 17);
    std::vector<size_t> idx(points.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    size_t holdout = std::max<size_t>(1, points.size() / 5);
    std::vector<size_t> eval_idx(idx.begin(), idx.begin() + long(holdout));
    std::vector<size_t> train_idx(idx.begin() + long(holdout), idx.end());

    ParamStore params;
    Rng init_rng(seed * 71 + 23);
    Tensor w = params.create("w", int(d), kNumEmotions, init_rng, 0.0);
    Tensor b = params.create_const("b", 1, kNumEmotions, 0.0);
    AdamOptimizer adam(lr);
    for (long step = 0; step < steps; ++step) {
        params.zero_grads();
        for (size_t i : train_idx) {
            const LatentPoint& p = points[i];
            Tensor zrow = make_constant(Mat(1, int(d), std::vector<double>(p.z)));
            Tensor logits = add_rowvec(matmul(zrow, w), b);
            Tensor loss = cross_entropy_sum(logits, {p.emotion});
            backward(loss, 1.0 / double(train_idx.size()));
        }
        adam.step(params);
    }
    int correct = 0;
    for (size_t i : eval_idx) {
        const LatentPoint& p = points[i];
        Mat logits(1, kNumEmotions);
        for (int c = 0; c < kNumEmotions; ++c) {
            double s = b->val.at(0, c);
            for (size_t j = 0; j < d; ++j) s += p.z[j] * w->val.at(int(j), c);
            logits.at(0, c) = s;
        }
        int best = 0;
        for (int c = 1; c < kNumEmotions; ++c)
            if (logits.at(0, c) > logits.at(0, best)) best = c;
        if (best == p.emotion) ++correct;
    }
    return double(correct) / double(eval_idx.size());
}

}  // namespace emocvae
