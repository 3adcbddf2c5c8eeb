#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "emocvae/model.hpp"

namespace emocvae {

struct TrainResult {
    long steps = 0;
    LossBreakdown last_batch;
    double dev_nll = 0.0;  // final dev evaluation (mean-z teacher forcing)
    std::vector<std::pair<long, double>> dev_history;
};

// teacher-forced per-token NLL with z fixed at the posterior mean
inline double dev_nll(const EmoCvaeModel& model, const std::vector<EncodedPair>& pairs) {
    if (pairs.empty()) return 0.0;
    NoGradGuard ng;
    double total = 0.0;
    long count = 0;
    Mat zero_noise(1, model.config().latent_dim);
    for (const auto& ex : pairs) {
        ForwardResult fr = model.forward_train(ex, zero_noise, zero_noise);
        total += fr.nll->val.at(0, 0) * fr.resp_token_count;
        count += fr.resp_token_count;
    }
    return total / double(count);
}

inline std::vector<EncodedPair> encode_pairs(const std::vector<ConversationPair>& pairs,
                                             const Vocabulary& vocab) {
    std::vector<EncodedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(encode_pair(p, vocab));
    return out;
}

// Single-threaded training loop. Batch order, noise and initialization are
// all functions of the seed, so reruns are bit-identical.
inline TrainResult train_model(EmoCvaeModel& model, const std::vector<ConversationPair>& train_pairs,
                               const std::vector<ConversationPair>& dev_pairs,
                               const TrainingSchedule& sched, uint64_t seed,
                               std::ostream* metrics_csv = nullptr, long eval_interval = 0,
                               const std::function<void(long)>& step_hook = nullptr) {
    sched.validate();
    if (train_pairs.empty()) throw std::invalid_argument("train: empty training corpus");
    auto train_enc = encode_pairs(train_pairs, model.vocab());
    auto dev_enc = encode_pairs(dev_pairs, model.vocab());

    Rng order_rng(seed * 7919 + 1);
    Rng noise_rng(seed * 104729 + 2);
    AdamOptimizer adam(sched.lr);
    std::vector<size_t> order(train_enc.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    size_t cursor = 0;

    int latent_dim = model.config().latent_dim;
    TrainResult result;
    if (metrics_csv) (*metrics_csv) << "step,nll,kl,emo_post,emo_prior,total\n";

    for (long step = 0; step < sched.max_steps; ++step) {
        model.params().zero_grads();
        LossBreakdown batch{};
        double batch_total = 0.0;
        for (int b = 0; b < sched.batch_size; ++b) {
            if (cursor >= order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            const EncodedPair& ex = train_enc[order[cursor++]];
            Mat nz(1, latent_dim), np(1, latent_dim);
            if (variant_has_latent(model.variant())) {
                for (auto& x : nz.a) x = noise_rng.normal();
                for (auto& x : np.a) x = noise_rng.normal();
            }
            ForwardResult fr = model.forward_train(ex, nz, np, sched.stop_grad_prior_emo);
            LossBreakdown v = fr.values();

            double kl_coef = (sched.kl_gate(step) ? 1.0 : 0.0) * sched.kl_weight(step);
            double ew = step >= sched.emo_from_step ? sched.emo_weight : 0.0;
            std::vector<std::pair<double, Tensor>> terms;
            if (sched.kl_alternating && sched.kl_gate(step) && step >= sched.pretrain_steps) {
                if (fr.kl) terms.emplace_back(kl_coef, fr.kl);
                else terms.emplace_back(1.0, fr.nll);
            } else {
                terms.emplace_back(1.0, fr.nll);
                if (fr.kl && kl_coef != 0.0) terms.emplace_back(kl_coef, fr.kl);
                if (fr.emo_post && ew != 0.0) terms.emplace_back(ew, fr.emo_post);
                if (fr.emo_prior && ew != 0.0) terms.emplace_back(ew, fr.emo_prior);
            }
            Tensor total = weighted_sum(terms);
            double tv = total->val.at(0, 0);
            if (!std::isfinite(tv))
                throw std::runtime_error("training diverged (non-finite loss) at step " +
                                         std::to_string(step));
            backward(total, 1.0 / double(sched.batch_size));
            batch.nll += v.nll;
            batch.kl += v.kl;
            batch.emo_post += v.emo_post;
            batch.emo_prior += v.emo_prior;
            batch_total += tv;
        }
        double inv = 1.0 / double(sched.batch_size);
        batch.nll *= inv;
        batch.kl *= inv;
        batch.emo_post *= inv;
        batch.emo_prior *= inv;
        batch_total *= inv;
        if (!model.params().grads_finite())
            throw std::runtime_error("non-finite gradient at step " + std::to_string(step));
        adam.step(model.params());
        if (metrics_csv)
            (*metrics_csv) << step << ',' << batch.nll << ',' << batch.kl << ',' << batch.emo_post
                           << ',' << batch.emo_prior << ',' << batch_total << '\n';
        result.last_batch = batch;
        result.steps = step + 1;
        if (eval_interval > 0 && (step + 1) % eval_interval == 0 && !dev_enc.empty())
            result.dev_history.emplace_back(step + 1, dev_nll(model, dev_enc));
        if (step_hook) step_hook(step);
    }
    if (!dev_enc.empty()) result.dev_nll = dev_nll(model, dev_enc);
    return result;
}

}  // namespace emocvae
