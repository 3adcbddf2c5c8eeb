#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/checkpoint.hpp"
#include "emocvae/model.hpp"

namespace emocvae {

struct GenerationCandidate {
    std::vector<int> tokens;  // response ids, SOS/EOS excluded
    double log_prob = 0.0;    // sum over emitted tokens, final EOS included
    int steps = 0;            // emitted tokens (EOS counts as a step)
    int provenance = 0;       // z sample index, or seed-word rank for Seq2Seq
    bool ended_with_eos = false;
    bool empty_flagged = false;  // immediate EOS
    double score_emo = -1.0;
    double score_rele = -1.0;
    double combined = 0.0;
};

inline double normalized_score(const GenerationCandidate& c) {
    return c.log_prob / double(std::max(1, c.steps));
}

inline std::vector<double> log_softmax_row(const Mat& logits) {
    std::vector<double> out(size_t(logits.cols));
    double mx = logits.at(0, 0);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(0, c));
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) z += std::exp(logits.at(0, c) - mx);
    double lz = std::log(z) + mx;
    for (int c = 0; c < logits.cols; ++c) out[size_t(c)] = logits.at(0, c) - lz;
    return out;
}

// Tokens a decoder may emit: content tokens and EOS. Specials other than
// EOS never appear in generated output.
inline std::vector<int> decodable_tokens(const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(TOK_EOS);
    for (int id = Vocabulary::num_specials(); id < vocab.size(); ++id) ids.push_back(id);
    return ids;
}

// Length-normalized beam search. Finished hypotheses (EOS or max_len) are
// set aside unpruned, so with beam_size at least the live frontier width the
// search is exhaustive.
inline GenerationCandidate beam_search(const EmoCvaeModel& model,
                                       const std::vector<int>& post_ids, EmotionLabel emotion,
                                       const Mat* z, int beam_size, int max_len,
                                       int forced_first_token = -1) {
    if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    struct Beam {
        DecodeState state;
        std::vector<int> tokens;
        double lp = 0.0;
    };
    auto allowed = decodable_tokens(model.vocab());
    std::vector<Beam> live;
    {
        Beam b{model.begin_decode(post_ids, emotion, z), {}, 0.0};
        if (forced_first_token >= 0) {
            auto lsm = log_softmax_row(b.state.logits());
            b.lp = lsm[size_t(forced_first_token)];
            if (forced_first_token == TOK_EOS) {
                GenerationCandidate c;
                c.log_prob = b.lp;
                c.steps = 1;
                c.ended_with_eos = true;
                c.empty_flagged = true;
                return c;
            }
            b.state.append(forced_first_token);
            b.tokens.push_back(forced_first_token);
        }
        live.push_back(std::move(b));
    }
    std::vector<GenerationCandidate> finished;
    auto finish = [&](const Beam& b, double eos_lp, bool with_eos) {
        GenerationCandidate c;
        c.tokens = b.tokens;
        c.log_prob = b.lp + (with_eos ? eos_lp : 0.0);
        c.steps = int(b.tokens.size()) + (with_eos ? 1 : 0);
        c.ended_with_eos = with_eos;
        c.empty_flagged = with_eos && b.tokens.empty();
        finished.push_back(std::move(c));
    };

    while (!live.empty()) {
        // expansions over every decodable token, EOS included, ranked by the
        // length-normalized running score; the top beam_size survive, EOS
        // survivors retiring to the finished pool
        struct Expansion {
            size_t beam_idx;
            int token;
            double lp;
            double norm;
        };
        std::vector<Expansion> expansions;
        for (size_t bi = 0; bi < live.size(); ++bi) {
            Beam& b = live[bi];
            auto lsm = log_softmax_row(b.state.logits());
            for (int tok : allowed) {
                double lp = b.lp + lsm[size_t(tok)];
                int steps = int(b.tokens.size()) + 1;  // EOS also counts as a step
                expansions.push_back({bi, tok, lp, lp / double(steps)});
            }
        }
        std::sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) {
            if (a.norm != b.norm) return a.norm > b.norm;
            if (a.beam_idx != b.beam_idx) return a.beam_idx < b.beam_idx;
            return a.token < b.token;
        });
        size_t keep = std::min(size_t(beam_size), expansions.size());
        std::vector<Beam> next;
        next.reserve(keep);
        for (size_t i = 0; i < keep; ++i) {
            const Expansion& e = expansions[i];
            if (e.token == TOK_EOS) {
                finish(live[e.beam_idx], e.lp - live[e.beam_idx].lp, true);
                continue;
            }
            Beam nb{live[e.beam_idx].state, live[e.beam_idx].tokens, e.lp};
            nb.state.append(e.token);
            nb.tokens.push_back(e.token);
            if (int(nb.tokens.size()) >= max_len) {
                finish(nb, 0.0, false);
            } else {
                next.push_back(std::move(nb));
            }
        }
        live = std::move(next);
    }
    if (finished.empty()) throw std::logic_error("beam search produced no hypotheses");
    auto better = [](const GenerationCandidate& a, const GenerationCandidate& b) {
        double na = normalized_score(a), nb = normalized_score(b);
        if (na != nb) return na > nb;
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return a.tokens < b.tokens;
    };
    return *std::min_element(finished.begin(), finished.end(),
                             [&](const auto& a, const auto& b) { return better(a, b); });
}

// Multi-candidate generation: one beam search per prior z sample for the
// variational variants, top-n first-token fan-out for Seq2Seq.
inline std::vector<GenerationCandidate> generate_multi(const EmoCvaeModel& model,
                                                       const std::vector<int>& post_ids,
                                                       EmotionLabel emotion, int n_candidates,
                                                       int beam_size, int max_len,
                                                       Rng& noise_rng) {
    if (n_candidates < 1) throw std::invalid_argument("n_candidates must be >= 1");
    std::vector<GenerationCandidate> out;
    if (variant_has_latent(model.variant())) {
        DiagonalGaussian prior = model.prior_distribution(post_ids, emotion);
        for (int i = 0; i < n_candidates; ++i) {
            Mat noise(1, prior.dim());
            for (auto& x : noise.a) x = noise_rng.normal();
            LatentSample s = sample_value(prior, noise, LatentSample::Source::PRIOR);
            GenerationCandidate c = beam_search(model, post_ids, emotion, &s.z, beam_size, max_len);
            c.provenance = i;
            out.push_back(std::move(c));
        }
    } else {
        DecodeState st = model.begin_decode(post_ids, emotion, nullptr);
        auto lsm = log_softmax_row(st.logits());
        auto allowed = decodable_tokens(model.vocab());
        std::sort(allowed.begin(), allowed.end(), [&](int a, int b) {
            if (lsm[size_t(a)] != lsm[size_t(b)]) return lsm[size_t(a)] > lsm[size_t(b)];
            return a < b;
        });
        int n = std::min<int>(n_candidates, int(allowed.size()));
        for (int i = 0; i < n; ++i) {
            GenerationCandidate c =
                beam_search(model, post_ids, emotion, nullptr, beam_size, max_len, allowed[size_t(i)]);
            c.provenance = i;
            out.push_back(std::move(c));
        }
    }
    return out;
}

// Teacher-forced rescore of a candidate along the same incremental path the
// generator used; checks the self-consistency invariant.
inline double rescore_candidate(const EmoCvaeModel& model, const std::vector<int>& post_ids,
                                EmotionLabel emotion, const Mat* z,
                                const GenerationCandidate& cand) {
    DecodeState st = model.begin_decode(post_ids, emotion, z);
    double lp = 0.0;
    for (int tok : cand.tokens) {
        lp += log_softmax_row(st.logits())[size_t(tok)];
        st.append(tok);
    }
    if (cand.ended_with_eos) lp += log_softmax_row(st.logits())[size_t(TOK_EOS)];
    return lp;
}

// ---- candidate file: post_id \t emotion \t rank \t log_prob \t tokens ----

struct CandidateRecord {
    int post_id = 0;
    EmotionLabel emotion;
    int rank = 0;
    double log_prob = 0.0;
    std::vector<std::string> tokens;
};

inline void save_candidates(const std::string& path, const std::vector<CandidateRecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write candidate file: " + path);
    os.precision(17);
    for (const auto& r : records)
        os << r.post_id << '\t' << r.emotion.name() << '\t' << r.rank << '\t' << r.log_prob << '\t'
           << join_tokens(r.tokens) << '\n';
}

inline std::vector<CandidateRecord> load_candidates(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read candidate file: " + path);
    std::vector<CandidateRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        size_t start = 0;
        for (int f = 0; f < 4; ++f) {
            auto tab = line.find('\t', start);
            if (tab == std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 5 fields");
            fields.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        CandidateRecord r;
        r.post_id = std::stoi(fields[0]);
        r.emotion = EmotionLabel::from_name(fields[1]);
        r.rank = std::stoi(fields[2]);
        r.log_prob = std::stod(fields[3]);
        r.tokens = split_tokens(line.substr(start));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace emocvae
