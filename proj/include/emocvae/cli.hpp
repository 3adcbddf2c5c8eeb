#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "emocvae/config.hpp"
#include "emocvae/decode.hpp"
#include "emocvae/rerank.hpp"
#include "emocvae/scorers.hpp"
#include "emocvae/train.hpp"

namespace emocvae {
namespace cli {

namespace fs = std::filesystem;

inline std::array<double, kNumEmotions> parse_emotion_mix(const std::string& text) {
    std::array<double, kNumEmotions> mix{};
    std::istringstream is(text);
    std::string item;
    int seen = 0;
    while (std::getline(is, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("emotion_mix: expected name:weight, got '" + item + "'");
        EmotionLabel e = EmotionLabel::from_name(item.substr(0, colon));
        mix[size_t(e.id)] = std::stod(item.substr(colon + 1));
        ++seen;
    }
    if (seen != kNumEmotions) throw std::runtime_error("emotion_mix: need all 8 emotions");
    return mix;
}

inline std::array<double, 3> parse_ratios(const std::string& text) {
    std::array<double, 3> r{};
    std::istringstream is(text);
    std::string item;
    int i = 0;
    while (std::getline(is, item, ',')) {
        if (i >= 3) throw std::runtime_error("split_ratios: expected 3 values");
        r[size_t(i++)] = std::stod(item);
    }
    if (i != 3) throw std::runtime_error("split_ratios: expected 3 values");
    return r;
}

inline std::vector<EmotionLabel> parse_emotions(const std::string& text) {
    std::vector<EmotionLabel> out;
    if (text == "all") {
        for (int e = 0; e < kNumEmotions; ++e) out.emplace_back(e);
        return out;
    }
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(EmotionLabel::from_name(item));
    if (out.empty()) throw std::runtime_error("emotions: empty list");
    return out;
}

struct LoadedCorpus {
    CorpusSplit split;
    Vocabulary vocab;
};

inline LoadedCorpus load_corpus_dir(const std::string& dir, int max_len = 24) {
    LoadedCorpus lc;
    lc.split.train = load_corpus(dir + "/train.tsv", max_len);
    lc.split.dev = load_corpus(dir + "/dev.tsv", max_len);
    lc.split.test = load_corpus(dir + "/test.tsv", max_len);
    lc.vocab = Vocabulary::load(dir + "/vocab.tsv");
    return lc;
}

inline ModelConfig model_config_from(const Config& cfg) {
    ModelConfig mc;
    mc.variant = variant_from_name(cfg.get("variant", "emo-cvae"));
    mc.tf.layers = cfg.get_int("layers", 2);
    mc.tf.heads = cfg.get_int("heads", 4);
    mc.tf.hidden_dim = cfg.get_int("hidden_dim", 64);
    mc.tf.ffn_dim = cfg.get_int("ffn_dim", 256);
    mc.tf.max_positions = cfg.get_int("max_positions", 64);
    mc.tf.tie_lm_head = cfg.get_bool("tie_lm_head", true);
    mc.latent_dim = cfg.get_int("latent_dim", 64);
    mc.share_enc_dec = cfg.get_bool("share_enc_dec", false);
    mc.init_scale = cfg.get_double("init_scale", 0.02);
    return mc;
}

inline TrainingSchedule schedule_from(const Config& cfg) {
    TrainingSchedule s;
    s.max_steps = cfg.get_long("max_steps", 1000);
    s.batch_size = cfg.get_int("batch_size", 32);
    s.lr = cfg.get_double("lr", 1e-3);
    s.pretrain_steps = cfg.get_long("pretrain_steps", 200);
    s.warmup_steps = cfg.get_long("warmup_steps", 500);
    s.kl_interval = cfg.get_int("kl_interval", 15);
    s.emo_weight = cfg.get_double("emo_weight", 1.0);
    s.emo_from_step = cfg.get_long("emo_from_step", 0);
    s.kl_alternating = cfg.get_bool("kl_alternating", false);
    s.stop_grad_prior_emo = cfg.get_bool("stop_grad_prior_emo", false);
    return s;
}

inline ScorerConfig scorer_config_from(const Config& cfg) {
    ScorerConfig sc;
    sc.tf.layers = cfg.get_int("s_layers", 2);
    sc.tf.heads = cfg.get_int("s_heads", 4);
    sc.tf.hidden_dim = cfg.get_int("s_hidden_dim", 48);
    sc.tf.ffn_dim = cfg.get_int("s_ffn_dim", 192);
    sc.tf.max_positions = cfg.get_int("s_max_positions", 64);
    sc.steps = cfg.get_long("s_steps", 400);
    sc.batch_size = cfg.get_int("s_batch_size", 32);
    sc.lr = cfg.get_double("s_lr", 1e-3);
    return sc;
}

inline std::vector<std::vector<std::string>> unique_posts(
    const std::vector<ConversationPair>& pairs) {
    std::vector<std::vector<std::string>> posts;
    std::set<std::string> seen;
    for (const auto& p : pairs) {
        std::string key = join_tokens(p.post);
        if (seen.insert(key).second) posts.push_back(p.post);
    }
    return posts;
}

// ---- synth-data ----

inline int cmd_synth_data(const Config& cfg) {
    std::string out = cfg.require("out");
    uint64_t seed = cfg.get_seed("seed", 1);
    fs::create_directories(out);
    SyntheticSpec spec;
    spec.size = cfg.get_int("size", 5000);
    spec.topic_count = cfg.get_int("topics", 50);
    spec.max_len = cfg.get_int("max_len", 24);
    if (cfg.has("emotion_mix")) spec.emotion_mix = parse_emotion_mix(cfg.require("emotion_mix"));
    auto ratios = parse_ratios(cfg.get("split_ratios", "0.8,0.1,0.1"));

    auto pairs = generate_synthetic_corpus(spec, seed);
    CorpusSplit split = split_corpus(pairs, ratios, seed + 1);
    Vocabulary vocab = build_vocab(split.train, cfg.get_int("min_freq", 1));

    save_corpus(out + "/train.tsv", split.train);
    save_corpus(out + "/dev.tsv", split.dev);
    save_corpus(out + "/test.tsv", split.test);
    vocab.save(out + "/vocab.tsv");

    Manifest m("synth-data", seed);
    m.record_config(cfg);
    m.record_output("train", out + "/train.tsv");
    m.record_output("dev", out + "/dev.tsv");
    m.record_output("test", out + "/test.tsv");
    m.record_output("vocab", out + "/vocab.tsv");
    m.record("stats.pairs", std::to_string(pairs.size()));
    m.record("stats.train", std::to_string(split.train.size()));
    m.record("stats.dev", std::to_string(split.dev.size()));
    m.record("stats.test", std::to_string(split.test.size()));
    m.write(out + "/synth-data.manifest");
    std::cout << "wrote corpus (" << split.train.size() << "/" << split.dev.size() << "/"
              << split.test.size() << " pairs) to " << out << "\n";
    return 0;
}

// ---- train ----

inline int cmd_train(const Config& cfg) {
    std::string corpus_dir = cfg.require("corpus_dir");
    std::string out = cfg.require("out");
    uint64_t seed = cfg.get_seed("seed", 1);
    fs::create_directories(out);
    LoadedCorpus lc = load_corpus_dir(corpus_dir, cfg.get_int("max_len", 24));

    ModelConfig mc = model_config_from(cfg);
    TrainingSchedule sched = schedule_from(cfg);
    EmoCvaeModel model(mc, lc.vocab, seed);

    std::ofstream metrics(out + "/metrics.csv");
    long ckpt_interval = cfg.get_long("ckpt_interval", 0);
    auto hook = [&](long step) {
        if (ckpt_interval > 0 && (step + 1) % ckpt_interval == 0)
            save_model_checkpoint(out + "/checkpoint-" + std::to_string(step + 1) + ".ckpt", model,
                                  step + 1, seed);
    };
    TrainResult tr = train_model(model, lc.split.train, lc.split.dev, sched, seed, &metrics,
                                 cfg.get_long("eval_interval", 0), hook);
    metrics.close();
    save_model_checkpoint(out + "/checkpoint.ckpt", model, tr.steps, seed);

    Manifest m("train", seed);
    m.record_config(cfg);
    m.record_input("train", corpus_dir + "/train.tsv");
    m.record_input("dev", corpus_dir + "/dev.tsv");
    m.record_input("vocab", corpus_dir + "/vocab.tsv");
    m.record_output("checkpoint", out + "/checkpoint.ckpt");
    m.record_output("metrics", out + "/metrics.csv");
    m.record("stats.steps", std::to_string(tr.steps));
    m.record("stats.final_nll", std::to_string(tr.last_batch.nll));
    m.record("stats.dev_nll", std::to_string(tr.dev_nll));
    m.record("stats.param_digest", model.params().digest());
    m.write(out + "/train.manifest");
    std::cout << "trained " << variant_name(mc.variant) << " for " << tr.steps
              << " steps; final nll/token " << tr.last_batch.nll << ", dev nll " << tr.dev_nll
              << "\n";
    return 0;
}

// ---- train-scorers ----

inline int cmd_train_scorers(const Config& cfg) {
    std::string corpus_dir = cfg.require("corpus_dir");
    std::string out = cfg.require("out");
    uint64_t seed = cfg.get_seed("seed", 1);
    fs::create_directories(out);
    LoadedCorpus lc = load_corpus_dir(corpus_dir, cfg.get_int("max_len", 24));
    ScorerConfig sc = scorer_config_from(cfg);

    EmotionClassifier classifier(lc.vocab, sc, seed * 3 + 1);
    double cls_acc = classifier.train(lc.split.train, seed * 3 + 1);
    classifier.save(out + "/classifier.ckpt");

    ScorerConfig tcd_sc = sc;
    tcd_sc.steps = cfg.get_long("s_tcd_steps", 1800);
    TopicDiscriminator tcd(lc.vocab, tcd_sc, seed * 5 + 2);
    double tcd_acc = tcd.train(lc.split.train, seed * 5 + 2);
    tcd.save(out + "/tcd.ckpt");

    std::vector<std::vector<int>> responses;
    for (const auto& p : lc.split.train)
        responses.push_back(lc.vocab.encode_tokens(p.response));
    EvalLm lm(lc.vocab, sc, seed * 7 + 3);
    double lm_ppl = lm.train(responses, seed * 7 + 3);
    lm.save(out + "/evallm.ckpt");

    Manifest m("train-scorers", seed);
    m.record_config(cfg);
    m.record_input("train", corpus_dir + "/train.tsv");
    m.record_input("vocab", corpus_dir + "/vocab.tsv");
    m.record_output("classifier", out + "/classifier.ckpt");
    m.record_output("tcd", out + "/tcd.ckpt");
    m.record_output("evallm", out + "/evallm.ckpt");
    m.record("stats.classifier_heldout_acc", std::to_string(cls_acc));
    m.record("stats.tcd_heldout_acc", std::to_string(tcd_acc));
    m.record("stats.evallm_heldout_ppl", std::to_string(lm_ppl));
    m.write(out + "/train-scorers.manifest");
    std::cout << "scorers: classifier acc " << cls_acc << ", tcd acc " << tcd_acc << ", lm ppl "
              << lm_ppl << "\n";
    return 0;
}

// ---- generate ----

inline int cmd_generate(const Config& cfg) {
    std::string ckpt = cfg.require("checkpoint");
    std::string corpus_dir = cfg.require("corpus_dir");
    std::string out = cfg.require("out");
    uint64_t seed = cfg.get_seed("seed", 1);
    fs::create_directories(out);
    EmoCvaeModel model = load_model_checkpoint(ckpt);
    LoadedCorpus lc = load_corpus_dir(corpus_dir, cfg.get_int("max_len", 24));

    std::string split_name = cfg.get("split", "test");
    const std::vector<ConversationPair>& pool = split_name == "train"  ? lc.split.train
                                                : split_name == "dev" ? lc.split.dev
                                                                      : lc.split.test;
    auto posts = unique_posts(pool);
    int limit = cfg.get_int("posts_limit", 0);
    if (limit > 0 && int(posts.size()) > limit) posts.resize(size_t(limit));
    auto emotions = parse_emotions(cfg.get("emotions", "all"));
    int n = cfg.get_int("n_candidates", 5);
    int beam = cfg.get_int("beam_size", 5);
    int max_len = cfg.get_int("max_len", 24);

    Rng noise(seed * 11 + 4);
    std::vector<CandidateRecord> records;
    std::ofstream posts_os(out + "/posts.tsv");
    for (size_t pid = 0; pid < posts.size(); ++pid) {
        posts_os << pid << '\t' << join_tokens(posts[pid]) << '\n';
        std::vector<int> post_ids = model.vocab().encode_tokens(posts[pid]);
        for (EmotionLabel e : emotions) {
            auto cands = generate_multi(model, post_ids, e, n, beam, max_len, noise);
            for (const auto& c : cands) {
                CandidateRecord r;
                r.post_id = int(pid);
                r.emotion = e;
                r.rank = c.provenance;
                r.log_prob = c.log_prob;
                r.tokens = model.vocab().decode_ids(c.tokens);
                records.push_back(std::move(r));
            }
        }
    }
    posts_os.close();
    save_candidates(out + "/candidates.tsv", records);

    Manifest m("generate", seed);
    m.record_config(cfg);
    m.record_input("checkpoint", ckpt);
    m.record_output("candidates", out + "/candidates.tsv");
    m.record_output("posts", out + "/posts.tsv");
    m.record("stats.posts", std::to_string(posts.size()));
    m.record("stats.candidates", std::to_string(records.size()));
    m.write(out + "/generate.manifest");
    std::cout << "generated " << records.size() << " candidates for " << posts.size()
              << " posts\n";
    return 0;
}

// ---- evaluate ----

struct ScoredGroups {
    // one candidate list per (post, emotion) request, scores filled in
    std::vector<std::vector<GenerationCandidate>> groups;
    std::vector<int> group_emotion;
};

inline std::map<int, std::vector<std::string>> load_posts_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read posts file: " + path);
    std::map<int, std::vector<std::string>> posts;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        posts[std::stoi(line.substr(0, tab))] = split_tokens(line.substr(tab + 1));
    }
    return posts;
}

inline ScoredGroups score_candidates(const std::vector<CandidateRecord>& records,
                                     const std::map<int, std::vector<std::string>>& posts,
                                     const EmotionClassifier& classifier,
                                     const TopicDiscriminator& tcd) {
    std::map<std::pair<int, int>, std::vector<GenerationCandidate>> grouped;
    for (const auto& r : records) {
        GenerationCandidate c;
        c.tokens = classifier.vocab().encode_tokens(r.tokens);
        c.log_prob = r.log_prob;
        c.provenance = r.rank;
        c.steps = int(r.tokens.size()) + 1;
        c.score_emo = r.tokens.empty()
                          ? 0.0
                          : (classifier.predict_tokens(r.tokens) == r.emotion.id ? 1.0 : 0.0);
        auto pit = posts.find(r.post_id);
        if (pit == posts.end())
            throw std::runtime_error("candidate references unknown post_id " +
                                     std::to_string(r.post_id));
        c.score_rele = r.tokens.empty() ? 0.0 : tcd.score_tokens(pit->second, r.tokens);
        grouped[{r.post_id, r.emotion.id}].push_back(std::move(c));
    }
    ScoredGroups out;
    for (auto& [key, cands] : grouped) {
        out.groups.push_back(std::move(cands));
        out.group_emotion.push_back(key.second);
    }
    return out;
}

inline EvalReport report_at_lambda(const ScoredGroups& sg, double lambda, const EvalLm* lm) {
    std::vector<EvalEntry> top1;
    for (size_t g = 0; g < sg.groups.size(); ++g) {
        std::vector<GenerationCandidate> copy = sg.groups[g];
        rerank(copy, lambda);
        EvalEntry e;
        e.tokens = copy.front().tokens;
        e.target_emotion = sg.group_emotion[g];
        e.score_emo = copy.front().score_emo;
        e.score_rele = copy.front().score_rele;
        top1.push_back(std::move(e));
    }
    return compute_metrics(top1, lm);
}

// baseline ranking by log probability alone (ties via tokens for totality)
inline EvalReport report_by_logprob(const ScoredGroups& sg, const EvalLm* lm) {
    std::vector<EvalEntry> top1;
    for (size_t g = 0; g < sg.groups.size(); ++g) {
        std::vector<GenerationCandidate> copy = sg.groups[g];
        std::sort(copy.begin(), copy.end(),
                  [](const GenerationCandidate& a, const GenerationCandidate& b) {
                      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                      return a.tokens < b.tokens;
                  });
        EvalEntry e;
        e.tokens = copy.front().tokens;
        e.target_emotion = sg.group_emotion[g];
        e.score_emo = copy.front().score_emo;
        e.score_rele = copy.front().score_rele;
        top1.push_back(std::move(e));
    }
    return compute_metrics(top1, lm);
}

inline int cmd_evaluate(const Config& cfg) {
    std::string out = cfg.require("out");
    fs::create_directories(out);
    uint64_t seed = cfg.get_seed("seed", 1);
    std::string cand_path = cfg.require("candidates");
    std::string posts_path = cfg.require("posts");
    EmotionClassifier classifier = EmotionClassifier::load(cfg.require("classifier"));
    TopicDiscriminator tcd = TopicDiscriminator::load(cfg.require("tcd"));
    EvalLm lm = EvalLm::load(cfg.require("evallm"));

    auto records = load_candidates(cand_path);
    auto posts = load_posts_file(posts_path);
    ScoredGroups sg = score_candidates(records, posts, classifier, tcd);

    double lambda = cfg.get_double("lambda", 0.5);
    EvalReport report = report_at_lambda(sg, lambda, &lm);

    {
        std::ofstream os(out + "/report.txt");
        os << "lambda=" << lambda << "\n" << report.table() << "\nper-emotion accuracy (%):\n";
        for (int e = 0; e < kNumEmotions; ++e)
            os << "  " << emotion_names()[size_t(e)] << ": " << report.per_emotion_acc[size_t(e)]
               << " (" << report.per_emotion_count[size_t(e)] << " samples)\n";
    }
    {
        std::ofstream os(out + "/report.csv");
        os << "emo_acc_pct,rele,distinct1,distinct2,uniq_pct,ppl\n" << report.csv_row() << "\n";
    }
    {
        std::ofstream os(out + "/per_emotion.csv");
        os << "emotion,acc_pct,count\n";
        for (int e = 0; e < kNumEmotions; ++e)
            os << emotion_names()[size_t(e)] << ',' << report.per_emotion_acc[size_t(e)] << ','
               << report.per_emotion_count[size_t(e)] << '\n';
    }
    Manifest m("evaluate", seed);
    m.record_config(cfg);
    m.record_input("candidates", cand_path);
    m.record_input("posts", posts_path);
    m.record_output("report", out + "/report.txt");
    m.record_output("report_csv", out + "/report.csv");
    m.record_output("per_emotion", out + "/per_emotion.csv");

    if (cfg.get_bool("sweep", false)) {
        double lo = cfg.get_double("sweep_lo", 0.2);
        double hi = cfg.get_double("sweep_hi", 1.2);
        double step = cfg.get_double("sweep_step", 0.1);
        std::vector<double> grid;
        for (double l = lo; l <= hi + 1e-9; l += step) grid.push_back(l);
        auto rows = lambda_sweep(sg.groups, grid);
        std::ofstream os(out + "/sweep.csv");
        os << "lambda,mean_score_emo,mean_score_rele\n";
        for (const auto& r : rows)
            os << r.lambda << ',' << r.mean_score_emo << ',' << r.mean_score_rele << '\n';
        os.close();
        m.record_output("sweep", out + "/sweep.csv");
    }
    m.write(out + "/evaluate.manifest");
    std::cout << report.table();
    return 0;
}

// ---- ablate ----

inline const std::vector<VariantId>& all_variants() {
    static const std::vector<VariantId> v = {
        VariantId::EMO_CVAE, VariantId::EMO_CVAE_M1, VariantId::EMO_CVAE_M2, VariantId::CVAE,
        VariantId::CVAE_M1,  VariantId::CVAE_M2,     VariantId::SEQ2SEQ,
    };
    return v;
}

struct AblateOutcome {
    // outcome[seed][variant] -> report
    std::map<uint64_t, std::map<VariantId, EvalReport>> reports;
};

inline EvalReport evaluate_model_on_split(const EmoCvaeModel& model,
                                          const std::vector<ConversationPair>& split_pairs,
                                          const EmotionClassifier& classifier,
                                          const TopicDiscriminator& tcd, const EvalLm* lm,
                                          double lambda, int n_candidates, int beam, int max_len,
                                          uint64_t seed, int posts_limit = 0) {
    auto posts = unique_posts(split_pairs);
    if (posts_limit > 0 && int(posts.size()) > posts_limit) posts.resize(size_t(posts_limit));
    Rng noise(seed * 11 + 4);
    std::vector<EvalEntry> top1;
    for (const auto& post : posts) {
        std::vector<int> post_ids = model.vocab().encode_tokens(post);
        for (int e = 0; e < kNumEmotions; ++e) {
            auto cands = generate_multi(model, post_ids, EmotionLabel(e), n_candidates, beam,
                                        max_len, noise);
            for (auto& c : cands) {
                auto tokens = model.vocab().decode_ids(c.tokens);
                c.score_emo =
                    tokens.empty() ? 0.0 : (classifier.predict_tokens(tokens) == e ? 1.0 : 0.0);
                c.score_rele = tokens.empty() ? 0.0 : tcd.score_tokens(post, tokens);
            }
            rerank(cands, lambda);
            EvalEntry entry;
            entry.tokens = cands.front().tokens;
            entry.target_emotion = e;
            entry.score_emo = cands.front().score_emo;
            entry.score_rele = cands.front().score_rele;
            top1.push_back(std::move(entry));
        }
    }
    return compute_metrics(top1, lm);
}

inline int cmd_ablate(const Config& cfg) {
    std::string corpus_dir = cfg.require("corpus_dir");
    std::string out = cfg.require("out");
    fs::create_directories(out);
    LoadedCorpus lc = load_corpus_dir(corpus_dir, cfg.get_int("max_len", 24));

    std::vector<uint64_t> seeds;
    {
        std::istringstream is(cfg.get("seeds", "1,2,3"));
        std::string item;
        while (std::getline(is, item, ',')) seeds.push_back(std::stoull(item));
    }
    double lambda = cfg.get_double("lambda", 0.5);
    int n_candidates = cfg.get_int("n_candidates", 5);
    int beam = cfg.get_int("beam_size", 5);
    int max_len = cfg.get_int("max_len", 24);
    int posts_limit = cfg.get_int("posts_limit", 0);

    std::ofstream summary(out + "/ablate_summary.csv");
    summary << "seed,variant,emo_acc_pct,rele,distinct1,distinct2,uniq_pct,ppl\n";
    std::map<VariantId, EvalReport> mean_acc;
    std::map<VariantId, std::array<double, 6>> sums;

    Manifest m("ablate", seeds.empty() ? 0 : seeds[0]);
    m.record_config(cfg);
    m.record_input("train", corpus_dir + "/train.tsv");

    for (uint64_t seed : seeds) {
        std::string seed_dir = out + "/seed" + std::to_string(seed);
        fs::create_directories(seed_dir);
        ScorerConfig sc = scorer_config_from(cfg);
        EmotionClassifier classifier(lc.vocab, sc, seed * 3 + 1);
        classifier.train(lc.split.train, seed * 3 + 1);
        ScorerConfig tcd_sc = sc;
        tcd_sc.steps = cfg.get_long("s_tcd_steps", 1800);
        TopicDiscriminator tcd(lc.vocab, tcd_sc, seed * 5 + 2);
        tcd.train(lc.split.train, seed * 5 + 2);
        std::vector<std::vector<int>> responses;
        for (const auto& p : lc.split.train) responses.push_back(lc.vocab.encode_tokens(p.response));
        EvalLm lm(lc.vocab, sc, seed * 7 + 3);
        lm.train(responses, seed * 7 + 3);

        std::ofstream table(seed_dir + "/table.txt");
        table << "variant        EmoAcc(%)  Rele    D-1     D-2     Uniq(%)  PPL\n";
        for (VariantId v : all_variants()) {
            Config vcfg = cfg;
            vcfg.set("variant", variant_name(v));
            ModelConfig mc = model_config_from(vcfg);
            TrainingSchedule sched = schedule_from(vcfg);
            EmoCvaeModel model(mc, lc.vocab, seed);
            train_model(model, lc.split.train, lc.split.dev, sched, seed);
            save_model_checkpoint(seed_dir + "/" + variant_name(v) + ".ckpt", model,
                                  sched.max_steps, seed);
            EvalReport r = evaluate_model_on_split(model, lc.split.test, classifier, tcd, &lm,
                                                   lambda, n_candidates, beam, max_len, seed,
                                                   posts_limit);
            summary << seed << ',' << variant_name(v) << ',' << r.csv_row() << "\n";
            summary.flush();
            std::ostringstream row;
            row.setf(std::ios::fixed);
            row.precision(2);
            row << variant_name(v);
            for (size_t pad = row.str().size(); pad < 15; ++pad) row << ' ';
            row << r.emo_acc_pct << "      " << std::setprecision(4) << r.rele << "  "
                << r.distinct1 << "  " << r.distinct2 << "  " << std::setprecision(2)
                << r.uniq_pct << "    " << r.ppl;
            table << row.str() << "\n";
            table.flush();
            auto& s = sums[v];
            s[0] += r.emo_acc_pct;
            s[1] += r.rele;
            s[2] += r.distinct1;
            s[3] += r.distinct2;
            s[4] += r.uniq_pct;
            s[5] += r.ppl;
        }
    }
    summary.close();
    {
        std::ofstream os(out + "/ablate_mean.csv");
        os << "variant,emo_acc_pct,rele,distinct1,distinct2,uniq_pct,ppl\n";
        for (VariantId v : all_variants()) {
            const auto& s = sums[v];
            double n = double(seeds.size());
            os << variant_name(v);
            for (double x : s) os << ',' << x / n;
            os << '\n';
        }
    }
    m.record_output("summary", out + "/ablate_summary.csv");
    m.record_output("mean", out + "/ablate_mean.csv");
    m.write(out + "/ablate.manifest");
    std::cout << "ablation complete; summary in " << out << "/ablate_summary.csv\n";
    return 0;
}

// ---- dump-latents ----

inline int cmd_dump_latents(const Config& cfg) {
    std::string ckpt = cfg.require("checkpoint");
    std::string corpus_dir = cfg.require("corpus_dir");
    std::string out = cfg.require("out");
    uint64_t seed = cfg.get_seed("seed", 1);
    fs::create_directories(out);
    EmoCvaeModel model = load_model_checkpoint(ckpt);
    LoadedCorpus lc = load_corpus_dir(corpus_dir, cfg.get_int("max_len", 24));
    std::string split_name = cfg.get("split", "dev");
    const std::vector<ConversationPair>& pool = split_name == "train"  ? lc.split.train
                                                : split_name == "test" ? lc.split.test
                                                                       : lc.split.dev;
    std::string source_name = cfg.get("source", "posterior");
    LatentSample::Source source = source_name == "prior" ? LatentSample::Source::PRIOR
                                                         : LatentSample::Source::POSTERIOR;
    Rng noise(seed * 13 + 6);
    auto points = collect_latents(model, pool, source, noise);
    {
        std::ofstream os(out + "/latents.tsv");
        write_latent_dump(os, points);
    }
    Manifest m("dump-latents", seed);
    m.record_config(cfg);
    m.record_input("checkpoint", ckpt);
    m.record_output("latents", out + "/latents.tsv");
    if (cfg.get_bool("project2d", false)) {
        auto proj = project_2d(points);
        std::ofstream os(out + "/latents_2d.tsv");
        os.precision(10);
        for (size_t i = 0; i < proj.size(); ++i)
            os << emotion_names()[size_t(points[i].emotion)] << '\t' << proj[i][0] << '\t'
               << proj[i][1] << '\n';
        os.close();
        m.record_output("projection", out + "/latents_2d.tsv");
    }
    m.record("stats.points", std::to_string(points.size()));
    m.write(out + "/dump-latents.manifest");
    std::cout << "dumped " << points.size() << " latent samples\n";
    return 0;
}

}  // namespace cli
}  // namespace emocvae
