#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "emocvae/corpus.hpp"

using namespace emocvae;

namespace {

// bag-of-words oracle: count marker-lexicon hits per emotion, argmax
int bow_classify(const std::vector<std::string>& response) {
    const auto& lex = synth::marker_lexicons();
    std::array<int, kNumEmotions> hits{};
    for (const auto& tok : response)
        for (int e = 0; e < kNumEmotions; ++e)
            for (const auto& w : lex[size_t(e)])
                if (tok == w) ++hits[size_t(e)];
    int best = -1, best_hits = 0;
    int ties = 0;
    for (int e = 0; e < kNumEmotions; ++e) {
        if (hits[size_t(e)] > best_hits) {
            best_hits = hits[size_t(e)];
            best = e;
            ties = 1;
        } else if (hits[size_t(e)] == best_hits && best_hits > 0) {
            ++ties;
        }
    }
    return ties == 1 ? best : -1;
}

std::string corpus_to_string(const std::vector<ConversationPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += join_tokens(p.post) + "\t" + join_tokens(p.response) + "\t" + p.emotion.name() +
               "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("emotion labels form an id<->name bijection over 8 classes") {
    std::set<std::string> names;
    for (int i = 0; i < kNumEmotions; ++i) {
        EmotionLabel e(i);
        names.insert(e.name());
        CHECK(EmotionLabel::from_name(e.name()).id == i);
    }
    CHECK(names.size() == 8);
    CHECK_THROWS(EmotionLabel(8));
    CHECK_THROWS(EmotionLabel::from_name("boredom"));
}

TEST_CASE("synthetic corpus is deterministic per seed") {
    SyntheticSpec spec;
    spec.size = 500;
    auto a = generate_synthetic_corpus(spec, 7);
    auto b = generate_synthetic_corpus(spec, 7);
    CHECK(corpus_to_string(a) == corpus_to_string(b));
    auto c = generate_synthetic_corpus(spec, 8);
    CHECK(corpus_to_string(a) != corpus_to_string(c));
}

TEST_CASE("synthetic corpus label frequencies track the requested mix") {
    SyntheticSpec spec;
    spec.size = 10000;
    auto pairs = generate_synthetic_corpus(spec, 3);
    std::array<int, kNumEmotions> counts{};
    for (const auto& p : pairs) ++counts[size_t(p.emotion.id)];
    for (int e = 0; e < kNumEmotions; ++e) {
        double freq = double(counts[size_t(e)]) / double(spec.size);
        CHECK(std::abs(freq - spec.emotion_mix[size_t(e)]) < 0.02);
    }
    // the reference mix itself: other and liking shares
    CHECK(std::abs(double(counts[7]) / 10000.0 - 0.4211) < 0.02);
    CHECK(std::abs(double(counts[0]) / 10000.0 - 0.2430) < 0.02);
}

TEST_CASE("synthetic corpus rejects degenerate inputs") {
    SyntheticSpec spec;
    spec.size = 0;
    CHECK_THROWS_WITH_AS(generate_synthetic_corpus(spec, 1),
                         doctest::Contains("size"), std::invalid_argument);
    spec.size = 10;
    spec.emotion_mix[0] = -0.1;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec, 1), std::invalid_argument);
    spec.emotion_mix = default_emotion_mix();
    spec.emotion_mix[0] += 0.5;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec, 1), std::invalid_argument);
}

TEST_CASE("marker lexicons are pairwise disjoint and never leak into templates") {
    const auto& lex = synth::marker_lexicons();
    std::set<std::string> seen;
    for (int e = 0; e < kNumEmotions; ++e) {
        CHECK(lex[size_t(e)].size() >= 8);
        for (const auto& w : lex[size_t(e)]) {
            CHECK(seen.insert(w).second);  // no token shared between emotions
        }
    }
    auto check_clean = [&](const std::string& tpl) {
        for (const auto& tok : split_tokens(tpl)) CHECK(seen.count(tok) == 0);
    };
    for (const auto& t : synth::post_templates()) check_clean(t);
    for (const auto& t : synth::content_templates()) check_clean(t);
    for (const auto& t : synth::topic_words()) CHECK(seen.count(t) == 0);
    // glue words in marker phrases are also marker-free
    for (const auto& t : synth::marker_phrase_templates()) {
        for (const auto& tok : split_tokens(t))
            if (tok != "%M" && tok != "%M2") CHECK(seen.count(tok) == 0);
    }
}

TEST_CASE("bag-of-words oracle classifies every synthetic response correctly") {
    SyntheticSpec spec;
    spec.size = 2000;
    auto pairs = generate_synthetic_corpus(spec, 11);
    for (const auto& p : pairs) {
        CHECK(bow_classify(p.response) == p.emotion.id);
        CHECK(bow_classify(p.post) == -1);  // posts carry no marker words
    }
}

TEST_CASE("build_vocab applies min_freq and keeps all reserved specials") {
    std::vector<ConversationPair> pairs;
    ConversationPair p1{{"a", "b"}, {"a"}, EmotionLabel(0)};
    ConversationPair p2{{"a", "c"}, {"a"}, EmotionLabel(1)};
    pairs = {p1, p2};
    Vocabulary v2 = build_vocab(pairs, 2);
    CHECK(v2.size() == Vocabulary::num_specials() + 1);
    CHECK(v2.contains("a"));
    CHECK(v2.encode("b") == TOK_UNK);
    CHECK(v2.encode("c") == TOK_UNK);

    Vocabulary v1 = build_vocab(pairs, 1);
    CHECK(v1.contains("a"));
    CHECK(v1.contains("b"));
    CHECK(v1.contains("c"));

    // the reserved set is always present with fixed low ids
    const std::vector<std::string> specials = {
        "[PAD]", "[UNK]", "[ENC_posterior]", "[ENC_prior]", "[SEP]", "[z]", "[SOS]", "[EOS]"};
    for (const auto& s : specials) CHECK(v2.contains(s));
    for (int e = 0; e < kNumEmotions; ++e) {
        std::string tok = std::string("[Emotion_") + emotion_names()[size_t(e)] + "]";
        CHECK(v2.encode(tok) == TOK_EMOTION_BASE + e);
        CHECK(v2.encode(tok) < Vocabulary::num_specials());
    }
    for (const auto& s : specials) CHECK(v2.encode(s) < Vocabulary::num_specials());

    CHECK_THROWS_AS(build_vocab({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_vocab(pairs, 0), std::invalid_argument);
}

TEST_CASE("split_corpus allocates post groups by ratio and never splits a post") {
    std::vector<ConversationPair> pairs;
    for (int i = 0; i < 100; ++i) {
        std::string post = "post" + std::to_string(i);
        for (int k = 0; k < 3; ++k) {
            ConversationPair p{{post}, {"resp", std::to_string(k)}, EmotionLabel(i % 8)};
            pairs.push_back(p);
        }
    }
    CorpusSplit s = split_corpus(pairs, {0.8, 0.1, 0.1}, 42);
    auto group_count = [](const std::vector<ConversationPair>& v) {
        std::set<std::string> g;
        for (const auto& p : v) g.insert(join_tokens(p.post));
        return g.size();
    };
    CHECK(group_count(s.train) == 80);
    CHECK(group_count(s.dev) == 10);
    CHECK(group_count(s.test) == 10);
    CHECK(s.train.size() + s.dev.size() + s.test.size() == pairs.size());

    CorpusSplit s2 = split_corpus(pairs, {0.8, 0.1, 0.1}, 42);
    CHECK(corpus_to_string(s.train) == corpus_to_string(s2.train));
    CHECK(corpus_to_string(s.test) == corpus_to_string(s2.test));
}

TEST_CASE("property: post sets of the three partitions are pairwise disjoint") {
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        SyntheticSpec spec;
        spec.size = 400 + int(seed) * 37;
        spec.topic_count = 10 + int(seed);
        auto pairs = generate_synthetic_corpus(spec, seed);
        CorpusSplit s = split_corpus(pairs, {0.6, 0.2, 0.2}, seed * 17);
        auto posts = [](const std::vector<ConversationPair>& v) {
            std::set<std::string> g;
            for (const auto& p : v) g.insert(join_tokens(p.post));
            return g;
        };
        auto a = posts(s.train), b = posts(s.dev), c = posts(s.test);
        for (const auto& x : b) CHECK(a.count(x) == 0);
        for (const auto& x : c) {
            CHECK(a.count(x) == 0);
            CHECK(b.count(x) == 0);
        }
    }
}

TEST_CASE("split_corpus rejects corpora with too few unique posts") {
    std::vector<ConversationPair> pairs = {
        {{"same"}, {"r1"}, EmotionLabel(0)},
        {{"same"}, {"r2"}, EmotionLabel(1)},
        {{"other"}, {"r3"}, EmotionLabel(2)},
    };
    CHECK_THROWS_AS(split_corpus(pairs, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_corpus(pairs, {0.5, 0.5, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("encode_pair round-trips in-vocab tokens and maps unknowns to UNK") {
    std::vector<ConversationPair> pairs = {{{"hello", "there"}, {"nice", "day"}, EmotionLabel(4)}};
    Vocabulary v = build_vocab(pairs, 1);
    EncodedPair e = encode_pair(pairs[0], v);
    CHECK(v.decode_ids(e.post_ids) == pairs[0].post);
    CHECK(v.decode_ids(e.resp_ids) == pairs[0].response);
    CHECK(e.emotion_id == 4);
    CHECK(Vocabulary::emotion_token_id(EmotionLabel::from_name("anger")) == TOK_EMOTION_BASE + 4);

    ConversationPair unk{{"hello", "stranger"}, {"nice", "day"}, EmotionLabel(0)};
    EncodedPair eu = encode_pair(unk, v);
    CHECK(eu.post_ids[1] == TOK_UNK);
}

TEST_CASE("corpus and vocab files round-trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "emocvae_corpus_test";
    fs::create_directories(dir);
    SyntheticSpec spec;
    spec.size = 80;
    spec.topic_count = 6;
    auto pairs = generate_synthetic_corpus(spec, 5);
    std::string path = (dir / "c.tsv").string();
    save_corpus(path, pairs);
    auto loaded = load_corpus(path);
    CHECK(corpus_to_string(loaded) == corpus_to_string(pairs));

    Vocabulary v = build_vocab(pairs, 1);
    std::string vpath = (dir / "v.tsv").string();
    v.save(vpath);
    Vocabulary v2 = Vocabulary::load(vpath);
    CHECK(v2.size() == v.size());
    for (int id = 0; id < v.size(); ++id) CHECK(v2.decode(id) == v.decode(id));

    // malformed corpus lines are rejected with a diagnostic
    std::string bad = (dir / "bad.tsv").string();
    {
        std::ofstream os(bad);
        os << "only two\tfields\n";
    }
    CHECK_THROWS(load_corpus(bad));
    std::string bad2 = (dir / "bad2.tsv").string();
    {
        std::ofstream os(bad2);
        os << "post\t\tanger\n";
    }
    CHECK_THROWS(load_corpus(bad2));
    fs::remove_all(dir);
}
