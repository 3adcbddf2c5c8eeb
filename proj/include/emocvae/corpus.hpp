#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "emocvae/rng.hpp"

namespace emocvae {

// ---- emotion labels ----

constexpr int kNumEmotions = 8;

inline const std::array<const char*, kNumEmotions>& emotion_names() {
    static const std::array<const char*, kNumEmotions> names = {
        "liking", "disgust", "happiness", "sadness", "anger", "surprise", "fear", "other"};
    return names;
}

struct EmotionLabel {
    int id = 0;

    EmotionLabel() = default;
    explicit EmotionLabel(int i) : id(i) {
        if (i < 0 || i >= kNumEmotions) throw std::invalid_argument("emotion id out of range");
    }
    const char* name() const { return emotion_names()[size_t(id)]; }

    static EmotionLabel from_name(const std::string& s) {
        for (int i = 0; i < kNumEmotions; ++i)
            if (s == emotion_names()[size_t(i)]) return EmotionLabel(i);
        throw std::invalid_argument("unknown emotion name: " + s);
    }
    bool operator==(const EmotionLabel& o) const { return id == o.id; }
};

// Class shares in the reference corpus; used as the default emotion mix.
inline std::array<double, kNumEmotions> default_emotion_mix() {
    return {0.2430, 0.0989, 0.0820, 0.0690, 0.0234, 0.0508, 0.0118, 0.4211};
}

// ---- conversation data ----

struct ConversationPair {
    std::vector<std::string> post;
    std::vector<std::string> response;
    EmotionLabel emotion;
};

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

inline std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

// ---- vocabulary ----

// Reserved ids sit below every content token id.
enum SpecialToken : int {
    TOK_PAD = 0,
    TOK_UNK = 1,
    TOK_EMOTION_BASE = 2,  // 8 consecutive ids, one per emotion
    TOK_ENC_POSTERIOR = 10,
    TOK_ENC_PRIOR = 11,
    TOK_SEP = 12,
    TOK_Z = 13,
    TOK_SOS = 14,
    TOK_EOS = 15,
};
constexpr int kNumSpecials = 16;

class Vocabulary {
  public:
    Vocabulary() {
        add("[PAD]");
        add("[UNK]");
        for (int e = 0; e < kNumEmotions; ++e)
            add(std::string("[Emotion_") + emotion_names()[size_t(e)] + "]");
        add("[ENC_posterior]");
        add("[ENC_prior]");
        add("[SEP]");
        add("[z]");
        add("[SOS]");
        add("[EOS]");
    }

    int add(const std::string& tok) {
        auto it = token_to_id_.find(tok);
        if (it != token_to_id_.end()) return it->second;
        int id = int(id_to_token_.size());
        token_to_id_.emplace(tok, id);
        id_to_token_.push_back(tok);
        return id;
    }

    int encode(const std::string& tok) const {
        auto it = token_to_id_.find(tok);
        return it == token_to_id_.end() ? TOK_UNK : it->second;
    }

    const std::string& decode(int id) const {
        if (id < 0 || id >= int(id_to_token_.size()))
            throw std::out_of_range("vocab id out of range");
        return id_to_token_[size_t(id)];
    }

    bool contains(const std::string& tok) const { return token_to_id_.count(tok) > 0; }
    int size() const { return int(id_to_token_.size()); }
    static int num_specials() { return kNumSpecials; }
    static int emotion_token_id(EmotionLabel e) { return TOK_EMOTION_BASE + e.id; }

    std::vector<int> encode_tokens(const std::vector<std::string>& toks) const {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) ids.push_back(encode(t));
        return ids;
    }

    std::vector<std::string> decode_ids(const std::vector<int>& ids) const {
        std::vector<std::string> toks;
        toks.reserve(ids.size());
        for (int id : ids) toks.push_back(decode(id));
        return toks;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write vocab file: " + path);
        for (size_t i = 0; i < id_to_token_.size(); ++i)
            os << id_to_token_[i] << '\t' << i << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read vocab file: " + path);
        Vocabulary v;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error("vocab line " + std::to_string(lineno) + ": missing tab");
            std::string tok = line.substr(0, tab);
            int id = std::stoi(line.substr(tab + 1));
            if (id < kNumSpecials) {
                if (id >= v.size() || v.id_to_token_[size_t(id)] != tok)
                    throw std::runtime_error("vocab file disagrees on special token " + tok);
            } else {
                int got = v.add(tok);
                if (got != id)
                    throw std::runtime_error("vocab ids must be dense and ordered; got " + tok);
            }
        }
        return v;
    }

    // dump in id order (specials first by construction)
    std::string serialize() const {
        std::string out;
        for (size_t i = 0; i < id_to_token_.size(); ++i) {
            out += id_to_token_[i];
            out += '\t';
            out += std::to_string(i);
            out += '\n';
        }
        return out;
    }

    static Vocabulary deserialize(const std::string& text) {
        Vocabulary v;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto tab = line.find('\t');
            std::string tok = line.substr(0, tab);
            int id = std::stoi(line.substr(tab + 1));
            if (id >= kNumSpecials) v.add(tok);
        }
        return v;
    }

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

inline Vocabulary build_vocab(const std::vector<ConversationPair>& pairs, int min_freq) {
    if (pairs.empty()) throw std::invalid_argument("build_vocab: no pairs");
    if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
    std::map<std::string, int> freq;  // ordered for deterministic ties
    for (const auto& p : pairs) {
        for (const auto& t : p.post) ++freq[t];
        for (const auto& t : p.response) ++freq[t];
    }
    std::vector<std::pair<int, std::string>> eligible;
    for (const auto& [tok, f] : freq)
        if (f >= min_freq) eligible.emplace_back(-f, tok);
    std::sort(eligible.begin(), eligible.end());
    Vocabulary v;
    for (const auto& [negf, tok] : eligible) v.add(tok);
    return v;
}

// ---- synthetic corpus ----

struct SyntheticSpec {
    int size = 5000;
    int topic_count = 50;
    std::array<double, kNumEmotions> emotion_mix = default_emotion_mix();
    int max_len = 24;
};

namespace synth {

inline const std::vector<std::string>& topic_words() {
    static const std::vector<std::string> topics = {
        "gardening", "astronomy", "chess",       "cooking",    "cycling",    "painting",
        "fishing",   "photography", "robotics",  "sailing",    "pottery",    "baking",
        "hiking",    "juggling",   "origami",    "skiing",     "surfing",    "archery",
        "quilting",  "birdwatching", "calligraphy", "camping",  "dancing",    "drumming",
        "embroidery", "fencing",   "geocaching", "kayaking",   "knitting",   "meteorology",
        "mushrooms", "coins",      "orienteering", "parkour",  "stamps",     "pinball",
        "puzzles",   "rowing",     "sculpture",  "snorkeling", "stargazing", "swimming",
        "tennis",    "theater",    "trains",     "volcanoes",  "weaving",    "woodworking",
        "yoga",      "aquariums",  "beekeeping", "bonsai",     "falconry",   "genealogy",
        "homebrewing", "kites",    "lacrosse",   "marbles",    "magnets",    "maps"};
    return topics;
}

// Emotion marker words; pairwise disjoint across emotions by construction
// (asserted in tests), and never used by post/content templates.
inline const std::array<std::vector<std::string>, kNumEmotions>& marker_lexicons() {
    static const std::array<std::vector<std::string>, kNumEmotions> lex = {{
        {"adore", "adorable", "fond", "fondly", "cherish", "charming", "endearing", "appealing",
         "lovely", "darling"},
        {"gross", "disgusting", "revolting", "nasty", "repulsive", "vile", "yuck", "foul",
         "sickening", "loathsome"},
        {"happy", "joyful", "delighted", "cheerful", "glad", "thrilled", "merry", "gleeful",
         "jubilant", "beaming"},
        {"sad", "gloomy", "mournful", "tearful", "sorrowful", "downcast", "weeping", "dismal",
         "heartbroken", "miserable"},
        {"angry", "furious", "outraged", "irate", "fuming", "enraged", "livid", "seething",
         "resentful", "bitter"},
        {"surprised", "astonished", "amazed", "stunned", "startled", "astounded", "shocked",
         "unexpected", "wow", "flabbergasted"},
        {"afraid", "scared", "fearful", "terrified", "frightened", "anxious", "dread",
         "panicked", "uneasy", "spooked"},
        {"okay", "fine", "neutral", "ordinary", "typical", "regular", "plain", "usual",
         "standard", "everyday"},
    }};
    return lex;
}

inline const std::vector<std::string>& post_templates() {
    static const std::vector<std::string> tpl = {
        "tell me about %T",          "what do you think of %T", "any thoughts on %T",
        "lets talk about %T today",  "share your view on %T",   "how does %T work",
    };
    return tpl;
}

// %M / %M2 expand to marker words, %T to the topic word
inline const std::vector<std::string>& marker_phrase_templates() {
    static const std::vector<std::string> tpl = {
        "i feel %M here",    "that is just %M",  "how %M this is",   "%M and %M2 honestly",
        "what a %M moment",  "totally %M right now", "it leaves me %M", "%M beyond words",
    };
    return tpl;
}

inline const std::vector<std::string>& content_templates() {
    static const std::vector<std::string> tpl = {
        "%T is a topic worth hours", "my weekend went to %T basics",
        "the local %T club meets often", "i read an article on %T",
        "%T takes patience and practice", "family evenings often feature %T",
        "the %T fair opens next month",  "my neighbor teaches %T for beginners",
    };
    return tpl;
}

inline std::string expand(const std::string& tpl, const std::string& topic,
                          const std::string& m1, const std::string& m2) {
    std::string out;
    for (size_t i = 0; i < tpl.size();) {
        if (tpl[i] == '%' && i + 1 < tpl.size()) {
            if (tpl.compare(i, 3, "%M2") == 0) {
                out += m2;
                i += 3;
                continue;
            }
            if (tpl.compare(i, 2, "%M") == 0) {
                out += m1;
                i += 2;
                continue;
            }
            if (tpl.compare(i, 2, "%T") == 0) {
                out += topic;
                i += 2;
                continue;
            }
        }
        out += tpl[i++];
    }
    return out;
}

}  // namespace synth

// Quota allocation by largest remainder: label counts land within one unit
// of size * mix, so empirical frequencies track the requested mix tightly.
inline std::vector<int> allocate_label_quota(int size, const std::array<double, kNumEmotions>& mix) {
    std::vector<int> counts(kNumEmotions, 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int e = 0; e < kNumEmotions; ++e) {
        double exact = mix[size_t(e)] * size;
        counts[size_t(e)] = int(exact);
        assigned += counts[size_t(e)];
        rema.emplace_back(-(exact - double(counts[size_t(e)])), e);
    }
    std::sort(rema.begin(), rema.end());
    for (int i = 0; assigned < size; ++i, ++assigned) ++counts[size_t(rema[size_t(i % kNumEmotions)].second)];
    return counts;
}

inline std::vector<ConversationPair> generate_synthetic_corpus(const SyntheticSpec& spec,
                                                               uint64_t seed) {
    if (spec.size < 1) throw std::invalid_argument("corpus size must be >= 1");
    if (spec.topic_count < 1 || spec.topic_count > int(synth::topic_words().size()))
        throw std::invalid_argument("topic_count out of range");
    double mix_sum = 0.0;
    for (double w : spec.emotion_mix) {
        if (w < 0.0) throw std::invalid_argument("emotion mix has negative weight");
        mix_sum += w;
    }
    if (std::abs(mix_sum - 1.0) > 1e-6)
        throw std::invalid_argument("emotion mix must sum to 1 (got " + std::to_string(mix_sum) + ")");

    Rng rng(seed);
    std::vector<int> labels;
    labels.reserve(size_t(spec.size));
    auto quota = allocate_label_quota(spec.size, spec.emotion_mix);
    for (int e = 0; e < kNumEmotions; ++e)
        labels.insert(labels.end(), size_t(quota[size_t(e)]), e);
    rng.shuffle(labels);

    const auto& topics = synth::topic_words();
    const auto& lex = synth::marker_lexicons();
    std::vector<ConversationPair> pairs;
    pairs.reserve(size_t(spec.size));
    for (int i = 0; i < spec.size; ++i) {
        int e = labels[size_t(i)];
        const std::string& topic = topics[size_t(rng.range(0, spec.topic_count))];
        const auto& ptpl = synth::post_templates();
        const auto& mtpl = synth::marker_phrase_templates();
        const auto& ctpl = synth::content_templates();
        const auto& words = lex[size_t(e)];
        int m1 = rng.range(0, int(words.size()));
        int m2 = rng.range(0, int(words.size()));
        if (m2 == m1) m2 = (m2 + 1) % int(words.size());
        std::string post = synth::expand(ptpl[size_t(rng.range(0, int(ptpl.size())))], topic, "", "");
        std::string marker = synth::expand(mtpl[size_t(rng.range(0, int(mtpl.size())))], topic,
                                           words[size_t(m1)], words[size_t(m2)]);
        std::string content = synth::expand(ctpl[size_t(rng.range(0, int(ctpl.size())))], topic, "", "");
        ConversationPair p;
        p.post = split_tokens(post);
        p.response = split_tokens(marker + " " + content);
        p.emotion = EmotionLabel(e);
        if (int(p.post.size()) > spec.max_len || int(p.response.size()) > spec.max_len)
            throw std::logic_error("synthetic template exceeds max_len");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// ---- splits ----

struct CorpusSplit {
    std::vector<ConversationPair> train, dev, test;
    uint64_t seed = 0;
};

inline CorpusSplit split_corpus(const std::vector<ConversationPair>& pairs,
                                const std::array<double, 3>& ratios, uint64_t seed) {
    double rsum = 0.0;
    for (double r : ratios) {
        if (r <= 0.0) throw std::invalid_argument("split ratios must be positive");
        rsum += r;
    }
    if (std::abs(rsum - 1.0) > 1e-6) throw std::invalid_argument("split ratios must sum to 1");

    // group by post so identical posts never straddle a partition boundary
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < pairs.size(); ++i) groups[join_tokens(pairs[i].post)].push_back(i);
    if (groups.size() < 3) throw std::invalid_argument("need at least 3 unique posts to split");

    std::vector<std::string> keys;
    keys.reserve(groups.size());
    for (const auto& [k, v] : groups) keys.push_back(k);
    Rng rng(seed);
    rng.shuffle(keys);

    int n = int(keys.size());
    std::array<double, kNumEmotions> unused{};
    (void)unused;
    std::array<double, 3> mix3 = ratios;
    std::vector<int> counts(3, 0);
    {
        // largest-remainder allocation over post groups
        std::vector<std::pair<double, int>> rema;
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double exact = mix3[size_t(p)] * n;
            counts[size_t(p)] = int(exact);
            assigned += counts[size_t(p)];
            rema.emplace_back(-(exact - double(counts[size_t(p)])), p);
        }
        std::sort(rema.begin(), rema.end());
        for (int i = 0; assigned < n; ++i, ++assigned) ++counts[size_t(rema[size_t(i % 3)].second)];
        // every partition must get at least one group
        for (int p = 0; p < 3; ++p) {
            while (counts[size_t(p)] == 0) {
                int donor = int(std::max_element(counts.begin(), counts.end()) - counts.begin());
                --counts[size_t(donor)];
                ++counts[size_t(p)];
            }
        }
    }

    CorpusSplit out;
    out.seed = seed;
    int k = 0;
    for (int p = 0; p < 3; ++p) {
        auto* dst = p == 0 ? &out.train : p == 1 ? &out.dev : &out.test;
        for (int i = 0; i < counts[size_t(p)]; ++i, ++k)
            for (size_t idx : groups[keys[size_t(k)]]) dst->push_back(pairs[idx]);
    }
    return out;
}

// ---- encoding ----

struct EncodedPair {
    std::vector<int> post_ids;
    std::vector<int> resp_ids;
    int emotion_id = 0;  // 0..7, not the vocab token id
};

inline EncodedPair encode_pair(const ConversationPair& p, const Vocabulary& v) {
    EncodedPair e;
    e.post_ids = v.encode_tokens(p.post);
    e.resp_ids = v.encode_tokens(p.response);
    e.emotion_id = p.emotion.id;
    return e;
}

// ---- corpus file I/O: post<TAB>response<TAB>emotion_name ----

inline void save_corpus(const std::string& path, const std::vector<ConversationPair>& pairs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& p : pairs)
        os << join_tokens(p.post) << '\t' << join_tokens(p.response) << '\t' << p.emotion.name()
           << '\n';
}

inline std::vector<ConversationPair> load_corpus(const std::string& path, int max_len = 24) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read corpus file: " + path);
    std::vector<ConversationPair> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 3 fields");
        ConversationPair p;
        p.post = split_tokens(line.substr(0, t1));
        p.response = split_tokens(line.substr(t1 + 1, t2 - t1 - 1));
        p.emotion = EmotionLabel::from_name(line.substr(t2 + 1));
        if (p.post.empty() || p.response.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty post or response");
        if (int(p.post.size()) > max_len || int(p.response.size()) > max_len)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": sequence exceeds max length");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace emocvae
