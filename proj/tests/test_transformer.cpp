#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "emocvae/transformer.hpp"

using namespace emocvae;

namespace {

std::vector<int> ids(int n, int base = 20) {
    std::vector<int> v;
    for (int i = 0; i < n; ++i) v.push_back(base + i);
    return v;
}

struct Fixture {
    ParamStore params;
    Transformer tf;
    Fixture(TransformerConfig cfg, int latent, uint64_t seed, double init = 0.02) {
        Rng rng(seed);
        tf = Transformer(params, "t.", cfg, latent, rng, init);
    }
};

TransformerConfig small_cfg(int vocab = 40) {
    TransformerConfig c;
    c.layers = 2;
    c.heads = 2;
    c.hidden_dim = 16;
    c.ffn_dim = 32;
    c.max_positions = 32;
    c.vocab_size = vocab;
    return c;
}

AttentionMask self_only(int n) {
    AttentionMask m(n);
    for (int i = 0; i < n; ++i) m.set(i, i);
    return m;
}

}  // namespace

TEST_CASE("config validation") {
    TransformerConfig c = small_cfg();
    c.hidden_dim = 15;  // not divisible by heads
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_cfg();
    c.layers = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("embedding is additive: one changed token changes one row") {
    Fixture f(small_cfg(), 0, 1);
    auto L1 = build_decoder_layout(ids(3), ids(2, 30), LayoutMode::TRAIN, VariantId::SEQ2SEQ,
                                   EmotionLabel(0));
    auto L2 = L1;
    L2.items[2].vocab_id += 1;
    NoGradGuard ng;
    Mat h1 = f.tf.embed(L1)->val;
    Mat h2 = f.tf.embed(L2)->val;
    for (int i = 0; i < h1.rows; ++i) {
        bool equal = true;
        for (int c = 0; c < h1.cols; ++c) equal = equal && h1.at(i, c) == h2.at(i, c);
        CHECK(equal == (i != 2));
    }
}

TEST_CASE("z slot embedding is the projected latent plus segment and position") {
    TransformerConfig cfg = small_cfg();
    Fixture f(cfg, cfg.hidden_dim, 2);
    // identity projection
    Tensor w = f.params.get("t.z_proj.w");
    w->val.fill(0.0);
    for (int i = 0; i < cfg.hidden_dim; ++i) w->val.at(i, i) = 1.0;
    auto L = build_decoder_layout(ids(2), std::nullopt, LayoutMode::TEST);
    Rng rng(3);
    Mat z(1, cfg.hidden_dim);
    for (auto& x : z.a) x = rng.normal();
    NoGradGuard ng;
    Mat h = f.tf.embed(L, make_constant(z))->val;
    const Mat& seg = f.tf.segment_embedding()->val;
    const Mat& pos = f.tf.position_embedding()->val;
    for (int c = 0; c < cfg.hidden_dim; ++c)
        CHECK(h.at(0, c) == doctest::Approx(z.at(0, c) + seg.at(0, c) + pos.at(0, c)));

    CHECK_THROWS_AS(f.tf.embed(L, nullptr), std::invalid_argument);
    Mat bad(1, cfg.hidden_dim + 1);
    CHECK_THROWS_AS(f.tf.embed(L, make_constant(bad)), std::invalid_argument);
    // a layout without a Z slot needs no z vector
    auto plain = build_decoder_layout(ids(2), std::nullopt, LayoutMode::TEST, VariantId::SEQ2SEQ,
                                      EmotionLabel(1));
    CHECK_NOTHROW(f.tf.embed(plain));
}

TEST_CASE("decoder causality: perturbing a future response token is invisible to the past") {
    Fixture f(small_cfg(), 8, 4);
    auto L1 = build_decoder_layout(ids(2), ids(3, 30), LayoutMode::TRAIN);
    auto mask = build_decoder_mask(L1);
    Mat z(1, 8);
    Rng rng(5);
    for (auto& x : z.a) x = rng.normal();
    NoGradGuard ng;
    Mat h1 = f.tf.forward(L1, mask, make_constant(z))->val;
    auto L2 = L1;
    int sos = L1.find_role(TokenRole::SOS);
    int perturbed = sos + 3;  // last response token
    L2.items[size_t(perturbed)].vocab_id += 1;
    Mat h2 = f.tf.forward(L2, mask, make_constant(z))->val;
    for (int i = 0; i < perturbed; ++i)
        for (int c = 0; c < h1.cols; ++c) CHECK(h1.at(i, c) == h2.at(i, c));
    // the perturbed row itself must differ
    bool differs = false;
    for (int c = 0; c < h1.cols; ++c) differs = differs || h1.at(perturbed, c) != h2.at(perturbed, c);
    CHECK(differs);
}

TEST_CASE("encoder [Emotion] output is exactly independent of the post") {
    Fixture f(small_cfg(), 0, 6);
    auto L1 = build_encoder_layout(ids(3), ids(2, 30), EmotionLabel(2), LayoutMode::TRAIN);
    auto mask = build_encoder_mask(L1);
    NoGradGuard ng;
    Mat h1 = f.tf.forward(L1, mask)->val;
    auto L2 = L1;
    L2.items[3].vocab_id += 5;  // first post token
    Mat h2 = f.tf.forward(L2, mask)->val;
    int emo = L1.find_role(TokenRole::EMOTION);
    for (int c = 0; c < h1.cols; ++c) CHECK(h1.at(emo, c) == h2.at(emo, c));
}

TEST_CASE("self-only mask makes every output a function of its own input") {
    Fixture f(small_cfg(), 0, 7);
    auto L1 = build_encoder_layout(ids(2), ids(2, 30), EmotionLabel(0), LayoutMode::TRAIN);
    AttentionMask m = self_only(L1.size());
    NoGradGuard ng;
    Mat h1 = f.tf.forward(L1, m)->val;
    auto L2 = L1;
    L2.items[4].vocab_id += 3;
    Mat h2 = f.tf.forward(L2, m)->val;
    for (int i = 0; i < h1.rows; ++i) {
        bool equal = true;
        for (int c = 0; c < h1.cols; ++c) equal = equal && h1.at(i, c) == h2.at(i, c);
        CHECK(equal == (i != 4));
    }
}

TEST_CASE("lm head: proper distribution; zero init is uniform with ppl = vocab size") {
    TransformerConfig cfg = small_cfg(23);
    Fixture f(cfg, 0, 8);
    auto L = build_decoder_layout(ids(2), ids(2, 10), LayoutMode::TRAIN, VariantId::SEQ2SEQ,
                                  EmotionLabel(0));
    auto mask = build_decoder_mask(L);
    NoGradGuard ng;
    Tensor h = f.tf.forward(L, mask);
    Mat logits = f.tf.lm_logits(h)->val;
    for (int r = 0; r < logits.rows; ++r) {
        double mx = logits.at(r, 0);
        for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
        double z = 0.0;
        int argmax = 0;
        for (int c = 0; c < logits.cols; ++c) {
            z += std::exp(logits.at(r, c) - mx);
            if (logits.at(r, c) > logits.at(r, argmax)) argmax = c;
        }
        double total = 0.0;
        for (int c = 0; c < logits.cols; ++c) total += std::exp(logits.at(r, c) - mx) / z;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(argmax >= 0);
        CHECK(argmax < cfg.vocab_size);
    }

    Fixture zero(cfg, 0, 9, 0.0);
    Tensor hz = zero.tf.forward(L, mask);
    Mat lz = zero.tf.lm_logits(hz)->val;
    for (int r = 0; r < lz.rows; ++r)
        for (int c = 0; c < lz.cols; ++c) CHECK(lz.at(r, c) == doctest::Approx(0.0));
    // uniform next-token model: per-token NLL = log V, so PPL = V
    double nll = std::log(double(cfg.vocab_size));
    CHECK(std::exp(nll) == doctest::Approx(double(cfg.vocab_size)));
}

TEST_CASE("full-stack analytic gradients match central finite differences") {
    TransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.hidden_dim = 8;
    cfg.ffn_dim = 16;
    cfg.max_positions = 16;
    cfg.vocab_size = 22;
    Fixture f(cfg, 4, 10);
    auto L = build_decoder_layout(ids(2, 16), ids(2, 18), LayoutMode::TRAIN);
    auto mask = build_decoder_mask(L);
    Mat z(1, 4);
    Rng rng(11);
    for (auto& x : z.a) x = rng.normal();
    std::vector<int> targets(size_t(L.size()), -1);
    int sos = L.find_role(TokenRole::SOS);
    targets[size_t(sos)] = 18;
    targets[size_t(sos) + 1] = 19;
    targets[size_t(sos) + 2] = TOK_EOS;

    auto loss_value = [&]() {
        NoGradGuard ng;
        Tensor h = f.tf.forward(L, mask, make_constant(z));
        return cross_entropy_sum(f.tf.lm_logits(h), targets)->val.at(0, 0);
    };
    f.params.zero_grads();
    {
        Tensor h = f.tf.forward(L, mask, make_constant(z));
        Tensor loss = cross_entropy_sum(f.tf.lm_logits(h), targets);
        backward(loss);
    }
    Rng pick(12);
    int checked = 0;
    const auto& items = f.params.items();
    while (checked < 60) {
        const auto& [name, t] = items[size_t(pick.below(items.size()))];
        size_t k = size_t(pick.below(t->val.a.size()));
        double saved = t->val.a[k];
        double h = 1e-5;
        t->val.a[k] = saved + h;
        double up = loss_value();
        t->val.a[k] = saved - h;
        double dn = loss_value();
        t->val.a[k] = saved;
        double numeric = (up - dn) / (2.0 * h);
        double analytic = t->grad.a[k];
        double denom = std::max({1e-6, std::abs(numeric), std::abs(analytic)});
        INFO(name, "[", k, "] analytic=", analytic, " numeric=", numeric);
        CHECK(std::abs(analytic - numeric) / denom < 1e-3);
        ++checked;
    }
}

TEST_CASE("same seed and inputs give bit-identical parameters and outputs") {
    Fixture a(small_cfg(), 8, 42);
    Fixture b(small_cfg(), 8, 42);
    CHECK(a.params.digest() == b.params.digest());
    auto L = build_decoder_layout(ids(2), ids(2, 30), LayoutMode::TRAIN);
    auto mask = build_decoder_mask(L);
    Mat z(1, 8);
    z.fill(0.3);
    NoGradGuard ng;
    Mat h1 = a.tf.forward(L, mask, make_constant(z))->val;
    Mat h2 = b.tf.forward(L, mask, make_constant(z))->val;
    CHECK(h1.a == h2.a);
}

TEST_CASE("non-finite activations are reported with a layer index") {
    Fixture f(small_cfg(), 0, 13);
    f.params.get("t.layer1.ffn.w1")->val.fill(std::numeric_limits<double>::infinity());
    auto L = build_encoder_layout(ids(2), ids(2, 30), EmotionLabel(0), LayoutMode::TRAIN);
    auto mask = build_encoder_mask(L);
    CHECK_THROWS_WITH_AS(f.tf.forward(L, mask), doctest::Contains("layer"), std::runtime_error);
}

TEST_CASE("mask side must equal row count") {
    Fixture f(small_cfg(), 0, 14);
    auto L = build_encoder_layout(ids(2), ids(2, 30), EmotionLabel(0), LayoutMode::TRAIN);
    AttentionMask wrong(L.size() + 1);
    CHECK_THROWS_AS(f.tf.forward(L, wrong), std::invalid_argument);
}
