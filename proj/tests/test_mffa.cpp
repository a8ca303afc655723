#include <cmath>
#include <vector>

#include "doctest.h"
#include "mffa/gradcheck.hpp"
#include "mffa/mffa_block.hpp"

using namespace mffa;

namespace {

Tensor rand_t(const Shape& s, Rng& rng, bool grad = false, real lo = -1, real hi = 1) {
    Tensor t = Tensor::zeros(s, grad);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

TABParams make_tab(int c, Rng& rng, bool grad = false) {
    TABParams p;
    p.agg = {rand_t({1, 1, 2 * c, c}, rng, grad, -0.4, 0.4), rand_t({c}, rng, grad, -0.1, 0.1)};
    p.gate = {rand_t({1, 1, 2 * c, 1}, rng, grad, -0.4, 0.4), rand_t({1}, rng, grad, -0.1, 0.1)};
    return p;
}

SABParams make_sab(int c, Rng& rng, bool grad = false) {
    SABParams p;
    p.proj_b = {rand_t({1, 1, c, c / 2}, rng, grad, -0.4, 0.4), rand_t({c / 2}, rng, grad, -0.1, 0.1)};
    p.proj_c = {rand_t({1, 1, c, c / 2}, rng, grad, -0.4, 0.4), rand_t({c / 2}, rng, grad, -0.1, 0.1)};
    p.w = Tensor::zeros({c, c}, grad);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
            p.w.data()[i * c + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.05, 0.05);
    p.bias = rand_t({c}, rng, grad, -0.1, 0.1);
    p.coarse = {rand_t({1, 1, c, 2}, rng, grad, -0.4, 0.4), rand_t({2}, rng, grad, -0.1, 0.1)};
    p.phi1 = {rand_t({3, 3, c + 2, c / 2}, rng, grad, -0.2, 0.2), rand_t({c / 2}, rng, grad, -0.1, 0.1)};
    p.phi2 = {rand_t({3, 3, c / 2, c}, rng, grad, -0.2, 0.2), rand_t({c}, rng, grad, -0.1, 0.1)};
    return p;
}

Mask random_mask(int h, int w, Rng& rng, double p = 0.4) {
    Mask m = Mask::zeros(h, w);
    for (auto& v : m.v) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("mffa");

TEST_CASE("tab with the gate forced shut is exactly ReLU(f)") {
    Rng rng(101);
    int c = 4;
    Tensor f = rand_t({3, 3, c}, rng);
    TABParams p = make_tab(c, rng);
    p.gate.bias.data()[0] = -800.0;  // sigmoid underflows to exactly 0
    for (int64_t i = 0; i < p.gate.kernel.size(); ++i) p.gate.kernel.data()[i] = 0.0;

    MFFAState st{rand_t({3, 3, c}, rng), random_mask(3, 3, rng)};
    Tensor out = tab_forward(f, st, p);
    for (int64_t i = 0; i < f.size(); ++i) {
        CHECK(out.data()[i] == (f.data()[i] > 0 ? f.data()[i] : 0.0));
    }
}

TEST_CASE("tab with an all-zero previous mask ignores the history values") {
    Rng rng(103);
    int c = 4;
    Tensor f = rand_t({4, 4, c}, rng);
    TABParams p = make_tab(c, rng);
    MFFAState a{rand_t({4, 4, c}, rng), Mask::zeros(4, 4)};
    MFFAState b{rand_t({4, 4, c}, rng), Mask::zeros(4, 4)};
    Tensor ya = tab_forward(f, a, p);
    Tensor yb = tab_forward(f, b, p);
    for (int64_t i = 0; i < ya.size(); ++i) CHECK(ya.data()[i] == yb.data()[i]);
}

TEST_CASE("tab matches an independent per-pixel hand evaluation") {
    Rng rng(107);
    int h = 2, w = 2, c = 4;
    Tensor f = rand_t({h, w, c}, rng);
    Tensor hp = rand_t({h, w, c}, rng);
    Mask m = random_mask(h, w, rng);
    TABParams p = make_tab(c, rng);

    Tensor got = tab_forward(f, MFFAState{hp, m}, p);

    const real* ak = p.agg.kernel.data();
    const real* ab = p.agg.bias.data();
    const real* gk = p.gate.kernel.data();
    real gb = p.gate.bias.data()[0];
    for (int pix = 0; pix < h * w; ++pix) {
        std::vector<real> cat(static_cast<size_t>(2 * c));
        for (int i = 0; i < c; ++i) {
            cat[static_cast<size_t>(i)] = hp.data()[pix * c + i] * real(m.v[static_cast<size_t>(pix)]);
            cat[static_cast<size_t>(c + i)] = f.data()[pix * c + i];
        }
        real gate_logit = gb;
        for (int i = 0; i < 2 * c; ++i) gate_logit += cat[static_cast<size_t>(i)] * gk[i];
        real gate = 1.0 / (1.0 + std::exp(-gate_logit));
        for (int j = 0; j < c; ++j) {
            real agg = ab[j];
            for (int i = 0; i < 2 * c; ++i) agg += cat[static_cast<size_t>(i)] * ak[i * c + j];
            real expect = f.data()[pix * c + j] + gate * agg;
            if (expect < 0) expect = 0;
            CHECK(got.data()[pix * c + j] == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("row-softmax attention is right-stochastic") {
    Rng rng(109);
    int c = 4, h = 3, w = 5;
    MFFAConfig cfg;
    cfg.channels = c;
    SABParams p = make_sab(c, rng);
    SABTrace trace;
    sab_forward(rand_t({h, w, c}, rng), p, cfg, &trace);
    REQUIRE(trace.attention.shape() == Shape{h * w, h * w});
    for (int r = 0; r < h * w; ++r) {
        real s = 0;
        for (int q = 0; q < h * w; ++q) s += trace.attention.data()[r * h * w + q];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("spatially constant features stay spatially constant through the affine step") {
    Rng rng(113);
    int c = 4, h = 3, w = 3;
    MFFAConfig cfg;
    cfg.channels = c;
    SABParams p = make_sab(c, rng);
    Tensor f = Tensor::zeros({h, w, c});
    for (int pix = 0; pix < h * w; ++pix)
        for (int j = 0; j < c; ++j) f.data()[pix * c + j] = 0.1 * (j + 1);
    SABTrace trace;
    Tensor s_crs = sab_forward(f, p, cfg, &trace).second;
    // The refinement convs see zero padding at the border, so only the affine
    // aggregation and the coarse map are spatially constant.
    for (int pix = 1; pix < h * w; ++pix) {
        for (int j = 0; j < c; ++j) {
            CHECK(trace.h_prime.data()[pix * c + j] ==
                  doctest::Approx(trace.h_prime.data()[j]).epsilon(1e-9));
        }
        CHECK(s_crs.data()[pix * 2] == doctest::Approx(s_crs.data()[0]).epsilon(1e-9));
    }
}

TEST_CASE("raw-normalization affine step matches a dense matrix oracle") {
    Rng rng(127);
    int c = 4, h = 3, w = 3, hw = h * w;
    MFFAConfig cfg;
    cfg.channels = c;
    cfg.attention_normalization = AttnNorm::raw;
    SABParams p = make_sab(c, rng);
    // w = I, b = 0 so the oracle reduces to A * f'_a.
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) p.w.data()[i * c + j] = (i == j) ? 1.0 : 0.0;
    for (int j = 0; j < c; ++j) p.bias.data()[j] = 0.0;

    Tensor f = rand_t({h, w, c}, rng);
    SABTrace trace;
    sab_forward(f, p, cfg, &trace);

    // Independent evaluation with plain loops.
    auto proj = [&](const ConvParam& cp, int pix, int j) {
        real s = cp.bias.data()[j];
        for (int i = 0; i < c; ++i) s += f.data()[pix * c + i] * cp.kernel.data()[i * (c / 2) + j];
        return s > 0 ? s : 0.0;
    };
    std::vector<real> fb(static_cast<size_t>(hw * c / 2)), fc(static_cast<size_t>(hw * c / 2));
    for (int pix = 0; pix < hw; ++pix) {
        for (int j = 0; j < c / 2; ++j) {
            fb[static_cast<size_t>(pix * c / 2 + j)] = proj(p.proj_b, pix, j);
            fc[static_cast<size_t>(pix * c / 2 + j)] = proj(p.proj_c, pix, j);
        }
    }
    for (int pix = 0; pix < hw; ++pix) {
        for (int i = 0; i < c; ++i) {
            real expect = 0;
            for (int q = 0; q < hw; ++q) {
                real a = 0;
                for (int j = 0; j < c / 2; ++j)
                    a += fb[static_cast<size_t>(pix * c / 2 + j)] * fc[static_cast<size_t>(q * c / 2 + j)];
                expect += a * f.data()[q * c + i];
            }
            CHECK(trace.h_prime.data()[pix * c + i] == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("coarse map is a valid per-pixel distribution") {
    Rng rng(131);
    int c = 6, h = 4, w = 4;
    MFFAConfig cfg;
    cfg.channels = c;
    Tensor s_crs = sab_forward(rand_t({h, w, c}, rng), make_sab(c, rng), cfg).second;
    REQUIRE(s_crs.shape() == Shape{h, w, 2});
    for (int pix = 0; pix < h * w; ++pix) {
        CHECK(std::abs(s_crs.data()[2 * pix] + s_crs.data()[2 * pix + 1] - 1.0) < 1e-6);
    }
}

TEST_CASE("mffa_forward without state is sab_forward, and a pure function") {
    Rng rng(137);
    int c = 4;
    MFFAConfig cfg;
    cfg.channels = c;
    MFFAParams p{make_tab(c, rng), make_sab(c, rng)};
    Tensor f = rand_t({3, 4, c}, rng);
    auto [h1, s1] = mffa_forward(f, std::nullopt, p, cfg);
    auto [h2, s2] = sab_forward(f, p.sab, cfg);
    auto [h3, s3] = mffa_forward(f, std::nullopt, p, cfg);
    REQUIRE(h1.shape() == Shape{3, 4, c});
    for (int64_t i = 0; i < h1.size(); ++i) {
        CHECK(h1.data()[i] == h2.data()[i]);
        CHECK(h1.data()[i] == h3.data()[i]);
    }
    for (int64_t i = 0; i < s1.size(); ++i) {
        CHECK(s1.data()[i] == s2.data()[i]);
        CHECK(s1.data()[i] == s3.data()[i]);
    }
}

TEST_CASE("zero gate makes the stateful pass match the stateless one on nonnegative features") {
    Rng rng(139);
    int c = 4;
    MFFAConfig cfg;
    cfg.channels = c;
    MFFAParams p{make_tab(c, rng), make_sab(c, rng)};
    p.tab.gate.bias.data()[0] = -800.0;
    for (int64_t i = 0; i < p.tab.gate.kernel.size(); ++i) p.tab.gate.kernel.data()[i] = 0.0;

    Tensor f = rand_t({3, 3, c}, rng, false, 0.0, 1.0);  // nonnegative, so ReLU(f) == f
    MFFAState st{rand_t({3, 3, c}, rng), random_mask(3, 3, rng)};
    auto with_state = mffa_forward(f, st, p, cfg);
    auto without = mffa_forward(f, std::nullopt, p, cfg);
    for (int64_t i = 0; i < with_state.first.size(); ++i) {
        CHECK(with_state.first.data()[i] == doctest::Approx(without.first.data()[i]).epsilon(1e-9));
    }
}

TEST_CASE("output extents follow the input and channels stay C") {
    Rng rng(149);
    int c = 6;
    MFFAConfig cfg;
    cfg.channels = c;
    MFFAParams p{make_tab(c, rng), make_sab(c, rng)};
    for (auto [h, w] : {std::pair{2, 7}, std::pair{5, 3}, std::pair{4, 4}}) {
        MFFAState st{rand_t({h, w, c}, rng), random_mask(2 * h, 2 * w, rng)};
        auto [hi, s] = mffa_forward(rand_t({h, w, c}, rng), st, p, cfg);
        CHECK(hi.shape() == Shape{h, w, c});
        CHECK(s.shape() == Shape{h, w, 2});
    }
}

TEST_CASE("odd channel count is rejected") {
    MFFAConfig cfg;
    cfg.channels = 5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("full MFFA gradient check on 6x6 inputs") {
    Rng rng(151);
    int c = 4, h = 6, w = 6;
    MFFAConfig cfg;
    cfg.channels = c;
    MFFAParams p{make_tab(c, rng, true), make_sab(c, rng, true)};
    Tensor f = rand_t({h, w, c}, rng, true, 0.05, 1.0);
    Tensor h_prev = rand_t({h, w, c}, rng, true, -0.5, 1.0);
    Mask m = random_mask(h, w, rng);
    Tensor onehot = Tensor::zeros({h, w, 2});
    for (int pix = 0; pix < h * w; ++pix) {
        int inst = rng.bernoulli(0.3) ? 1 : 0;
        onehot.data()[2 * pix] = inst;
        onehot.data()[2 * pix + 1] = 1 - inst;
    }
    Tensor probe = rand_t({h, w, c}, rng, false, 0.25, 1.75);

    std::vector<Tensor> wrt{f, h_prev,
                            p.tab.agg.kernel, p.tab.agg.bias, p.tab.gate.kernel, p.tab.gate.bias,
                            p.sab.proj_b.kernel, p.sab.proj_b.bias, p.sab.proj_c.kernel,
                            p.sab.proj_c.bias, p.sab.w, p.sab.bias, p.sab.coarse.kernel,
                            p.sab.coarse.bias, p.sab.phi1.kernel, p.sab.phi1.bias,
                            p.sab.phi2.kernel, p.sab.phi2.bias};

    auto loss = [&]() {
        auto [hi, s_crs] = mffa_forward(f, MFFAState{h_prev, m}, p, cfg);
        // Cross-entropy on the coarse map plus a probe on the features covers
        // every parameter of both blocks.
        Tensor ce = scale(sum(mul(onehot, log_clamped(s_crs, 1e-12))), -1.0 / real(onehot.size()));
        return add(ce, scale(sum(mul(hi, probe)), 0.05));
    };
    CHECK(finite_diff_check(loss, wrt, 1e-5) < 1e-4);
}

TEST_SUITE_END();
