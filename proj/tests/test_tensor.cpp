#include <cmath>

#include "doctest.h"
#include "mffa/gradcheck.hpp"
#include "mffa/tensor.hpp"

using namespace mffa;

namespace {

Tensor rand_t(const Shape& s, Rng& rng, bool grad = false, real lo = -1, real hi = 1) {
    Tensor t = Tensor::zeros(s, grad);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d scalar scaling: 1x1 kernel of 2 doubles a map of ones") {
    Tensor x = Tensor::full({3, 3, 1}, 1.0);
    Tensor k = Tensor::full({1, 1, 1, 1}, 2.0);
    Tensor y = conv2d(x, k, 1, Padding::same);
    REQUIRE(y.shape() == Shape{3, 3, 1});
    for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 2.0);
}

TEST_CASE("conv2d identity: center-delta 3x3 kernel reproduces the input") {
    Rng rng(7);
    Tensor x = rand_t({4, 5, 1}, rng);
    Tensor k = Tensor::zeros({3, 3, 1, 1});
    k.data()[4] = 1.0;  // center tap
    Tensor y = conv2d(x, k, 1, Padding::same);
    REQUIRE(y.shape() == x.shape());
    for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d gradient matches central finite differences") {
    Rng rng(11);
    Tensor x = rand_t({5, 5, 2}, rng, true);
    Tensor k = rand_t({3, 3, 2, 3}, rng, true);
    Tensor probe = rand_t({5, 5, 3}, rng, false, 0.25, 1.75);
    auto f = [&]() { return sum(mul(conv2d(x, k, 1, Padding::same), probe)); };
    CHECK(finite_diff_check(f, {x, k}, 1e-5) < 1e-4);
}

TEST_CASE("conv2d rejects channel mismatch naming the axis") {
    Tensor x = Tensor::zeros({4, 4, 3});
    Tensor k = Tensor::zeros({3, 3, 2, 1});
    CHECK_THROWS_WITH_AS(conv2d(x, k, 1, Padding::same),
                         doctest::Contains("axis 2"), ValidationError);
}

TEST_CASE("matmul identity and hand arithmetic") {
    Rng rng(3);
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
    Tensor x = rand_t({3, 4}, rng);
    Tensor y = matmul(eye, x);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.data()[0] == 3.0);
    CHECK(c.data()[1] == 7.0);
}

TEST_CASE("matmul gradient check on 4x6 by 6x5") {
    Rng rng(5);
    Tensor a = rand_t({4, 6}, rng, true);
    Tensor b = rand_t({6, 5}, rng, true);
    Tensor probe = rand_t({4, 5, 1}, rng, false, 0.25, 1.75);
    auto f = [&]() { return sum(mul(matmul(a, b).reshaped({4, 5, 1}), probe)); };
    CHECK(finite_diff_check(f, {a, b}, 1e-5) < 1e-4);
}

TEST_CASE("matmul rejects inner-extent mismatch") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ValidationError);
}

TEST_CASE("elementwise closed forms") {
    Tensor z = Tensor::from({1, 1, 2}, {0.0, -3.0});
    CHECK(sigmoid(z).data()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(relu(z).data()[1] == 0.0);
    Tensor p = Tensor::from({1}, {3.0});
    CHECK(relu(p).data()[0] == 3.0);
}

TEST_CASE("single-channel mask broadcast zeroes masked pixels across channels") {
    Rng rng(13);
    Tensor x = rand_t({2, 3, 4}, rng);
    Tensor m = Tensor::from({2, 3, 1}, {1, 0, 1, 0, 1, 0});
    Tensor y = mul(x, m);
    for (int p = 0; p < 6; ++p) {
        for (int c = 0; c < 4; ++c) {
            real expect = m.data()[p] == 0 ? 0.0 : x.data()[p * 4 + c];
            CHECK(y.data()[p * 4 + c] == expect);
        }
    }
}

TEST_CASE("non-broadcastable shapes are rejected") {
    CHECK_THROWS_AS(add(Tensor::zeros({2, 2, 3}), Tensor::zeros({2, 3, 3})), ValidationError);
    CHECK_THROWS_AS(mul(Tensor::zeros({2, 2, 3}), Tensor::zeros({2, 2, 2})), ValidationError);
}

TEST_CASE("softmax_channel closed forms and normalization") {
    Tensor z = Tensor::from({1, 1, 2}, {0.0, 0.0});
    Tensor s = softmax_channel(z);
    CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor l = Tensor::from({1, 1, 2}, {std::log(3.0), 0.0});
    Tensor s2 = softmax_channel(l);
    CHECK(s2.data()[0] == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(s2.data()[1] == doctest::Approx(0.25).epsilon(1e-9));

    Rng rng(17);
    Tensor x = rand_t({4, 4, 2}, rng);
    Tensor sx = softmax_channel(x);
    for (int p = 0; p < 16; ++p) {
        real total = sx.data()[2 * p] + sx.data()[2 * p + 1];
        CHECK(std::abs(total - 1.0) < 1e-6);
        CHECK(sx.data()[2 * p] > 0);
    }
}

TEST_CASE("softmax_channel is invariant to per-pixel constant shifts") {
    Rng rng(19);
    Tensor x = rand_t({3, 5, 4}, rng);
    Tensor shifted = x.clone_data();
    for (int p = 0; p < 15; ++p) {
        real c = rng.uniform(-20, 20);
        for (int k = 0; k < 4; ++k) shifted.data()[p * 4 + k] += c;
    }
    Tensor a = softmax_channel(x), b = softmax_channel(shifted);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-6);
}

TEST_CASE("concat_channels shapes, zero-channel identity, gradient routing") {
    Rng rng(23);
    Tensor a = rand_t({2, 2, 3}, rng);
    Tensor b = rand_t({2, 2, 5}, rng);
    CHECK(concat_channels(a, b).shape() == Shape{2, 2, 8});

    Tensor empty = Tensor::zeros({2, 2, 0});
    Tensor same = concat_channels(a, empty);
    REQUIRE(same.shape() == a.shape());
    for (int64_t i = 0; i < a.size(); ++i) CHECK(same.data()[i] == a.data()[i]);

    Tensor ga = rand_t({2, 2, 1}, rng, true);
    Tensor gb = rand_t({2, 2, 2}, rng, true);
    Tape tape;
    {
        Tape::Scope scope(tape);
        Tensor loss = sum(concat_channels(ga, gb));
        tape.backward(loss);
    }
    for (int64_t i = 0; i < ga.size(); ++i) CHECK(ga.grad()[i] == 1.0);
    for (int64_t i = 0; i < gb.size(); ++i) CHECK(gb.grad()[i] == 1.0);

    CHECK_THROWS_AS(concat_channels(Tensor::zeros({2, 2, 1}), Tensor::zeros({3, 2, 1})),
                    ValidationError);
}

TEST_CASE("resample identity, constancy, nearest block structure") {
    Rng rng(29);
    Tensor x = rand_t({4, 4, 2}, rng);
    Tensor same = resample_bilinear(x, 4, 4);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

    Tensor c = Tensor::full({3, 3, 1}, 0.7);
    Tensor up = resample_bilinear(c, 9, 7);
    for (int64_t i = 0; i < up.size(); ++i) CHECK(up.data()[i] == doctest::Approx(0.7).epsilon(1e-12));

    // 4x4 mask with a ones block in the top-left quadrant.
    Tensor m = Tensor::zeros({4, 4, 1});
    m.data()[0] = m.data()[1] = m.data()[4] = m.data()[5] = 1.0;
    Tensor down = resample_nearest(m, 2, 2);
    CHECK(down.data()[0] == 1.0);
    CHECK(down.data()[1] == 0.0);
    CHECK(down.data()[2] == 0.0);
    CHECK(down.data()[3] == 0.0);
}

TEST_CASE("resample_nearest refuses traced inputs") {
    Tensor x = Tensor::zeros({4, 4, 1}, true);
    Tape tape;
    Tape::Scope scope(tape);
    CHECK_THROWS_AS(resample_nearest(x, 2, 2), ValidationError);
}

TEST_CASE("finite_diff_check oracle self-tests") {
    Rng rng(31);
    Tensor x = rand_t({3, 3, 2}, rng, true);
    CHECK(finite_diff_check([&]() { return sum(x); }, x, 1e-5) < 1e-9);
    CHECK(finite_diff_check([&]() { return sum(sigmoid(x)); }, x, 1e-5) < 1e-6);
    CHECK_THROWS_AS(finite_diff_check([&]() { return sigmoid(x); }, x, 1e-5), ValidationError);
}

TEST_CASE("every registered op passes the gradient check on three shapes") {
    auto results = run_gradchecks(1234, false);
    for (const auto& r : results) {
        INFO(r.name << " err=" << r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("gradient accumulation is additive over op sums") {
    Rng rng(37);
    Tensor x = rand_t({2, 3, 1}, rng, true);

    auto grad_of = [&](auto&& fn) {
        x.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = fn();
        tape.backward(loss);
        return std::vector<real>(x.grad(), x.grad() + x.size());
    };

    auto g1 = grad_of([&]() { return sum(sigmoid(x)); });
    auto g2 = grad_of([&]() { return sum(mul(x, x)); });
    auto gs = grad_of([&]() { return add(sum(sigmoid(x)), sum(mul(x, x))); });
    for (size_t i = 0; i < g1.size(); ++i) {
        CHECK(gs[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
    }
}

TEST_CASE("reshape composes to a single reshape and shares data") {
    Rng rng(41);
    Tensor x = rand_t({2, 3, 4}, rng);
    Tensor once = x.reshaped({24});
    Tensor twice = x.reshaped({6, 4}).reshaped({24});
    for (int64_t i = 0; i < 24; ++i) CHECK(once.data()[i] == twice.data()[i]);
    CHECK(twice.data_handle() == x.data_handle());
    CHECK_THROWS_AS(x.reshaped({5, 5}), ValidationError);
}

TEST_CASE("tape replays records in strict reverse order of creation") {
    Tape tape;
    std::vector<int> order;
    Tensor x = Tensor::zeros({1}, true);
    {
        Tape::Scope scope(tape);
        tape.record([&]() { order.push_back(1); });
        tape.record([&]() { order.push_back(2); });
        tape.record([&]() { order.push_back(3); });
        Tensor loss = scale(x, 2.0);
        tape.backward(loss);
    }
    REQUIRE(order.size() == 3);
    CHECK(order[0] == 3);
    CHECK(order[1] == 2);
    CHECK(order[2] == 1);
}

TEST_CASE("ops are untracked without a tape and tracked within one") {
    Tensor x = Tensor::zeros({2, 2, 1}, true);
    Tensor y0 = relu(x);
    CHECK_FALSE(y0.requires_grad());
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y1 = relu(x);
    CHECK(y1.requires_grad());
    CHECK(tape.num_records() == 1);
}

TEST_SUITE_END();
