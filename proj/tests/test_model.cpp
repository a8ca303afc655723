#include <cmath>

#include "doctest.h"
#include "mffa/gradcheck.hpp"
#include "mffa/losses.hpp"
#include "mffa/model.hpp"

using namespace mffa;

namespace {

ModelConfig small_cfg(MFFAMode mode = MFFAMode::full, EncoderVariant variant = EncoderVariant::trimmed) {
    ModelConfig cfg;
    cfg.encoder.variant = variant;
    cfg.encoder.base_channels = 4;
    cfg.encoder.out_channels = 8;
    cfg.encoder.output_stride = 4;
    cfg.mffa.channels = 8;
    cfg.mode = mode;
    cfg.frame_h = 16;
    cfg.frame_w = 16;
    return cfg;
}

Tensor rand_frame(int h, int w, Rng& rng) {
    Tensor t = Tensor::zeros({h, w, 3});
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(0.0, 1.0);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("encode maps a 64x64 frame to 16x16 features at stride 4") {
    ModelConfig cfg = small_cfg();
    cfg.frame_h = cfg.frame_w = 64;
    ModelParams mp = init_model_params(cfg, 1);
    Rng rng(2);
    Tensor f = encode(rand_frame(64, 64, rng), mp);
    CHECK(f.shape() == Shape{16, 16, 8});
}

TEST_CASE("encode rejects extents not divisible by the stride") {
    ModelParams mp = init_model_params(small_cfg(), 1);
    Rng rng(3);
    CHECK_THROWS_AS(encode(rand_frame(18, 16, rng), mp), ValidationError);
}

TEST_CASE("zero frame encodes deterministically") {
    ModelParams mp = init_model_params(small_cfg(), 4);
    Tensor zero = Tensor::zeros({16, 16, 3});
    CHECK(bitwise_equal(encode(zero, mp), encode(zero, mp)));
}

TEST_CASE("decode produces per-pixel distributions at frame resolution") {
    ModelConfig cfg = small_cfg();
    ModelParams mp = init_model_params(cfg, 5);
    Rng rng(6);
    Tensor feat = Tensor::zeros({4, 4, 8});
    for (int64_t i = 0; i < feat.size(); ++i) feat.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor s = decode(feat, mp);
    REQUIRE(s.shape() == Shape{16, 16, 2});
    for (int p = 0; p < 16 * 16; ++p) {
        CHECK(std::abs(s.data()[2 * p] + s.data()[2 * p + 1] - 1.0) < 1e-6);
    }
}

TEST_CASE("gradient check through decode on 8x8 features") {
    ModelConfig cfg = small_cfg();
    cfg.frame_h = cfg.frame_w = 32;  // stride 4 -> 8x8 features
    ModelParams mp = init_model_params(cfg, 7);
    Rng rng(8);
    Tensor feat = Tensor::zeros({8, 8, 8}, true);
    for (int64_t i = 0; i < feat.size(); ++i) feat.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor probe = Tensor::zeros({32, 32, 2});
    for (int64_t i = 0; i < probe.size(); ++i) probe.data()[i] = rng.uniform(0.25, 1.75);

    std::vector<Tensor> wrt{feat, mp.store.at(mp.dec_conv.k), mp.store.at(mp.dec_conv.b),
                            mp.store.at(mp.dec_head.k), mp.store.at(mp.dec_head.b)};
    auto f = [&]() { return sum(mul(decode(feat, mp), probe)); };
    CHECK(finite_diff_check(f, wrt, 1e-5) < 1e-4);
}

TEST_CASE("predict_mask argmax rules") {
    Tensor s = Tensor::zeros({2, 2, 2});
    for (int p = 0; p < 4; ++p) {
        s.data()[2 * p] = 0.6;
        s.data()[2 * p + 1] = 0.4;
    }
    Mask m = predict_mask(s);
    CHECK(m.count() == 4);

    // Exact tie goes to background.
    Tensor tie = Tensor::full({2, 2, 2}, 0.5);
    CHECK(predict_mask(tie).count() == 0);
}

TEST_CASE("predict_mask is invariant under monotone per-pixel logit rescaling") {
    Rng rng(9);
    Tensor logits = Tensor::zeros({4, 4, 2});
    for (int64_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2.0, 2.0);
    Tensor rescaled = logits.clone_data();
    for (int p = 0; p < 16; ++p) {
        real a = rng.uniform(0.5, 3.0), b = rng.uniform(-1.0, 1.0);
        rescaled.data()[2 * p] = a * rescaled.data()[2 * p] + b;
        rescaled.data()[2 * p + 1] = a * rescaled.data()[2 * p + 1] + b;
    }
    Mask m1 = predict_mask(softmax_channel(logits));
    Mask m2 = predict_mask(softmax_channel(rescaled));
    CHECK(m1.v == m2.v);
}

TEST_CASE("length-1 sequences are direction independent") {
    ModelParams mp = init_model_params(small_cfg(), 10);
    Rng rng(11);
    std::vector<Tensor> frames{rand_frame(16, 16, rng)};
    SequenceOutput fw = run_sequence(frames, Direction::forward, mp);
    SequenceOutput bw = run_sequence(frames, Direction::backward, mp);
    CHECK(bitwise_equal(fw.frames[0].softmax, bw.frames[0].softmax));
    CHECK(fw.frames[0].provenance == 0);
    CHECK(bw.frames[0].provenance == 2);
}

TEST_CASE("temporal state changes the second frame's output") {
    ModelParams mp = init_model_params(small_cfg(), 12);
    Rng rng(13);
    std::vector<Tensor> frames{rand_frame(16, 16, rng), rand_frame(16, 16, rng)};
    SequenceOutput fw = run_sequence(frames, Direction::forward, mp);
    StepOutput stateless = model_step(frames[1], std::nullopt, mp);
    CHECK_FALSE(bitwise_equal(fw.frames[1].softmax, stateless.softmax));
}

TEST_CASE("provenance tags for N=4") {
    ModelParams mp = init_model_params(small_cfg(), 14);
    Rng rng(15);
    std::vector<Tensor> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(rand_frame(16, 16, rng));
    SequenceOutput fw = run_sequence(frames, Direction::forward, mp);
    SequenceOutput bw = run_sequence(frames, Direction::backward, mp);
    for (int i = 0; i < 4; ++i) {
        CHECK(fw.frames[static_cast<size_t>(i)].provenance == i);
        CHECK(bw.frames[static_cast<size_t>(i)].provenance == i + 2);
    }
    // Frame order (1-based): forward 0,1,2,3; backward 5,4,3,2.
    CHECK(bw.frames[3].provenance == 5);
    CHECK(bw.frames[0].provenance == 2);
}

TEST_CASE("reversed sequence with reversed direction reproduces the same outputs") {
    ModelParams mp = init_model_params(small_cfg(), 16);
    Rng rng(17);
    std::vector<Tensor> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(rand_frame(16, 16, rng));
    std::vector<Tensor> reversed(frames.rbegin(), frames.rend());

    SequenceOutput bw = run_sequence(frames, Direction::backward, mp);
    SequenceOutput fw_rev = run_sequence(reversed, Direction::forward, mp);
    for (int i = 0; i < 3; ++i) {
        CHECK(bitwise_equal(bw.frames[static_cast<size_t>(i)].softmax,
                            fw_rev.frames[static_cast<size_t>(2 - i)].softmax));
    }
}

TEST_CASE("run_sequence validates frame extents") {
    ModelParams mp = init_model_params(small_cfg(), 18);
    Rng rng(19);
    std::vector<Tensor> frames{rand_frame(16, 16, rng), rand_frame(16, 20, rng)};
    CHECK_THROWS_AS(run_sequence(frames, Direction::forward, mp), ValidationError);
    CHECK_THROWS_AS(run_sequence({}, Direction::forward, mp), ValidationError);
}

TEST_CASE("bypassed MFFA equals per-frame encoder-decoder outputs") {
    ModelParams mp = init_model_params(small_cfg(MFFAMode::none), 20);
    Rng rng(21);
    std::vector<Tensor> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(rand_frame(16, 16, rng));
    SequenceOutput seq = run_sequence(frames, Direction::forward, mp);
    for (int i = 0; i < 3; ++i) {
        StepOutput solo = model_step(frames[static_cast<size_t>(i)], std::nullopt, mp);
        CHECK(bitwise_equal(seq.frames[static_cast<size_t>(i)].softmax, solo.softmax));
    }
}

TEST_CASE("identical seeds give identical parameters and outputs") {
    ModelParams a = init_model_params(small_cfg(), 33);
    ModelParams b = init_model_params(small_cfg(), 33);
    REQUIRE(a.store.count() == b.store.count());
    for (int i = 0; i < a.store.count(); ++i) {
        CHECK(a.store.name(i) == b.store.name(i));
        CHECK(bitwise_equal(a.store.at(i), b.store.at(i)));
    }
    Rng rng(34);
    std::vector<Tensor> frames{rand_frame(16, 16, rng), rand_frame(16, 16, rng)};
    SequenceOutput ra = run_sequence(frames, Direction::forward, a);
    SequenceOutput rb = run_sequence(frames, Direction::forward, b);
    for (int i = 0; i < 2; ++i) {
        CHECK(bitwise_equal(ra.frames[static_cast<size_t>(i)].softmax,
                            rb.frames[static_cast<size_t>(i)].softmax));
    }
}

TEST_CASE("count_flops closed forms") {
    EncoderConfig full;
    full.variant = EncoderVariant::full;
    EncoderConfig trimmed;
    trimmed.variant = EncoderVariant::trimmed;

    // Hand arithmetic at defaults (base 16, stride 4, C = 64, 64x64 frames):
    // blocks 32x32x(9*3*16), 16x16x(9*16*32), 16x16x(9*32*64), 16x16x(9*64*128),
    // projection 16x16x(128*64).
    uint64_t full_expected = 1024ull * 9 * 3 * 16 + 256ull * 9 * 16 * 32 + 256ull * 9 * 32 * 64 +
                             256ull * 9 * 64 * 128 + 256ull * 128 * 64;
    CHECK(count_flops(full, 64, 64) == full_expected);

    uint64_t trimmed_expected = 1024ull * 9 * 3 * 16 + 256ull * 9 * 16 * 32 + 256ull * 32 * 64;
    CHECK(count_flops(trimmed, 64, 64) == trimmed_expected);

    double ratio = double(count_flops(trimmed, 64, 64)) / double(count_flops(full, 64, 64));
    CHECK(ratio < 0.65);

    // Doubling the frame side quadruples every conv term.
    CHECK(count_flops(full, 128, 128) == 4 * count_flops(full, 64, 64));
    CHECK(count_flops(trimmed, 128, 128) == 4 * count_flops(trimmed, 64, 64));
}

TEST_CASE("trimmed encoder has strictly fewer blocks and fewer FLOPs than full") {
    EncoderConfig cfg;
    cfg.variant = EncoderVariant::trimmed;
    EncoderConfig full = cfg;
    full.variant = EncoderVariant::full;
    CHECK(cfg.blocks() < full.blocks());
    CHECK(count_flops(cfg, 64, 64) < count_flops(full, 64, 64));
}

TEST_CASE("gradients flow across steps through carried features (held masks)") {
    ModelConfig cfg;
    cfg.encoder.base_channels = 2;
    cfg.encoder.out_channels = 4;
    cfg.encoder.output_stride = 2;
    cfg.mffa.channels = 4;
    cfg.frame_h = cfg.frame_w = 6;
    ModelParams mp = init_model_params(cfg, 50);
    Rng rng(51);
    // Generic point: zero biases leave ReLU-dead pixels exactly at the kink.
    for (int i = 0; i < mp.store.count(); ++i) {
        Tensor& t = mp.store.at(i);
        for (int64_t j = 0; j < t.size(); ++j) t.data()[j] += rng.uniform(-0.12, 0.12);
    }

    Tensor f1 = rand_frame(6, 6, rng);
    Tensor f2 = rand_frame(6, 6, rng);
    Tensor h0 = Tensor::zeros({3, 3, 4}, true);
    for (int64_t i = 0; i < h0.size(); ++i) h0.data()[i] = rng.uniform(-0.5, 1.0);
    Mask m0 = Mask::zeros(6, 6), m1 = Mask::zeros(6, 6);
    for (auto& v : m0.v) v = rng.bernoulli(0.5) ? 1 : 0;
    for (auto& v : m1.v) v = rng.bernoulli(0.5) ? 1 : 0;
    Mask truth = Mask::zeros(6, 6);
    for (auto& v : truth.v) v = rng.bernoulli(0.3) ? 1 : 0;
    Tensor onehot = mask_to_onehot(truth);

    std::vector<Tensor> wrt{h0};
    for (int i = 0; i < mp.store.count(); ++i) wrt.push_back(mp.store.at(i));

    // Both steps use held masks, so the two-step chain is smooth and the
    // finite-difference comparison sees the full path through s1.features.
    auto f = [&]() {
        StepOutput s1 = model_step(f1, MFFAState{h0, m0}, mp);
        StepOutput s2 = model_step(f2, MFFAState{s1.features, m1}, mp);
        return cross_entropy(onehot, s2.softmax);
    };
    CHECK(finite_diff_check(f, wrt, 1e-5) < 1e-4);
}

TEST_CASE("feature extents and state shapes stay constant across a sequence") {
    ModelParams mp = init_model_params(small_cfg(), 40);
    Rng rng(41);
    std::vector<Tensor> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(rand_frame(16, 16, rng));
    std::optional<MFFAState> state;
    for (const Tensor& fr : frames) {
        StepOutput so = model_step(fr, state, mp);
        CHECK(so.features.shape() == Shape{4, 4, 8});
        CHECK(so.softmax.shape() == Shape{16, 16, 2});
        state = MFFAState{so.features, predict_mask(so.softmax)};
    }
}

TEST_SUITE_END();
