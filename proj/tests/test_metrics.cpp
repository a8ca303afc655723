#include <cmath>

#include "doctest.h"
#include "mffa/metrics.hpp"

using namespace mffa;

namespace {

Mask random_mask(int h, int w, Rng& rng, double p) {
    Mask m = Mask::zeros(h, w);
    for (auto& v : m.v) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

// Plain per-pixel loop, the reference for the bit-packed implementation.
void naive_counts(const Mask& x, const Mask& y, int64_t* inter, int64_t* uni, int64_t* nx,
                  int64_t* ny) {
    *inter = *uni = *nx = *ny = 0;
    for (size_t i = 0; i < x.v.size(); ++i) {
        bool a = x.v[i], b = y.v[i];
        *inter += a && b;
        *uni += a || b;
        *nx += a;
        *ny += b;
    }
}

// Segmenter that replays ground truth; a perfect oracle model. It relies on
// evaluate_video visiting frames 0, stride, 2*stride, ...
class OracleSegmenter : public FrameSegmenter {
public:
    OracleSegmenter(const LoadedVideo& video, int stride) : video_(&video), stride_(stride) {}
    void reset() override { calls_ = 0; }
    Mask segment(const Image&) override {
        size_t pos = static_cast<size_t>(calls_++) * static_cast<size_t>(stride_);
        if (pos < video_->masks.size() && video_->masks[pos]) return *video_->masks[pos];
        return Mask::zeros(video_->frames[0].h, video_->frames[0].w);
    }

private:
    const LoadedVideo* video_;
    int stride_;
    int calls_ = 0;
};

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("dsc and iou closed forms") {
    Rng rng(501);
    Mask x = random_mask(8, 8, rng, 0.4);
    REQUIRE(x.count() > 0);
    CHECK(dsc(x, x) == 1.0);
    CHECK(iou(x, x) == 1.0);

    Mask a = Mask::zeros(4, 4), b = Mask::zeros(4, 4);
    a.at(0, 0) = 1;
    b.at(3, 3) = 1;
    CHECK(dsc(a, b) == 0.0);
    CHECK(iou(a, b) == 0.0);

    // |X| = |Y| = 100, overlap 50 on a 16x16 grid.
    Mask x100 = Mask::zeros(16, 16), y100 = Mask::zeros(16, 16);
    for (int i = 0; i < 100; ++i) x100.v[static_cast<size_t>(i)] = 1;
    for (int i = 50; i < 150; ++i) y100.v[static_cast<size_t>(i)] = 1;
    CHECK(dsc(x100, y100) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(iou(x100, y100) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Both empty by convention.
    Mask e1 = Mask::zeros(5, 5), e2 = Mask::zeros(5, 5);
    CHECK(dsc(e1, e2) == 1.0);
    CHECK(iou(e1, e2) == 1.0);

    CHECK_THROWS_AS(dsc(Mask::zeros(4, 4), Mask::zeros(4, 5)), ValidationError);
}

TEST_CASE("bit-packed metrics equal naive counting on 200 random pairs exactly") {
    Rng rng(502);
    for (int trial = 0; trial < 200; ++trial) {
        Mask x = random_mask(16, 16, rng, rng.uniform(0.05, 0.9));
        Mask y = random_mask(16, 16, rng, rng.uniform(0.05, 0.9));
        int64_t inter, uni, nx, ny;
        naive_counts(x, y, &inter, &uni, &nx, &ny);
        double expect_dsc = (nx + ny == 0) ? 1.0 : 2.0 * double(inter) / double(nx + ny);
        double expect_iou = (uni == 0) ? 1.0 : double(inter) / double(uni);
        CHECK(dsc(x, y) == expect_dsc);
        CHECK(iou(x, y) == expect_iou);

        // Algebraic identity and ordering.
        double d = dsc(x, y), i = iou(x, y);
        CHECK(std::abs(i - d / (2.0 - d)) <= 1e-12);
        CHECK(i <= d + 1e-15);
        CHECK(d <= 1.0);
        CHECK(i >= 0.0);

        // Symmetry.
        CHECK(dsc(x, y) == dsc(y, x));
        CHECK(iou(x, y) == iou(y, x));
    }
}

TEST_CASE("evaluate_video scores exactly the sampled labeled frames") {
    Rng rng(503);
    LoadedVideo video;
    video.id = "v0";
    video.fold = 0;
    for (int t = 0; t < 10; ++t) {
        video.frames.push_back(Image::filled(8, 8, 10, 10, 10));
        if (t % 3 == 0) {
            video.masks.push_back(random_mask(8, 8, rng, 0.3));
            video.labeled_indices.push_back(t);
        } else {
            video.masks.push_back(std::nullopt);
        }
    }

    OracleSegmenter oracle(video, 3);
    EvalOptions opts;
    opts.stride = 3;
    VideoReport report = evaluate_video(oracle, video, opts);
    REQUIRE(report.frames.size() == 4);  // t = 0, 3, 6, 9
    CHECK(report.mdsc == 1.0);
    CHECK(report.miou == 1.0);
    CHECK(report.skipped_labels == 0);
    for (size_t i = 0; i < report.frames.size(); ++i) {
        CHECK(report.frames[i].frame_index == static_cast<int>(3 * i));
    }
}

TEST_CASE("labels off the propagation grid are excluded and counted") {
    Rng rng(504);
    LoadedVideo video;
    video.id = "v1";
    video.fold = 0;
    for (int t = 0; t < 8; ++t) {
        video.frames.push_back(Image::filled(8, 8, 10, 10, 10));
        if (t == 2 || t == 4 || t == 5) {
            video.masks.push_back(random_mask(8, 8, rng, 0.3));
            video.labeled_indices.push_back(t);
        } else {
            video.masks.push_back(std::nullopt);
        }
    }
    OracleSegmenter oracle(video, 2);
    EvalOptions opts;
    opts.stride = 2;  // visits 0, 2, 4, 6 -> label 5 skipped
    VideoReport report = evaluate_video(oracle, video, opts);
    CHECK(report.frames.size() == 2);
    CHECK(report.skipped_labels == 1);
}

TEST_CASE("model segmenter runs the recurrent protocol end to end") {
    ModelConfig cfg;
    cfg.encoder.base_channels = 4;
    cfg.encoder.out_channels = 8;
    cfg.encoder.output_stride = 4;
    cfg.mffa.channels = 8;
    cfg.frame_h = cfg.frame_w = 16;
    ModelParams mp = init_model_params(cfg, 505);

    Rng rng(506);
    LoadedVideo video;
    video.id = "v2";
    video.fold = 0;
    for (int t = 0; t < 7; ++t) {
        Image img = Image::filled(16, 16, 0, 0, 0);
        for (auto& v : img.rgb) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
        video.frames.push_back(img);
        video.masks.push_back(random_mask(16, 16, rng, 0.3));
        video.labeled_indices.push_back(t);
    }

    ModelSegmenter seg(mp);
    EvalOptions opts;
    opts.stride = 3;
    VideoReport r1 = evaluate_video(seg, video, opts);
    CHECK(r1.frames.size() == 3);
    CHECK(r1.skipped_labels == 4);

    // Determinism: a fresh pass produces identical scores.
    VideoReport r2 = evaluate_video(seg, video, opts);
    for (size_t i = 0; i < r1.frames.size(); ++i) {
        CHECK(r1.frames[i].dsc == r2.frames[i].dsc);
        CHECK(r1.frames[i].iou == r2.frames[i].iou);
    }
}

TEST_CASE("overall report statistics are recomputable from per-frame entries") {
    Rng rng(507);
    Dataset ds;
    for (int vi = 0; vi < 2; ++vi) {
        LoadedVideo video;
        video.id = "v" + std::to_string(vi);
        video.fold = vi;
        for (int t = 0; t < 6; ++t) {
            video.frames.push_back(Image::filled(8, 8, 10, 10, 10));
            video.masks.push_back(random_mask(8, 8, rng, 0.4));
            video.labeled_indices.push_back(t);
        }
        ds.videos.push_back(video);
    }

    // Oracle per video; wrap them in one segmenter that tracks resets.
    class MultiOracle : public FrameSegmenter {
    public:
        explicit MultiOracle(const Dataset& ds) : ds_(&ds) {}
        void reset() override {
            t_ = 0;
            video_ = (video_ + 1) % static_cast<int>(ds_->videos.size());
        }
        Mask segment(const Image&) override {
            const LoadedVideo& v = ds_->videos[static_cast<size_t>(video_)];
            Mask m = *v.masks[t_];
            // degrade every second prediction to vary the scores
            if ((t_ / 3) % 2 == 1) {
                for (auto& b : m.v) b = 0;
            }
            t_ += 3;
            return m;
        }

    private:
        const Dataset* ds_;
        int video_ = -1;
        size_t t_ = 0;
    };

    MultiOracle seg(ds);
    EvalOptions opts;
    opts.stride = 3;
    EvalReport report = evaluate_dataset(seg, ds, opts);
    REQUIRE(report.frames == 4);

    double mean = 0;
    int64_t n = 0;
    for (const VideoReport& vr : report.videos) {
        for (const FrameScore& f : vr.frames) {
            mean += f.dsc;
            ++n;
        }
    }
    mean /= double(n);
    CHECK(report.mdsc == doctest::Approx(mean).epsilon(1e-12));

    // Fold filtering.
    opts.fold = 1;
    EvalReport fold_report = evaluate_dataset(seg, ds, opts);
    CHECK(fold_report.videos.size() == 1);
    CHECK(fold_report.videos[0].id == "v1");
}

TEST_CASE("time_inference returns the lone sample after warm-up for repeats=1") {
    ModelConfig cfg;
    cfg.encoder.base_channels = 2;
    cfg.encoder.out_channels = 4;
    cfg.encoder.output_stride = 4;
    cfg.mffa.channels = 4;
    cfg.frame_h = cfg.frame_w = 16;
    ModelParams mp = init_model_params(cfg, 508);
    Image frame = Image::filled(16, 16, 40, 50, 60);
    TimingResult t = time_inference(mp, frame, 1);
    REQUIRE(t.samples.size() == 1);
    CHECK(t.median_s == t.samples[0]);
    CHECK(t.median_s > 0);
}

TEST_CASE("overlay tints predictions and outlines truth") {
    Image frame = Image::filled(6, 6, 100, 100, 100);
    Mask pred = Mask::zeros(6, 6);
    pred.at(2, 2) = 1;
    Mask truth = Mask::zeros(6, 6);
    truth.at(4, 4) = 1;
    Image overlay = render_overlay(frame, pred, &truth);
    CHECK(overlay.px(2, 2)[1] > overlay.px(2, 2)[0]);  // green tint
    CHECK(overlay.px(4, 4)[0] == 255);                 // red contour
    CHECK(overlay.px(0, 0)[0] == 100);                 // untouched elsewhere
}

TEST_SUITE_END();
