#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mffa/dataset.hpp"
#include "mffa/model.hpp"

namespace mffa {

// Region overlap over instrument pixels; both masks empty counts as 1.0.
double dsc(const Mask& x, const Mask& y);
double iou(const Mask& x, const Mask& y);

struct FrameScore {
    int frame_index = 0;
    double dsc = 0;
    double iou = 0;
    double time_ms = -1;  // < 0 when timing was not requested
};

struct VideoReport {
    std::string id;
    int fold = 0;
    std::vector<FrameScore> frames;
    int skipped_labels = 0;
    double mdsc = 0, dsc_std = 0;
    double miou = 0, iou_std = 0;
};

struct EvalReport {
    std::vector<VideoReport> videos;
    int64_t frames = 0;
    int skipped_labels = 0;
    double mdsc = 0, dsc_std = 0;
    double miou = 0, iou_std = 0;
    bool has_timing = false;
    double median_time_ms = -1;
    FlopBreakdown flops;
};

// Stateful per-video segmentation driver.
class FrameSegmenter {
public:
    virtual ~FrameSegmenter() = default;
    virtual void reset() = 0;
    virtual Mask segment(const Image& frame) = 0;
};

// Runs the recurrent model, carrying MFFA state across calls.
class ModelSegmenter : public FrameSegmenter {
public:
    explicit ModelSegmenter(const ModelParams& params) : mp_(params) {}
    void reset() override { state_.reset(); }
    Mask segment(const Image& frame) override;

private:
    ModelParams mp_;
    std::optional<MFFAState> state_;
};

struct EvalOptions {
    int stride = 3;        // propagate and segment every stride-th frame
    bool timing = false;   // record wall-clock per frame (breaks bit-reproducibility)
    std::string overlay_dir;  // empty: no overlays
    int fold = -1;         // >= 0: evaluate only videos of this fold
};

VideoReport evaluate_video(FrameSegmenter& segmenter, const LoadedVideo& video,
                           const EvalOptions& opts);

EvalReport evaluate_dataset(FrameSegmenter& segmenter, const Dataset& ds, const EvalOptions& opts,
                            const ModelConfig* cfg_for_flops = nullptr);

void write_report_json(const std::string& path, const EvalReport& report);

// Predicted region tinted green, truth contour drawn in red.
Image render_overlay(const Image& frame, const Mask& predicted, const Mask* truth);

struct TimingResult {
    double median_s = 0;
    std::vector<double> samples;  // seconds, warm-up excluded

    double iqr_s() const;
};

// Median wall-clock of a single-frame step (encode + MFFA + decode) with
// state reuse; the first three warm-up runs are excluded.
TimingResult time_inference(const ModelParams& params, const Image& frame, int repeats);

}  // namespace mffa
