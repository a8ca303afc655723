#include "mffa/metrics.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace mffa {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void check_extents(const Mask& x, const Mask& y, const char* who) {
    if (x.h != y.h || x.w != y.w) {
        throw ValidationError(std::string(who) + ": mask extents differ (" + std::to_string(x.h) +
                              "x" + std::to_string(x.w) + " vs " + std::to_string(y.h) + "x" +
                              std::to_string(y.w) + ")");
    }
}

struct Overlap {
    int64_t x_count = 0, y_count = 0, inter = 0;
};

// Bit-packed popcount pass over both masks.
Overlap overlap(const Mask& x, const Mask& y) {
    Overlap o;
    size_t n = x.v.size();
    size_t words = (n + 63) / 64;
    for (size_t wi = 0; wi < words; ++wi) {
        uint64_t xw = 0, yw = 0;
        size_t base = wi * 64;
        size_t limit = std::min<size_t>(64, n - base);
        for (size_t b = 0; b < limit; ++b) {
            xw |= static_cast<uint64_t>(x.v[base + b] & 1) << b;
            yw |= static_cast<uint64_t>(y.v[base + b] & 1) << b;
        }
        o.x_count += std::popcount(xw);
        o.y_count += std::popcount(yw);
        o.inter += std::popcount(xw & yw);
    }
    return o;
}

}  // namespace

double dsc(const Mask& x, const Mask& y) {
    check_extents(x, y, "dsc");
    Overlap o = overlap(x, y);
    if (o.x_count + o.y_count == 0) return 1.0;
    return 2.0 * double(o.inter) / double(o.x_count + o.y_count);
}

double iou(const Mask& x, const Mask& y) {
    check_extents(x, y, "iou");
    Overlap o = overlap(x, y);
    int64_t uni = o.x_count + o.y_count - o.inter;
    if (uni == 0) return 1.0;
    return double(o.inter) / double(uni);
}

Mask ModelSegmenter::segment(const Image& frame) {
    StepOutput so = model_step(image_to_tensor(frame), state_, mp_);
    Mask m = predict_mask(so.softmax);
    if (mp_.cfg.mode == MFFAMode::full) {
        state_ = MFFAState{so.features, m};
    }
    return m;
}

namespace {

void finalize_stats(const std::vector<FrameScore>& frames, double* mdsc, double* dsc_std,
                    double* miou, double* iou_std) {
    *mdsc = *dsc_std = *miou = *iou_std = 0;
    if (frames.empty()) return;
    double n = double(frames.size());
    for (const FrameScore& f : frames) {
        *mdsc += f.dsc;
        *miou += f.iou;
    }
    *mdsc /= n;
    *miou /= n;
    for (const FrameScore& f : frames) {
        *dsc_std += (f.dsc - *mdsc) * (f.dsc - *mdsc);
        *iou_std += (f.iou - *miou) * (f.iou - *miou);
    }
    *dsc_std = std::sqrt(*dsc_std / n);
    *iou_std = std::sqrt(*iou_std / n);
}

}  // namespace

Image render_overlay(const Image& frame, const Mask& predicted, const Mask* truth) {
    Image out = frame;
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            if (predicted.at(y, x)) {
                uint8_t* px = out.px(y, x);
                px[0] = static_cast<uint8_t>(px[0] / 2);
                px[1] = static_cast<uint8_t>(std::min(255, px[1] / 2 + 128));
                px[2] = static_cast<uint8_t>(px[2] / 2);
            }
        }
    }
    if (truth) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                if (!truth->at(y, x)) continue;
                bool boundary = y == 0 || y == out.h - 1 || x == 0 || x == out.w - 1 ||
                                !truth->at(y - 1, x) || !truth->at(y + 1, x) ||
                                !truth->at(y, x - 1) || !truth->at(y, x + 1);
                if (boundary) {
                    uint8_t* px = out.px(y, x);
                    px[0] = 255;
                    px[1] = 0;
                    px[2] = 0;
                }
            }
        }
    }
    return out;
}

VideoReport evaluate_video(FrameSegmenter& segmenter, const LoadedVideo& video,
                           const EvalOptions& opts) {
    if (opts.stride < 1) throw ValidationError("evaluate_video: stride must be positive");
    VideoReport report;
    report.id = video.id;
    report.fold = video.fold;

    segmenter.reset();
    std::vector<bool> visited(video.frames.size(), false);
    for (size_t t = 0; t < video.frames.size(); t += static_cast<size_t>(opts.stride)) {
        visited[t] = true;
        auto t0 = std::chrono::steady_clock::now();
        Mask pred = segmenter.segment(video.frames[t]);
        auto t1 = std::chrono::steady_clock::now();

        const auto& truth = video.masks[t];
        if (truth) {
            FrameScore score;
            score.frame_index = static_cast<int>(t);
            score.dsc = dsc(pred, *truth);
            score.iou = iou(pred, *truth);
            if (opts.timing) {
                score.time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            report.frames.push_back(score);
        }
        if (!opts.overlay_dir.empty()) {
            fs::create_directories(fs::path(opts.overlay_dir) / video.id);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "overlay_%06d.ppm", static_cast<int>(t));
            save_ppm((fs::path(opts.overlay_dir) / video.id / buf).string(),
                     render_overlay(video.frames[t], pred, truth ? &*truth : nullptr));
        }
    }
    // Manifest labels the protocol never visited.
    for (int idx : video.labeled_indices) {
        if (!visited[static_cast<size_t>(idx)]) ++report.skipped_labels;
    }
    finalize_stats(report.frames, &report.mdsc, &report.dsc_std, &report.miou, &report.iou_std);
    return report;
}

EvalReport evaluate_dataset(FrameSegmenter& segmenter, const Dataset& ds, const EvalOptions& opts,
                            const ModelConfig* cfg_for_flops) {
    EvalReport report;
    std::vector<FrameScore> all;
    std::vector<double> times;
    for (const LoadedVideo& video : ds.videos) {
        if (opts.fold >= 0 && video.fold != opts.fold) continue;
        VideoReport vr = evaluate_video(segmenter, video, opts);
        report.skipped_labels += vr.skipped_labels;
        all.insert(all.end(), vr.frames.begin(), vr.frames.end());
        if (opts.timing) {
            for (const FrameScore& f : vr.frames) times.push_back(f.time_ms);
        }
        report.videos.push_back(std::move(vr));
    }
    report.frames = static_cast<int64_t>(all.size());
    finalize_stats(all, &report.mdsc, &report.dsc_std, &report.miou, &report.iou_std);
    report.has_timing = opts.timing;
    if (opts.timing && !times.empty()) {
        std::sort(times.begin(), times.end());
        report.median_time_ms = times[times.size() / 2];
    }
    if (cfg_for_flops) report.flops = count_model_flops(*cfg_for_flops);
    return report;
}

void write_report_json(const std::string& path, const EvalReport& report) {
    ordered_json j;
    j["overall"] = {
        {"mdsc", report.mdsc}, {"dsc_std", report.dsc_std},
        {"miou", report.miou}, {"iou_std", report.iou_std},
        {"frames", report.frames}, {"skipped_labels", report.skipped_labels},
    };
    if (report.has_timing) j["overall"]["median_time_ms"] = report.median_time_ms;
    if (report.flops.total() > 0) {
        j["flops"] = {{"encoder_macs", report.flops.encoder},
                      {"mffa_macs", report.flops.mffa},
                      {"decoder_macs", report.flops.decoder},
                      {"total_macs", report.flops.total()}};
    }
    j["videos"] = ordered_json::array();
    for (const VideoReport& vr : report.videos) {
        ordered_json jv;
        jv["id"] = vr.id;
        jv["fold"] = vr.fold;
        jv["mdsc"] = vr.mdsc;
        jv["dsc_std"] = vr.dsc_std;
        jv["miou"] = vr.miou;
        jv["iou_std"] = vr.iou_std;
        jv["skipped_labels"] = vr.skipped_labels;
        jv["frames"] = ordered_json::array();
        for (const FrameScore& f : vr.frames) {
            ordered_json jf;
            jf["index"] = f.frame_index;
            jf["dsc"] = f.dsc;
            jf["iou"] = f.iou;
            if (f.time_ms >= 0) jf["time_ms"] = f.time_ms;
            jv["frames"].push_back(std::move(jf));
        }
        j["videos"].push_back(std::move(jv));
    }
    std::ofstream out(path);
    if (!out) throw RuntimeFailure(path + ": cannot write report");
    out << j.dump(2) << "\n";
}

double TimingResult::iqr_s() const {
    if (samples.size() < 4) return 0;
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    return s[(3 * s.size()) / 4] - s[s.size() / 4];
}

TimingResult time_inference(const ModelParams& params, const Image& frame, int repeats) {
    if (repeats < 1) throw ValidationError("time_inference: repeats must be positive");
    Tensor ft = image_to_tensor(frame);
    std::optional<MFFAState> state;

    auto step = [&]() {
        StepOutput so = model_step(ft, state, params);
        if (params.cfg.mode == MFFAMode::full) {
            state = MFFAState{so.features, predict_mask(so.softmax)};
        }
    };

    for (int i = 0; i < 3; ++i) step();  // warm-up

    TimingResult result;
    for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        step();
        auto t1 = std::chrono::steady_clock::now();
        result.samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::vector<double> sorted = result.samples;
    std::sort(sorted.begin(), sorted.end());
    result.median_s = sorted[sorted.size() / 2];
    return result;
}

}  // namespace mffa
