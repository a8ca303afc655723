#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "mffa/dataset.hpp"

namespace mffa {

namespace fs = std::filesystem;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Sinusoid {
    double amp, omega, phase;
    double at(double t) const { return amp * std::sin(omega * t + phase); }
};

// One capsule-shaped instrument following a smooth trajectory over a textured
// background.
struct VideoScript {
    // background texture
    double base[3];
    Sinusoid tex_x[3], tex_y[3];
    double tex_amp[3];
    Sinusoid wobble;
    // instrument geometry and path
    double half_len, radius;
    Sinusoid path_x[2], path_y[2];
    double cx0, cy0;
    double theta0, theta_rate;
    Sinusoid theta_wobble;
    double inst_base[3];
};

VideoScript make_script(Rng& rng, const ToyDatasetConfig& cfg) {
    VideoScript s;
    int n = cfg.frame_size;

    // Pinkish tissue palette.
    s.base[0] = rng.uniform(150, 190);
    s.base[1] = rng.uniform(95, 130);
    s.base[2] = rng.uniform(100, 135);
    for (int k = 0; k < 3; ++k) {
        s.tex_x[k] = {1.0, rng.uniform(0.05, 0.35), rng.uniform(0, kTau)};
        s.tex_y[k] = {1.0, rng.uniform(0.05, 0.35), rng.uniform(0, kTau)};
        s.tex_amp[k] = rng.uniform(6, 14);
    }
    s.wobble = {rng.uniform(2, 4), kTau / rng.uniform(40, 90), rng.uniform(0, kTau)};

    // Capsule sized so the pixel fraction stays inside the config bounds.
    s.radius = rng.uniform(0.055, 0.09) * n;
    s.half_len = rng.uniform(0.14, 0.22) * n;
    double area = 4.0 * s.radius * s.half_len + std::numbers::pi * s.radius * s.radius;
    double frac = area / double(n * n);
    double lo = cfg.min_instrument_frac * 1.25, hi = cfg.max_instrument_frac * 0.8;
    if (frac < lo || frac > hi) {
        double k = std::sqrt(std::clamp(frac, lo, hi) / frac);
        s.radius *= k;
        s.half_len *= k;
    }

    double margin = s.half_len + s.radius + 2.0;
    double swing = std::max(2.0, n / 2.0 - margin);
    double a1 = rng.uniform(0.5, 0.75) * swing;
    double a2 = swing - a1;
    s.path_x[0] = {a1, rng.uniform(0.01, 0.05), rng.uniform(0, kTau)};
    s.path_x[1] = {a2, rng.uniform(0.02, 0.09), rng.uniform(0, kTau)};
    a1 = rng.uniform(0.5, 0.75) * swing;
    a2 = swing - a1;
    s.path_y[0] = {a1, rng.uniform(0.01, 0.05), rng.uniform(0, kTau)};
    s.path_y[1] = {a2, rng.uniform(0.02, 0.09), rng.uniform(0, kTau)};
    s.cx0 = n / 2.0;
    s.cy0 = n / 2.0;

    s.theta0 = rng.uniform(0, kTau);
    s.theta_rate = rng.uniform(0.004, 0.018) * (rng.bernoulli(0.5) ? 1 : -1);
    s.theta_wobble = {rng.uniform(0.02, 0.08), kTau / rng.uniform(30, 80), rng.uniform(0, kTau)};

    // Bluish metallic instrument, far from the tissue hue on normal frames.
    s.inst_base[0] = rng.uniform(150, 175);
    s.inst_base[1] = rng.uniform(160, 185);
    s.inst_base[2] = rng.uniform(180, 205);
    return s;
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
    double abx = bx - ax, aby = by - ay;
    double len2 = abx * abx + aby * aby;
    double t = len2 == 0 ? 0 : ((px - ax) * abx + (py - ay) * aby) / len2;
    t = std::clamp(t, 0.0, 1.0);
    double dx = px - (ax + t * abx), dy = py - (ay + t * aby);
    return std::sqrt(dx * dx + dy * dy);
}

struct FramePlan {
    bool collapse = false;
    int streaks = 0;
    int blotches = 0;
};

void render_background(Image& img, const VideoScript& s, int t) {
    double wob = s.wobble.at(t);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            uint8_t* px = img.px(y, x);
            for (int c = 0; c < 3; ++c) {
                double v = s.base[c] + wob +
                           s.tex_amp[c] * std::sin(s.tex_x[c].omega * x + s.tex_x[c].phase) *
                               std::sin(s.tex_y[c].omega * y + s.tex_y[c].phase);
                px[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
}

void draw_streak(Image& img, const Mask& truth, Rng& rng) {
    double x0 = rng.uniform(0, img.w - 1), y0 = rng.uniform(0, img.h - 1);
    double ang = rng.uniform(0, kTau);
    double len = rng.uniform(0.25, 0.6) * img.w;
    double x1 = x0 + len * std::cos(ang), y1 = y0 + len * std::sin(ang);
    double thick = rng.uniform(1.0, 2.5);
    double gain = rng.uniform(60, 110);
    int lo_y = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - 3 * thick)));
    int hi_y = std::min(img.h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + 3 * thick)));
    int lo_x = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - 3 * thick)));
    int hi_x = std::min(img.w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + 3 * thick)));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            if (truth.at(y, x)) continue;
            double d = dist_to_segment(x, y, x0, y0, x1, y1);
            double f = gain * std::exp(-(d * d) / (thick * thick));
            if (f < 1) continue;
            uint8_t* px = img.px(y, x);
            for (int c = 0; c < 3; ++c) {
                px[c] = static_cast<uint8_t>(std::lround(std::clamp(px[c] + f, 0.0, 255.0)));
            }
        }
    }
}

void draw_blotch(Image& img, const Mask& truth, Rng& rng) {
    double cx = rng.uniform(0, img.w - 1), cy = rng.uniform(0, img.h - 1);
    double ax = rng.uniform(3, 8), ay = rng.uniform(3, 8);
    double ang = rng.uniform(0, kTau);
    double ca = std::cos(ang), sa = std::sin(ang);
    int lo_y = std::max(0, static_cast<int>(cy - ax - ay));
    int hi_y = std::min(img.h - 1, static_cast<int>(cy + ax + ay));
    int lo_x = std::max(0, static_cast<int>(cx - ax - ay));
    int hi_x = std::min(img.w - 1, static_cast<int>(cx + ax + ay));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            if (truth.at(y, x)) continue;
            double rx = (ca * (x - cx) + sa * (y - cy)) / ax;
            double ry = (-sa * (x - cx) + ca * (y - cy)) / ay;
            double q = rx * rx + ry * ry;
            if (q > 1) continue;
            double f = 1.0 - q;
            uint8_t* px = img.px(y, x);
            px[0] = static_cast<uint8_t>(std::lround(std::clamp(px[0] + 55 * f, 0.0, 255.0)));
            px[1] = static_cast<uint8_t>(std::lround(std::clamp(px[1] - 18 * f, 0.0, 255.0)));
            px[2] = static_cast<uint8_t>(std::lround(std::clamp(px[2] - 18 * f, 0.0, 255.0)));
        }
    }
}

void render_instrument(Image& img, Mask& truth, const VideoScript& s, int t) {
    int n = img.w;
    double cx = s.cx0 + s.path_x[0].at(t) + s.path_x[1].at(t);
    double cy = s.cy0 + s.path_y[0].at(t) + s.path_y[1].at(t);
    double margin = s.half_len + s.radius + 1.0;
    cx = std::clamp(cx, margin, n - 1 - margin);
    cy = std::clamp(cy, margin, img.h - 1 - margin);
    double theta = s.theta0 + s.theta_rate * t + s.theta_wobble.at(t);
    double ux = std::cos(theta), uy = std::sin(theta);
    double ax = cx - s.half_len * ux, ay = cy - s.half_len * uy;
    double bx = cx + s.half_len * ux, by = cy + s.half_len * uy;

    int lo_y = std::max(0, static_cast<int>(std::floor(cy - margin)));
    int hi_y = std::min(img.h - 1, static_cast<int>(std::ceil(cy + margin)));
    int lo_x = std::max(0, static_cast<int>(std::floor(cx - margin)));
    int hi_x = std::min(img.w - 1, static_cast<int>(std::ceil(cx + margin)));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            double d = dist_to_segment(x, y, ax, ay, bx, by);
            if (d > s.radius + 0.5) continue;
            double cover = std::clamp(s.radius + 0.5 - d, 0.0, 1.0);
            if (d <= s.radius) truth.at(y, x) = 1;

            // Axial shading plus a bright specular core line.
            double axial = ((x - ax) * ux + (y - ay) * uy) / (2.0 * s.half_len);
            axial = std::clamp(axial, 0.0, 1.0);
            double shade = 0.8 + 0.25 * axial - 0.35 * (d / s.radius);
            double spec = d < 0.3 * s.radius ? 45.0 : 0.0;
            uint8_t* px = img.px(y, x);
            for (int c = 0; c < 3; ++c) {
                double v = s.inst_base[c] * shade + spec;
                px[c] = static_cast<uint8_t>(
                    std::lround(std::clamp(cover * v + (1 - cover) * px[c], 0.0, 255.0)));
            }
        }
    }
}

void apply_collapse(Image& img, const Mask& truth, double strength) {
    double bg_mean[3] = {0, 0, 0};
    int64_t bg_count = 0;
    for (int64_t p = 0; p < static_cast<int64_t>(truth.v.size()); ++p) {
        if (!truth.v[static_cast<size_t>(p)]) {
            for (int c = 0; c < 3; ++c) bg_mean[c] += img.rgb[static_cast<size_t>(3 * p + c)];
            ++bg_count;
        }
    }
    if (bg_count == 0) return;
    for (int c = 0; c < 3; ++c) bg_mean[c] /= double(bg_count);
    for (int64_t p = 0; p < static_cast<int64_t>(truth.v.size()); ++p) {
        if (!truth.v[static_cast<size_t>(p)]) continue;
        for (int c = 0; c < 3; ++c) {
            double v = bg_mean[c] + strength * (img.rgb[static_cast<size_t>(3 * p + c)] - bg_mean[c]);
            img.rgb[static_cast<size_t>(3 * p + c)] =
                static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
}

void add_noise(Image& img, Rng& rng, double sigma) {
    for (auto& v : img.rgb) {
        double nv = v + rng.normal(0, sigma);
        v = static_cast<uint8_t>(std::lround(std::clamp(nv, 0.0, 255.0)));
    }
}

}  // namespace

DatasetManifest gen_toy_dataset(const ToyDatasetConfig& cfg, uint64_t seed,
                                const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.frame_size = cfg.frame_size;
    manifest.label_stride = cfg.label_stride;

    char buf[64];
    for (int v = 0; v < cfg.videos; ++v) {
        Rng rng(derive_seed(seed, 0x701, static_cast<uint64_t>(v)));
        VideoScript script = make_script(rng, cfg);

        std::snprintf(buf, sizeof(buf), "video_%03d", v);
        std::string vid = buf;
        fs::create_directories(fs::path(out_dir) / vid);

        VideoEntry entry;
        entry.id = vid;
        entry.fold = v % cfg.folds;

        for (int t = 0; t < cfg.frames_per_video; ++t) {
            FramePlan plan;
            plan.collapse = rng.bernoulli(cfg.collapse_rate);
            plan.streaks = rng.bernoulli(cfg.streak_rate) ? 1 + (rng.bernoulli(0.3) ? 1 : 0) : 0;
            plan.blotches = rng.bernoulli(cfg.blotch_rate) ? 1 + (rng.bernoulli(0.3) ? 1 : 0) : 0;

            Image img = Image::filled(cfg.frame_size, cfg.frame_size, 0, 0, 0);
            Mask truth = Mask::zeros(cfg.frame_size, cfg.frame_size);
            render_background(img, script, t);
            render_instrument(img, truth, script, t);
            for (int k = 0; k < plan.streaks; ++k) draw_streak(img, truth, rng);
            for (int k = 0; k < plan.blotches; ++k) draw_blotch(img, truth, rng);
            if (plan.collapse) apply_collapse(img, truth, cfg.collapse_strength);
            add_noise(img, rng, 3.0);

            std::snprintf(buf, sizeof(buf), "frame_%06d.ppm", t);
            std::string frame_rel = vid + "/" + buf;
            save_ppm((fs::path(out_dir) / frame_rel).string(), img);
            save_pgm((fs::path(out_dir) / mask_path_for(frame_rel)).string(), truth);

            entry.frames.push_back(frame_rel);
            if (t % cfg.label_stride == 0) entry.labeled_indices.push_back(t);
        }
        manifest.videos.push_back(std::move(entry));
    }

    save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

}  // namespace mffa
