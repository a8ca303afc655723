#include "mffa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

namespace mffa {

void SynthesisRanges::validate() const {
    if (translate_min < 0 || translate_max < translate_min) {
        throw ValidationError("SynthesisRanges: translation range must be ordered and nonnegative");
    }
    if (rotate_max < rotate_min) {
        throw ValidationError("SynthesisRanges: rotation range must be ordered");
    }
}

std::pair<MovingParams, MovingParams> sample_endpoint_params(Rng& rng,
                                                             const SynthesisRanges& ranges) {
    ranges.validate();
    auto draw = [&]() {
        MovingParams p;
        p.dx = rng.uniform(ranges.translate_min, ranges.translate_max) * (rng.bernoulli(0.5) ? 1 : -1);
        p.dy = rng.uniform(ranges.translate_min, ranges.translate_max) * (rng.bernoulli(0.5) ? 1 : -1);
        p.dtheta = rng.uniform(ranges.rotate_min, ranges.rotate_max);
        return p;
    };
    MovingParams first = draw();
    MovingParams last = draw();
    return {first, last};
}

std::vector<MovingParams> interpolate_params(const MovingParams& first, const MovingParams& last,
                                             int n) {
    if (n < 2) throw ValidationError("interpolate_params: need at least 2 frames");
    int center = (n + 1) / 2;  // 1-based index C with z_C = x

    auto component = [&](double first_v, double last_v, int i) {
        if (i == center) return 0.0;  // z_C = x, even when C = 1 overrides the sampled first
        if (i < center) {
            double t = double(i - 1) / double(center - 1);
            return first_v * (1.0 - t);
        }
        double t = double(i - center) / double(n - center);
        return last_v * t;
    };

    std::vector<MovingParams> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 1; i <= n; ++i) {
        MovingParams p;
        p.dx = component(first.dx, last.dx, i);
        p.dy = component(first.dy, last.dy, i);
        p.dtheta = component(first.dtheta, last.dtheta, i);
        out.push_back(p);
    }
    return out;
}

InstrumentPatch extract_instrument(const Image& frame, const Mask& mask) {
    if (frame.h != mask.h || frame.w != mask.w) {
        throw ValidationError("extract_instrument: frame and mask extents differ");
    }
    int min_x = mask.w, min_y = mask.h, max_x = -1, max_y = -1;
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x)) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
        }
    }
    if (max_x < 0) throw NoInstrumentError();

    InstrumentPatch patch;
    patch.x0 = min_x;
    patch.y0 = min_y;
    int pw = max_x - min_x + 1, ph = max_y - min_y + 1;
    patch.img = Image::filled(ph, pw, 0, 0, 0);
    patch.mask = Mask::zeros(ph, pw);
    double sx = 0, sy = 0;
    int64_t count = 0;
    for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
            const uint8_t* src = frame.px(min_y + y, min_x + x);
            uint8_t* dst = patch.img.px(y, x);
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
            if (mask.at(min_y + y, min_x + x)) {
                patch.mask.at(y, x) = 1;
                sx += x;
                sy += y;
                ++count;
            }
        }
    }
    patch.centroid_x = sx / double(count);
    patch.centroid_y = sy / double(count);
    return patch;
}

Image inpaint(const Image& frame, const Mask& mask) {
    if (frame.h != mask.h || frame.w != mask.w) {
        throw ValidationError("inpaint: frame and mask extents differ");
    }
    if (mask.empty_mask()) return frame;

    int h = frame.h, w = frame.w;
    int64_t hole = mask.count();
    if (hole == static_cast<int64_t>(mask.v.size())) {
        std::cerr << "inpaint: every pixel masked; filling with the global mean\n";
        double mean[3] = {0, 0, 0};
        for (int64_t i = 0; i < static_cast<int64_t>(frame.rgb.size()); i += 3) {
            mean[0] += frame.rgb[static_cast<size_t>(i)];
            mean[1] += frame.rgb[static_cast<size_t>(i) + 1];
            mean[2] += frame.rgb[static_cast<size_t>(i) + 2];
        }
        int64_t px_count = static_cast<int64_t>(mask.v.size());
        Image out = frame;
        for (int64_t p = 0; p < px_count; ++p) {
            for (int c = 0; c < 3; ++c) {
                out.rgb[static_cast<size_t>(3 * p + c)] =
                    static_cast<uint8_t>(std::lround(mean[c] / double(px_count)));
            }
        }
        return out;
    }

    // Jacobi sweeps over the hole; boundary (unmasked) values stay fixed.
    std::vector<double> cur(frame.rgb.begin(), frame.rgb.end());
    // Start hole pixels from the global unmasked mean for faster settling.
    double mean[3] = {0, 0, 0};
    int64_t boundary_count = 0;
    for (int64_t p = 0; p < static_cast<int64_t>(mask.v.size()); ++p) {
        if (!mask.v[static_cast<size_t>(p)]) {
            for (int c = 0; c < 3; ++c) mean[c] += cur[static_cast<size_t>(3 * p + c)];
            ++boundary_count;
        }
    }
    for (int64_t p = 0; p < static_cast<int64_t>(mask.v.size()); ++p) {
        if (mask.v[static_cast<size_t>(p)]) {
            for (int c = 0; c < 3; ++c) cur[static_cast<size_t>(3 * p + c)] = mean[c] / double(boundary_count);
        }
    }

    std::vector<double> next = cur;
    for (int iter = 0; iter < 500; ++iter) {
        double max_change = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!mask.at(y, x)) continue;
                double acc[3] = {0, 0, 0};
                int neighbors = 0;
                auto take = [&](int ny, int nx) {
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) return;
                    size_t base = (static_cast<size_t>(ny) * w + nx) * 3;
                    acc[0] += cur[base];
                    acc[1] += cur[base + 1];
                    acc[2] += cur[base + 2];
                    ++neighbors;
                };
                take(y - 1, x);
                take(y + 1, x);
                take(y, x - 1);
                take(y, x + 1);
                size_t base = (static_cast<size_t>(y) * w + x) * 3;
                for (int c = 0; c < 3; ++c) {
                    double v = acc[c] / neighbors;
                    max_change = std::max(max_change, std::abs(v - cur[base + static_cast<size_t>(c)]));
                    next[base + static_cast<size_t>(c)] = v;
                }
            }
        }
        std::swap(cur, next);
        if (max_change < 0.5) break;
    }

    Image out = frame;
    for (int64_t p = 0; p < static_cast<int64_t>(mask.v.size()); ++p) {
        if (!mask.v[static_cast<size_t>(p)]) continue;  // unmasked pixels stay bit-identical
        for (int c = 0; c < 3; ++c) {
            double v = std::clamp(cur[static_cast<size_t>(3 * p + c)], 0.0, 255.0);
            out.rgb[static_cast<size_t>(3 * p + c)] = static_cast<uint8_t>(std::lround(v));
        }
    }
    return out;
}

std::pair<Image, Mask> transform_paste(const Image& background, const InstrumentPatch& patch,
                                       const MovingParams& params) {
    Image frame = background;
    Mask mask = Mask::zeros(background.h, background.w);

    double theta = params.dtheta * std::numbers::pi / 180.0;
    double cos_t = std::cos(theta), sin_t = std::sin(theta);
    // Forward map: q_patch -> R(theta) (q - centroid) + centroid + origin + t.
    double cx = patch.centroid_x, cy = patch.centroid_y;
    double ox = patch.x0 + cx + params.dx;
    double oy = patch.y0 + cy + params.dy;

    // Destination bounding box from the transformed patch corners.
    double min_x = 1e30, min_y = 1e30, max_x = -1e30, max_y = -1e30;
    for (int corner = 0; corner < 4; ++corner) {
        double qx = (corner & 1) ? patch.img.w - 1 : 0;
        double qy = (corner & 2) ? patch.img.h - 1 : 0;
        double fx = cos_t * (qx - cx) - sin_t * (qy - cy) + ox;
        double fy = sin_t * (qx - cx) + cos_t * (qy - cy) + oy;
        min_x = std::min(min_x, fx);
        min_y = std::min(min_y, fy);
        max_x = std::max(max_x, fx);
        max_y = std::max(max_y, fy);
    }
    int y_lo = std::max(0, static_cast<int>(std::floor(min_y)) - 1);
    int y_hi = std::min(background.h - 1, static_cast<int>(std::ceil(max_y)) + 1);
    int x_lo = std::max(0, static_cast<int>(std::floor(min_x)) - 1);
    int x_hi = std::min(background.w - 1, static_cast<int>(std::ceil(max_x)) + 1);

    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            // Inverse map back into patch coordinates.
            double rx = x - ox, ry = y - oy;
            double qx = cos_t * rx + sin_t * ry + cx;
            double qy = -sin_t * rx + cos_t * ry + cy;
            if (qx < -1 || qy < -1 || qx > patch.img.w || qy > patch.img.h) continue;

            int x0 = static_cast<int>(std::floor(qx));
            int y0i = static_cast<int>(std::floor(qy));
            double fx = qx - x0, fy = qy - y0i;

            double alpha = 0, rgb[3] = {0, 0, 0};
            for (int dy2 = 0; dy2 < 2; ++dy2) {
                for (int dx2 = 0; dx2 < 2; ++dx2) {
                    int sy = y0i + dy2, sx = x0 + dx2;
                    double wgt = (dy2 ? fy : 1 - fy) * (dx2 ? fx : 1 - fx);
                    if (wgt == 0 || sy < 0 || sy >= patch.img.h || sx < 0 || sx >= patch.img.w)
                        continue;
                    double a = patch.mask.at(sy, sx);
                    alpha += wgt * a;
                    const uint8_t* src = patch.img.px(sy, sx);
                    rgb[0] += wgt * a * src[0];
                    rgb[1] += wgt * a * src[1];
                    rgb[2] += wgt * a * src[2];
                }
            }
            if (alpha <= 0) continue;
            uint8_t* dst = frame.px(y, x);
            for (int c = 0; c < 3; ++c) {
                // rgb is alpha-premultiplied; composite over the background.
                double v = rgb[c] + (1.0 - alpha) * dst[c];
                dst[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
            if (alpha >= 0.5) mask.at(y, x) = 1;
        }
    }
    return {frame, mask};
}

FrameSequence synthesize_sequence(const Image& frame, const Mask& label, int n, Rng& rng,
                                  const SynthesisRanges& ranges) {
    if (n < 2) throw ValidationError("synthesize_sequence: need at least 2 frames");
    if (label.empty_mask()) throw NoInstrumentError();

    auto [first, last] = sample_endpoint_params(rng, ranges);
    std::vector<MovingParams> params = interpolate_params(first, last, n);
    InstrumentPatch patch = extract_instrument(frame, label);
    Image background = inpaint(frame, label);

    FrameSequence seq;
    int center = (n + 1) / 2;  // 1-based
    for (int i = 1; i <= n; ++i) {
        if (i == center) {
            seq.frames.push_back(frame);
            seq.masks.push_back(label);
            continue;
        }
        auto [synth_frame, synth_mask] = transform_paste(background, patch,
                                                         params[static_cast<size_t>(i - 1)]);
        seq.frames.push_back(std::move(synth_frame));
        seq.masks.push_back(std::move(synth_mask));
    }
    return seq;
}

}  // namespace mffa
