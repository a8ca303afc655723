#include "mffa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace mffa {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open manifest");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(path + ": malformed JSON: " + e.what());
    }

    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.frame_size = j.at("frame_size").get<int>();
        m.label_stride = j.at("label_stride").get<int>();
        for (const auto& jv : j.at("videos")) {
            VideoEntry v;
            v.id = jv.at("id").get<std::string>();
            v.frames = jv.at("frames").get<std::vector<std::string>>();
            v.labeled_indices = jv.at("labeled_indices").get<std::vector<int>>();
            v.fold = jv.at("fold").get<int>();
            m.videos.push_back(std::move(v));
        }
    } catch (const ordered_json::exception& e) {
        throw ValidationError(path + ": manifest schema error: " + e.what());
    }

    for (const VideoEntry& v : m.videos) {
        int prev = -1;
        for (int idx : v.labeled_indices) {
            if (idx <= prev) {
                throw ValidationError(path + ": labeled indices of " + v.id +
                                      " are not strictly increasing");
            }
            if (idx < 0 || idx >= static_cast<int>(v.frames.size())) {
                throw ValidationError(path + ": labeled index " + std::to_string(idx) + " of " +
                                      v.id + " is out of range");
            }
            prev = idx;
        }
    }
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    ordered_json j;
    j["version"] = manifest.version;
    j["frame_size"] = manifest.frame_size;
    j["label_stride"] = manifest.label_stride;
    j["videos"] = ordered_json::array();
    for (const VideoEntry& v : manifest.videos) {
        ordered_json jv;
        jv["id"] = v.id;
        jv["frames"] = v.frames;
        jv["labeled_indices"] = v.labeled_indices;
        jv["fold"] = v.fold;
        j["videos"].push_back(std::move(jv));
    }
    std::ofstream out(path);
    if (!out) throw RuntimeFailure(path + ": cannot write manifest");
    out << j.dump(2) << "\n";
}

std::string mask_path_for(const std::string& frame_path) {
    fs::path p(frame_path);
    std::string name = p.filename().string();
    size_t pos = name.rfind("frame_");
    if (pos != std::string::npos) {
        name.replace(pos, 6, "mask_");
    } else {
        name = "mask_" + name;
    }
    fs::path out = p.parent_path() / name;
    out.replace_extension(".pgm");
    return out.string();
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.root = dir;
    ds.manifest = load_manifest((fs::path(dir) / "manifest.json").string());

    for (const VideoEntry& entry : ds.manifest.videos) {
        LoadedVideo v;
        v.id = entry.id;
        v.fold = entry.fold;
        v.labeled_indices = entry.labeled_indices;
        for (const std::string& rel : entry.frames) {
            fs::path fp = fs::path(dir) / rel;
            v.frames.push_back(load_ppm(fp.string()));
            fs::path mp = fs::path(dir) / mask_path_for(rel);
            if (fs::exists(mp)) {
                Mask m = load_pgm(mp.string());
                if (m.h != v.frames.back().h || m.w != v.frames.back().w) {
                    throw ValidationError(mp.string() + ": mask extents do not match the frame");
                }
                v.masks.push_back(std::move(m));
            } else {
                v.masks.push_back(std::nullopt);
            }
        }
        for (int idx : entry.labeled_indices) {
            if (!v.masks[static_cast<size_t>(idx)]) {
                throw ValidationError(entry.id + ": labeled frame " + std::to_string(idx) +
                                      " has no mask on disk");
            }
        }
        ds.videos.push_back(std::move(v));
    }
    return ds;
}

std::vector<RealSequence> extract_real_sequences(const Dataset& ds, int n, int sampling_stride,
                                                 SequenceReport* report) {
    if (n < 1) throw ValidationError("extract_real_sequences: n must be positive");
    if (sampling_stride < 1) throw ValidationError("extract_real_sequences: stride must be positive");
    SequenceReport local;
    std::vector<RealSequence> out;
    for (size_t vi = 0; vi < ds.videos.size(); ++vi) {
        const LoadedVideo& v = ds.videos[vi];
        for (int t : v.labeled_indices) {
            int start = t - sampling_stride * (n - 1);
            if (start < 0) {
                ++local.skipped_insufficient_history;
                continue;
            }
            RealSequence seq;
            seq.video = static_cast<int>(vi);
            for (int i = 0; i < n; ++i) seq.frame_indices.push_back(start + i * sampling_stride);
            out.push_back(std::move(seq));
            ++local.emitted;
        }
    }
    if (report) *report = local;
    return out;
}

FrameSequence materialize_sequence(const Dataset& ds, const RealSequence& seq) {
    const LoadedVideo& v = ds.videos[static_cast<size_t>(seq.video)];
    FrameSequence out;
    for (size_t i = 0; i < seq.frame_indices.size(); ++i) {
        int idx = seq.frame_indices[i];
        out.frames.push_back(v.frames[static_cast<size_t>(idx)]);
        if (i + 1 == seq.frame_indices.size()) {
            const auto& m = v.masks[static_cast<size_t>(idx)];
            if (!m) throw ValidationError("materialize_sequence: final frame is unlabeled");
            out.masks.push_back(*m);
        } else {
            out.masks.push_back(std::nullopt);
        }
    }
    return out;
}

// --- augmentation ---

namespace {

// 2x3 affine p_src = M * (x, y, 1).
struct Affine {
    double a = 1, b = 0, c = 0;
    double d = 0, e = 1, f = 0;

    static Affine identity() { return {}; }

    // this after other: maps p through other first, then this.
    Affine compose(const Affine& inner) const {
        Affine r;
        r.a = a * inner.a + b * inner.d;
        r.b = a * inner.b + b * inner.e;
        r.c = a * inner.c + b * inner.f + c;
        r.d = d * inner.a + e * inner.d;
        r.e = d * inner.b + e * inner.e;
        r.f = d * inner.c + e * inner.f + f;
        return r;
    }

    void apply(double x, double y, double* ox, double* oy) const {
        *ox = a * x + b * y + c;
        *oy = d * x + e * y + f;
    }
};

// Inverse source-lookup map for the shared geometric transform.
Affine inverse_geometric_map(const GeometricParams& g, int h, int w) {
    // Output pixel -> crop window coordinates.
    double ch = std::max(1.0, std::round(g.crop_frac * h));
    double cw = std::max(1.0, std::round(g.crop_frac * w));
    double oy = std::round(g.crop_cy * (h - ch));
    double ox = std::round(g.crop_cx * (w - cw));
    Affine crop;
    crop.a = cw / w;
    crop.c = ox + 0.5 * cw / w - 0.5;
    crop.e = ch / h;
    crop.f = oy + 0.5 * ch / h - 0.5;

    // Crop coordinates -> unrotated coordinates (inverse rotation + scale
    // about the frame center).
    double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    double th = -g.rot_deg * std::numbers::pi / 180.0;
    double inv_s = 1.0 / g.scale;
    Affine rot;
    rot.a = std::cos(th) * inv_s;
    rot.b = -std::sin(th) * inv_s;
    rot.d = std::sin(th) * inv_s;
    rot.e = std::cos(th) * inv_s;
    rot.c = cx - rot.a * cx - rot.b * cy;
    rot.f = cy - rot.d * cx - rot.e * cy;

    // Unrotated coordinates -> source coordinates (inverse flips).
    Affine flip;
    if (g.flip_h) {
        flip.a = -1;
        flip.c = w - 1;
    }
    if (g.flip_v) {
        flip.e = -1;
        flip.f = h - 1;
    }

    return flip.compose(rot.compose(crop));
}

uint8_t sample_bilinear_u8(const Image& img, double x, double y, int ch) {
    x = std::clamp(x, 0.0, double(img.w - 1));
    y = std::clamp(y, 0.0, double(img.h - 1));
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
    double fx = x - x0, fy = y - y0;
    double v = (1 - fy) * ((1 - fx) * img.px(y0, x0)[ch] + fx * img.px(y0, x1)[ch]) +
               fy * ((1 - fx) * img.px(y1, x0)[ch] + fx * img.px(y1, x1)[ch]);
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

Image warp_image(const Image& img, const Affine& m) {
    Image out = img;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double sx, sy;
            m.apply(x, y, &sx, &sy);
            uint8_t* dst = out.px(y, x);
            for (int c = 0; c < 3; ++c) dst[c] = sample_bilinear_u8(img, sx, sy, c);
        }
    }
    return out;
}

Mask warp_mask(const Mask& mask, const Affine& m) {
    Mask out = Mask::zeros(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            double sx, sy;
            m.apply(x, y, &sx, &sy);
            int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, mask.w - 1);
            int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, mask.h - 1);
            out.at(y, x) = mask.at(iy, ix) ? 1 : 0;
        }
    }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    *v = mx;
    double d = mx - mn;
    *s = mx == 0 ? 0 : d / mx;
    if (d == 0) {
        *h = 0;
    } else if (mx == r) {
        *h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        *h = 60.0 * ((b - r) / d + 2.0);
    } else {
        *h = 60.0 * ((r - g) / d + 4.0);
    }
    if (*h < 0) *h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
    double c = v * s;
    double hp = std::fmod(h / 60.0, 6.0);
    if (hp < 0) hp += 6.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double m = v - c;
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1) { rr = c; gg = x; }
    else if (hp < 2) { rr = x; gg = c; }
    else if (hp < 3) { gg = c; bb = x; }
    else if (hp < 4) { gg = x; bb = c; }
    else if (hp < 5) { rr = x; bb = c; }
    else { rr = c; bb = x; }
    *r = rr + m;
    *g = gg + m;
    *b = bb + m;
}

void apply_photometric(Image& img, const PhotometricParams& p) {
    for (int64_t i = 0; i < static_cast<int64_t>(img.rgb.size()); i += 3) {
        double r = img.rgb[static_cast<size_t>(i)] / 255.0;
        double g = img.rgb[static_cast<size_t>(i) + 1] / 255.0;
        double b = img.rgb[static_cast<size_t>(i) + 2] / 255.0;

        r *= 1.0 + p.brightness;
        g *= 1.0 + p.brightness;
        b *= 1.0 + p.brightness;

        double mean = 0.5;
        r = (r - mean) * (1.0 + p.contrast) + mean;
        g = (g - mean) * (1.0 + p.contrast) + mean;
        b = (b - mean) * (1.0 + p.contrast) + mean;

        if (p.saturation != 0 || p.hue_deg != 0) {
            double h, s, v;
            rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0), std::clamp(b, 0.0, 1.0),
                       &h, &s, &v);
            s = std::clamp(s * (1.0 + p.saturation), 0.0, 1.0);
            h = std::fmod(h + p.hue_deg + 360.0, 360.0);
            hsv_to_rgb(h, s, v, &r, &g, &b);
        }

        img.rgb[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(std::clamp(r, 0.0, 1.0) * 255));
        img.rgb[static_cast<size_t>(i) + 1] = static_cast<uint8_t>(std::lround(std::clamp(g, 0.0, 1.0) * 255));
        img.rgb[static_cast<size_t>(i) + 2] = static_cast<uint8_t>(std::lround(std::clamp(b, 0.0, 1.0) * 255));
    }
}

bool geometric_is_identity(const GeometricParams& g) {
    return !g.flip_h && !g.flip_v && g.rot_deg == 0 && g.scale == 1.0 && g.crop_frac == 1.0;
}

bool photometric_is_identity(const PhotometricParams& p) {
    return p.hue_deg == 0 && p.brightness == 0 && p.saturation == 0 && p.contrast == 0;
}

}  // namespace

AugmentParams sample_augment_params(Rng& rng, const AugmentConfig& cfg, int n_frames) {
    AugmentParams p;
    p.geometric.flip_h = rng.bernoulli(0.5);
    p.geometric.flip_v = rng.bernoulli(0.5);
    p.geometric.rot_deg = rng.uniform(-cfg.max_rot_deg, cfg.max_rot_deg);
    p.geometric.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    p.geometric.crop_frac = rng.uniform(cfg.crop_min, 1.0);
    p.geometric.crop_cx = rng.unit();
    p.geometric.crop_cy = rng.unit();
    for (int i = 0; i < n_frames; ++i) {
        PhotometricParams ph;
        ph.brightness = rng.uniform(-cfg.brightness, cfg.brightness);
        ph.contrast = rng.uniform(-cfg.contrast, cfg.contrast);
        ph.saturation = rng.uniform(-cfg.saturation, cfg.saturation);
        ph.hue_deg = rng.uniform(-cfg.hue_deg, cfg.hue_deg);
        p.photometric.push_back(ph);
    }
    return p;
}

FrameSequence apply_augment(const FrameSequence& seq, const AugmentParams& params) {
    if (static_cast<int>(params.photometric.size()) != seq.size()) {
        throw ValidationError("apply_augment: one photometric set per frame required");
    }
    FrameSequence out;
    bool geo_identity = geometric_is_identity(params.geometric);
    Affine m;
    if (!geo_identity && seq.size() > 0) {
        m = inverse_geometric_map(params.geometric, seq.frames[0].h, seq.frames[0].w);
    }
    for (int i = 0; i < seq.size(); ++i) {
        Image img = geo_identity ? seq.frames[static_cast<size_t>(i)]
                                 : warp_image(seq.frames[static_cast<size_t>(i)], m);
        if (!photometric_is_identity(params.photometric[static_cast<size_t>(i)])) {
            apply_photometric(img, params.photometric[static_cast<size_t>(i)]);
        }
        out.frames.push_back(std::move(img));
        const auto& mask = seq.masks[static_cast<size_t>(i)];
        if (mask) {
            out.masks.push_back(geo_identity ? *mask : warp_mask(*mask, m));
        } else {
            out.masks.push_back(std::nullopt);
        }
    }
    return out;
}

FrameSequence augment_sequence(const FrameSequence& seq, Rng& rng, const AugmentConfig& cfg) {
    return apply_augment(seq, sample_augment_params(rng, cfg, seq.size()));
}

void ToyDatasetConfig::validate() const {
    if (videos < 1 || frames_per_video < 1) throw ValidationError("toy config: empty dataset");
    if (frame_size < 16) throw ValidationError("toy config: frame_size must be >= 16");
    if (label_stride < 1) throw ValidationError("toy config: label_stride must be positive");
    if (folds < 1) throw ValidationError("toy config: folds must be positive");
    for (double r : {collapse_rate, streak_rate, blotch_rate}) {
        if (r < 0 || r > 1) throw ValidationError("toy config: rates must be in [0,1]");
    }
    if (min_instrument_frac <= 0 || max_instrument_frac > 1 ||
        min_instrument_frac >= max_instrument_frac) {
        throw ValidationError("toy config: instrument fraction bounds out of order");
    }
    if (collapse_strength <= 0 || collapse_strength > 0.25) {
        throw ValidationError("toy config: collapse_strength must be in (0, 0.25]");
    }
}

}  // namespace mffa
