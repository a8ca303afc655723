#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mffa/synth.hpp"

namespace mffa {

struct VideoEntry {
    std::string id;
    std::vector<std::string> frames;  // paths relative to the dataset root
    std::vector<int> labeled_indices;
    int fold = 0;
};

struct DatasetManifest {
    int version = 1;
    int frame_size = 64;
    int label_stride = 3;
    std::vector<VideoEntry> videos;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Mask path convention: frame_XXXXXX.ppm -> mask_XXXXXX.pgm alongside it.
std::string mask_path_for(const std::string& frame_path);

struct LoadedVideo {
    std::string id;
    int fold = 0;
    std::vector<Image> frames;
    std::vector<std::optional<Mask>> masks;  // every mask present on disk
    std::vector<int> labeled_indices;        // the sparse training view
};

struct Dataset {
    DatasetManifest manifest;
    std::string root;
    std::vector<LoadedVideo> videos;
};

// Loads every frame plus whatever masks exist; labeled indices must have one.
Dataset load_dataset(const std::string& dir);

// A training sequence ending at a labeled frame; only that frame is labeled.
struct RealSequence {
    int video = 0;
    std::vector<int> frame_indices;
};

struct SequenceReport {
    int emitted = 0;
    int skipped_insufficient_history = 0;
};

// For each labeled frame at t, the N frames t-s(N-1), ..., t-s, t. Labeled
// frames without enough history are skipped and counted.
std::vector<RealSequence> extract_real_sequences(const Dataset& ds, int n, int sampling_stride,
                                                 SequenceReport* report = nullptr);

// Materializes images, attaching a mask only to the final frame.
FrameSequence materialize_sequence(const Dataset& ds, const RealSequence& seq);

// --- sequence-level augmentation ---

struct GeometricParams {
    bool flip_h = false;
    bool flip_v = false;
    double rot_deg = 0;
    double scale = 1.0;
    double crop_frac = 1.0;  // crop window side as a fraction of the frame
    double crop_cx = 0.5;    // window center, normalized to the valid range
    double crop_cy = 0.5;
};

struct PhotometricParams {
    double hue_deg = 0;
    double brightness = 0;  // relative deltas
    double saturation = 0;
    double contrast = 0;
};

// One geometric set for the whole sequence; one photometric set per frame.
struct AugmentParams {
    GeometricParams geometric;
    std::vector<PhotometricParams> photometric;
};

struct AugmentConfig {
    double max_rot_deg = 15.0;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double crop_min = 0.85;
    double brightness = 0.10;
    double contrast = 0.10;
    double saturation = 0.10;
    double hue_deg = 5.0;
};

AugmentParams sample_augment_params(Rng& rng, const AugmentConfig& cfg, int n_frames);

// Applies the shared geometric map to every frame and mask (masks resampled
// nearest and re-binarized) and the per-frame photometric jitter to images.
FrameSequence apply_augment(const FrameSequence& seq, const AugmentParams& params);

FrameSequence augment_sequence(const FrameSequence& seq, Rng& rng, const AugmentConfig& cfg);

// --- procedural toy dataset ---

struct ToyDatasetConfig {
    int videos = 8;
    int frames_per_video = 300;
    int frame_size = 64;
    int label_stride = 3;
    int folds = 4;
    double collapse_rate = 0.10;  // contrast-collapse challenge frames
    double streak_rate = 0.06;    // specular streaks
    double blotch_rate = 0.06;    // red-tint blotches
    double min_instrument_frac = 0.02;
    double max_instrument_frac = 0.20;
    double collapse_strength = 0.12;  // residual fraction of the intensity gap

    void validate() const;
};

// Writes frames, dense truth masks, and manifest.json under out_dir.
DatasetManifest gen_toy_dataset(const ToyDatasetConfig& cfg, uint64_t seed,
                                const std::string& out_dir);

}  // namespace mffa
