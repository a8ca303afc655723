#pragma once

#include <string>
#include <vector>

#include "mffa/dataset.hpp"
#include "mffa/losses.hpp"
#include "mffa/metrics.hpp"

namespace mffa {

enum class Curriculum { real_only, synthetic_then_real };

struct TrainConfig {
    int epochs = 40;
    int batch_size = 4;
    double learning_rate = 0.0005;
    double decay_factor = 0.5;
    int decay_interval = 5;
    int decay_start_epoch = 20;
    Curriculum curriculum = Curriculum::synthetic_then_real;
    int sequence_length = 4;
    uint64_t seed = 1;

    EncoderVariant encoder_variant = EncoderVariant::trimmed;
    MFFAMode mffa_mode = MFFAMode::full;
    int channels = 64;
    int base_channels = 16;
    int output_stride = 4;
    AttnNorm attention_normalization = AttnNorm::row_softmax;

    LossWeights weights;
    double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
    int sampling_stride = 3;

    int holdout_fold = 0;        // < 0 trains on every video and skips evaluation
    int eval_stride = 3;
    double early_stop_mdsc = 0;  // stop once held-out mDSC reaches this; 0 disables

    bool augment = true;
    AugmentConfig augment_config;
    SynthesisRanges synth_ranges;

    int threads = 4;  // additionally capped by MFFA_THREADS and the batch size

    void validate() const;
};

TrainConfig train_config_from_json(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

ModelConfig model_config_from(const TrainConfig& cfg, int frame_h, int frame_w);

// Base rate before decay_start_epoch; thereafter halved every decay_interval,
// with the first decay applied at decay_start_epoch itself.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::vector<std::vector<real>> m;  // aligned with ParamStore indices
    std::vector<std::vector<real>> v;

    static AdamState for_params(const ParamStore& store);
};

// Bias-corrected update from the gradients held in the store. Throws
// RuntimeFailure naming the parameter on a non-finite gradient.
void adam_step(ParamStore& params, AdamState& state, double lr);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double loss_total = 0;
    double loss_fw = 0;
    double loss_bw = 0;
    double loss_last = 0;
    double loss_first = 0;
    double holdout_mdsc = -1;  // < 0 when not evaluated
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochLog> history;
    int epochs_run = 0;
    double final_holdout_mdsc = -1;
    std::string final_checkpoint;
};

// Full training loop: synthetic phase minimizes the three-term objective,
// real phase the two-term one; per-epoch checkpoints and a JSONL loss log
// land in out_dir.
TrainResult train(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir);

// Checkpoint = model parameters + optimizer moments + schedule position +
// config hash + the config JSON itself.
void save_training_checkpoint(const std::string& path, const ModelParams& params,
                              const AdamState& opt, int epoch, const TrainConfig& cfg);

struct LoadedCheckpoint {
    ModelParams params;
    AdamState opt;
    int epoch = 0;
    uint64_t config_hash = 0;
    TrainConfig config;
};

// Rebuilds the model from the embedded config; frame extents come from the
// data the model is applied to.
LoadedCheckpoint load_training_checkpoint(const std::string& path, int frame_h, int frame_w);

int resolve_thread_count(int requested, int batch_elements);

}  // namespace mffa
