#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mffa/mffa_block.hpp"

namespace mffa {

enum class EncoderVariant { full, trimmed };
enum class MFFAMode { full, sab_only, none };
enum class Direction { forward, backward };

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::trimmed;
    int base_channels = 16;
    int output_stride = 4;   // frame-to-feature downscale; power of two
    int out_channels = 64;   // equals the MFFA channel count
    int full_blocks = 4;
    int trimmed_blocks = 2;

    int blocks() const { return variant == EncoderVariant::full ? full_blocks : trimmed_blocks; }
    // Stride of the i-th 3x3 block: 2 until the accumulated stride reaches
    // output_stride, then 1. Both variants land on the same feature extents.
    int block_stride(int i) const;
    int block_out_channels(int i) const { return base_channels << i; }
    void validate() const;
};

struct ModelConfig {
    EncoderConfig encoder;
    MFFAConfig mffa;
    MFFAMode mode = MFFAMode::full;
    int frame_h = 64;
    int frame_w = 64;

    void validate() const;
    void feature_extents(int* h, int* w) const;
};

// Named trainable tensors in fixed creation order. Values are shared between
// views; gradient buffers can be made private per worker thread.
class ParamStore {
public:
    int create(const std::string& name, const Shape& shape);
    int index_of(const std::string& name) const;
    int count() const { return static_cast<int>(entries_.size()); }
    Tensor& at(int idx) { return entries_[static_cast<size_t>(idx)].value; }
    const Tensor& at(int idx) const { return entries_[static_cast<size_t>(idx)].value; }
    const std::string& name(int idx) const { return entries_[static_cast<size_t>(idx)].name; }

    void zero_grads();
    real grad_norm() const;
    void scale_grads(real s);

    // Same values, fresh zero gradient buffers.
    ParamStore grad_view() const;

private:
    struct Entry {
        std::string name;
        Tensor value;
    };
    std::vector<Entry> entries_;
};

// The full encoder-MFFA-decoder parameter set plus typed handles into the store.
struct ModelParams {
    ModelConfig cfg;
    ParamStore store;

    struct ConvIdx {
        int k = -1;
        int b = -1;
    };
    std::vector<ConvIdx> enc_blocks;
    ConvIdx enc_proj;
    ConvIdx tab_agg, tab_gate;
    ConvIdx sab_b, sab_c, sab_coarse, sab_phi1, sab_phi2;
    int sab_w = -1, sab_bias = -1;
    ConvIdx dec_conv, dec_head;

    ModelParams grad_view() const;
    TABParams tab() const;
    SABParams sab() const;
    MFFAParams mffa_params() const;
};

ModelParams init_model_params(const ModelConfig& cfg, uint64_t seed);

Tensor encode(const Tensor& frame, const ModelParams& mp);
Tensor decode(const Tensor& features, const ModelParams& mp);

// Instrument wherever channel 0 strictly beats channel 1; ties go to background.
Mask predict_mask(const Tensor& softmax_map);

struct StepOutput {
    Tensor softmax;  // frame-resolution HxWx2
    Tensor features; // aggregated features handed to the next step
};

StepOutput model_step(const Tensor& frame, const std::optional<MFFAState>& state,
                      const ModelParams& mp);

// Per-frame softmax output tagged with its provenance index j: j in [1,N]
// names the frame whose aggregated features were used; 0 and N+1 mean the
// prediction used no temporal information.
struct FrameOutput {
    int frame_index = 0;  // 0-based position in the sequence
    int provenance = 0;   // j
    Tensor softmax;
};

struct SequenceOutput {
    Direction direction = Direction::forward;
    int n = 0;
    std::vector<FrameOutput> frames;  // indexed by original frame position
};

SequenceOutput run_sequence(const std::vector<Tensor>& frames, Direction direction,
                            const ModelParams& mp);

// Exact multiply-accumulate count of the encoder from conv shape arithmetic.
uint64_t count_flops(const EncoderConfig& cfg, int frame_h, int frame_w);

struct FlopBreakdown {
    uint64_t encoder = 0;
    uint64_t mffa = 0;
    uint64_t decoder = 0;
    uint64_t total() const { return encoder + mffa + decoder; }
};

// Per-frame MAC count of the whole pipeline (TAB counted when the mode has it).
FlopBreakdown count_model_flops(const ModelConfig& cfg);

}  // namespace mffa
