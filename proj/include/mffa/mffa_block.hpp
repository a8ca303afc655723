#pragma once

#include <optional>
#include <utility>

#include "mffa/image.hpp"
#include "mffa/tensor.hpp"

namespace mffa {

enum class AttnNorm { row_softmax, raw };

struct MFFAConfig {
    int channels = 64;  // C; SAB projects to C/2, so it must be even
    AttnNorm attention_normalization = AttnNorm::row_softmax;

    void validate() const;
};

// Temporal carry between steps: the previous aggregated features and the
// previous predicted mask at frame resolution.
struct MFFAState {
    Tensor h_prev;   // H x W x C
    Mask mask_prev;  // frame resolution, strictly binary
};

struct ConvParam {
    Tensor kernel;
    Tensor bias;
};

struct TABParams {
    ConvParam agg;   // 1x1, 2C -> C, no activation
    ConvParam gate;  // 1x1, 2C -> 1, sigmoid
};

struct SABParams {
    ConvParam proj_b;  // 1x1, C -> C/2
    ConvParam proj_c;  // 1x1, C -> C/2
    Tensor w;          // C x C
    Tensor bias;       // C
    ConvParam coarse;  // 1x1, C -> 2
    ConvParam phi1;    // 3x3, C+2 -> C/2
    ConvParam phi2;    // 3x3, C/2 -> C
};

struct MFFAParams {
    TABParams tab;
    SABParams sab;
};

// Gated temporal aggregation of the previous frame's instrument features into
// the current features. The caller skips this on the first frame.
Tensor tab_forward(const Tensor& f_i, const MFFAState& state, const TABParams& p);

// Intermediate values exposed for verification.
struct SABTrace {
    Tensor attention;  // (HW) x (HW), after normalization
    Tensor h_prime;    // H x W x C, the affine aggregation before refinement
};

// Spatial attention aggregation with residual refinement. Returns the
// aggregated features h_i and the coarse two-channel softmax map.
std::pair<Tensor, Tensor> sab_forward(const Tensor& f_prime, const SABParams& p,
                                      const MFFAConfig& cfg, SABTrace* trace = nullptr);

std::pair<Tensor, Tensor> mffa_forward(const Tensor& f_i, const std::optional<MFFAState>& state,
                                       const MFFAParams& p, const MFFAConfig& cfg);

}  // namespace mffa
