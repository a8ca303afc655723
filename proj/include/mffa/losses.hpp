#pragma once

#include "mffa/model.hpp"

namespace mffa {

struct LossWeights {
    real lambda1 = real(1) / 3;  // forward sequence loss
    real lambda2 = real(1) / 3;  // backward sequence loss
    real lambda3 = real(1) / 3;  // first-frame loss, synthetic objective
    real lambda4 = real(0.5);    // last-frame loss
    real lambda5 = real(0.5);    // first-frame loss, real objective

    void validate() const;
};

// Mean negative log-likelihood over every element of the one-hot map
// (pixels x channels); predictions are clamped at 1e-12 before the log.
Tensor cross_entropy(const Tensor& onehot, const Tensor& softmax_map);

// Average cross-entropy over a densely labeled sequence, forward provenance.
Tensor loss_forward_seq(const SequenceOutput& outputs, const std::vector<Tensor>& onehot_labels);

// Same for the backward pass.
Tensor loss_backward_seq(const SequenceOutput& outputs, const std::vector<Tensor>& onehot_labels);

// Cross-entropy of the last frame of a forward run.
Tensor loss_last(const SequenceOutput& outputs, const Tensor& onehot_last);

// Cross-entropy of a frame predicted with no temporal information.
Tensor loss_first(const FrameOutput& output, const Tensor& onehot, int n);

Tensor total_loss_synthetic(const Tensor& fw, const Tensor& bw, const Tensor& first,
                            const LossWeights& w);

Tensor total_loss_real(const Tensor& last, const Tensor& first, const LossWeights& w);

}  // namespace mffa
