#include "mffa/losses.hpp"

namespace mffa {

namespace {
constexpr real kLogFloor = 1e-12;
}

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || lambda5 < 0) {
        throw ValidationError("LossWeights: weights must be nonnegative");
    }
}

Tensor cross_entropy(const Tensor& onehot, const Tensor& softmax_map) {
    if (onehot.shape() != softmax_map.shape()) {
        throw ValidationError("cross_entropy: label shape " + shape_str(onehot.shape()) +
                              " does not match prediction shape " + shape_str(softmax_map.shape()));
    }
    real inv_m = real(1) / real(onehot.size());
    return scale(sum(mul(onehot, log_clamped(softmax_map, kLogFloor))), -inv_m);
}

namespace {

Tensor mean_sequence_ce(const SequenceOutput& outputs, const std::vector<Tensor>& labels,
                        Direction expected, const char* who) {
    if (outputs.direction != expected) {
        throw ValidationError(std::string(who) + ": outputs carry the wrong traversal direction");
    }
    if (static_cast<int>(labels.size()) != outputs.n) {
        throw ValidationError(std::string(who) + ": got " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(outputs.n) + " frames");
    }
    Tensor total;
    for (int i = 0; i < outputs.n; ++i) {
        const Tensor& label = labels[static_cast<size_t>(i)];
        if (!label.defined()) {
            throw ValidationError(std::string(who) + ": frame " + std::to_string(i) +
                                  " is missing its label");
        }
        Tensor ce = cross_entropy(label, outputs.frames[static_cast<size_t>(i)].softmax);
        total = total.defined() ? add(total, ce) : ce;
    }
    return scale(total, real(1) / real(outputs.n));
}

}  // namespace

Tensor loss_forward_seq(const SequenceOutput& outputs, const std::vector<Tensor>& onehot_labels) {
    return mean_sequence_ce(outputs, onehot_labels, Direction::forward, "loss_forward_seq");
}

Tensor loss_backward_seq(const SequenceOutput& outputs, const std::vector<Tensor>& onehot_labels) {
    return mean_sequence_ce(outputs, onehot_labels, Direction::backward, "loss_backward_seq");
}

Tensor loss_last(const SequenceOutput& outputs, const Tensor& onehot_last) {
    if (outputs.direction != Direction::forward) {
        throw ValidationError("loss_last: needs a forward-run sequence");
    }
    if (!onehot_last.defined()) throw ValidationError("loss_last: last frame is unlabeled");
    const FrameOutput& last = outputs.frames.back();
    return cross_entropy(onehot_last, last.softmax);
}

Tensor loss_first(const FrameOutput& output, const Tensor& onehot, int n) {
    if (output.provenance != 0 && output.provenance != n + 1) {
        throw ValidationError("loss_first: output carries temporal provenance j=" +
                              std::to_string(output.provenance));
    }
    return cross_entropy(onehot, output.softmax);
}

Tensor total_loss_synthetic(const Tensor& fw, const Tensor& bw, const Tensor& first,
                            const LossWeights& w) {
    w.validate();
    return add(add(scale(fw, w.lambda1), scale(bw, w.lambda2)), scale(first, w.lambda3));
}

Tensor total_loss_real(const Tensor& last, const Tensor& first, const LossWeights& w) {
    w.validate();
    return add(scale(last, w.lambda4), scale(first, w.lambda5));
}

}  // namespace mffa
