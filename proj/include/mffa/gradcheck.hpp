#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mffa/tensor.hpp"

namespace mffa {

// Central-difference check of every coordinate of the given tensors against
// the analytic gradients of the scalar f(). Returns
// max |analytic - central| / max(1, |analytic|).
real finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, real eps);

inline real finite_diff_check(const std::function<Tensor()>& f, const Tensor& x, real eps) {
    return finite_diff_check(f, std::vector<Tensor>{x}, eps);
}

struct GradCheckResult {
    std::string name;
    real max_rel_err = 0;
    bool pass = false;
};

// Checks every registered differentiable op on randomized shapes (three per
// op), plus the full encode -> MFFA -> decode -> cross-entropy composite on a
// tiny model. `full` adds larger shapes.
std::vector<GradCheckResult> run_gradchecks(uint64_t seed, bool full, real tolerance = 1e-4,
                                            real eps = 1e-5);

}  // namespace mffa
