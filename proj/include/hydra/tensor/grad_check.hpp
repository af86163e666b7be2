#pragma once

#include <functional>
#include <vector>

#include "hydra/tensor/tensor.hpp"

namespace hydra::ad {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_element = 0;
    double analytic = 0.0;  // at the worst element
    double numeric = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of `fn` with central differences.
/// Relative error per element is |a - n| / (|a| + |n| + 1e-9); the check
/// passes when the maximum is <= tol. The 1e-9 floor keeps structurally
/// zero gradients (rounding noise on both sides) from counting as failures.
/// Throws std::runtime_error when two evaluations at the same point disagree.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double eps = 1e-5,
                           double tol = 1e-5);

}  // namespace hydra::ad
