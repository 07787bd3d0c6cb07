#pragma once

#include <functional>
#include <vector>

#include "convdial/tensor/tensor.hpp"

namespace convdial {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// with step h, per input tensor. The error for one tensor is
/// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor) in 2-norm,
/// so that all-zero gradients compare as exact.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                double h = 1e-5, double floor = 1e-10);

}  // namespace convdial
