#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "convdial/tensor/nn.hpp"

namespace convdial {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::span<const Tensor> params);
  explicit AdamState(const ParameterStore& store);
};

/// One bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws NumericError (and leaves everything untouched) if a gradient is non-finite.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg);
void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg);

}  // namespace convdial
