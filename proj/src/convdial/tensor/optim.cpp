#include "convdial/tensor/optim.hpp"

#include <cmath>

#include "convdial/util/error.hpp"

namespace convdial {

AdamState::AdamState(std::span<const Tensor> params) {
  for (const auto& p : params) {
    first_moment.emplace_back(p.numel(), 0.0);
    second_moment.emplace_back(p.numel(), 0.0);
  }
}

AdamState::AdamState(const ParameterStore& store) {
  for (const auto& p : store.parameters()) {
    first_moment.emplace_back(p.tensor.numel(), 0.0);
    second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg) {
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel()) throw ShapeError("adam: moment shape mismatch");
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_values();
    auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg) {
  std::vector<Tensor> params;
  params.reserve(store.parameters().size());
  for (const auto& p : store.parameters()) params.push_back(p.tensor);
  adam_step(params, state, cfg);
}

}  // namespace convdial
