#include "convdial/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace convdial {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs, double h,
                                double floor) {
  for (auto& t : inputs) t.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (numeric - analytic[k][i]) * (numeric - analytic[k][i]);
      a2 += analytic[k][i] * analytic[k][i];
      n2 += numeric * numeric;
    }
    const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_input = k;
    }
  }
  return result;
}

}  // namespace convdial
