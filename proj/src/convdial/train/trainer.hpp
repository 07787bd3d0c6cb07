#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "convdial/cvae/model.hpp"
#include "convdial/data/dataset.hpp"
#include "convdial/tensor/optim.hpp"

namespace convdial {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t ramp_epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  /// Re-estimate batch-norm statistics with an exact average over the
  /// training set once training ends (see recalibrate_batchnorm).
  bool recalibrate_bn = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double alpha = 0.0;
  double ce = 0.0;   // mean per-example CE over the epoch
  double kld = 0.0;  // mean per-example KLD
  double loss = 0.0;
  std::size_t batches = 0;

  nlohmann::json to_json() const;
  static EpochLog from_json(const nlohmann::json& j);
};

using EpochHook = std::function<void(const EpochLog&)>;

/// Minibatch Adam on the model's ELBO over `records` (indices into data).
/// Each epoch reshuffles the samples from one seeded stream, which also
/// supplies the reparameterisation noise, so the log is a pure function of
/// (model init, data, config).
std::vector<EpochLog> train_model(Model& model, const Dataset& data, std::span<const std::size_t> records,
                                  const TrainConfig& cfg, const EpochHook& on_epoch = {});

/// Replaces every batch-norm running mean/variance by the average of the
/// per-batch statistics over one ordered pass of `records` in train mode.
/// Parameters are untouched.
void recalibrate_batchnorm(Model& model, const Dataset& data, std::span<const std::size_t> records,
                           std::size_t batch_size);

}  // namespace convdial
