#include "convdial/train/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "convdial/train/batching.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

void TrainConfig::validate() const {
  if (ramp_epochs < 1) throw ConfigError("ramp_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},     {"ramp_epochs", ramp_epochs}, {"batch_size", batch_size},
          {"lr", lr},             {"seed", seed},               {"recalibrate_bn", recalibrate_bn}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train section must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "ramp_epochs") c.ramp_epochs = value.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "recalibrate_bn") c.recalibrate_bn = value.get<bool>();
    else throw ConfigError("unknown train key '" + key + "'");
  }
  c.validate();
  return c;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"alpha", alpha}, {"ce", ce}, {"kld", kld}, {"loss", loss}, {"batches", batches}};
}

EpochLog EpochLog::from_json(const nlohmann::json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.alpha = j.at("alpha").get<double>();
  e.ce = j.at("ce").get<double>();
  e.kld = j.at("kld").get<double>();
  e.loss = j.at("loss").get<double>();
  e.batches = j.at("batches").get<std::size_t>();
  return e;
}

std::vector<EpochLog> train_model(Model& model, const Dataset& data, std::span<const std::size_t> records,
                                  const TrainConfig& cfg, const EpochHook& on_epoch) {
  cfg.validate();
  const ModelSpec& spec = model.spec();
  check_compatible(data, spec);
  std::vector<SampleRef> samples = training_samples(data, spec, records);
  if (samples.empty()) throw InvalidArgument("no training samples");

  Rng rng(cfg.seed);
  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamState state(model.parameters());
  std::vector<EpochLog> log;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.alpha = kl_annealing_weight(static_cast<double>(epoch), cfg.ramp_epochs);
    rng.shuffle(samples);
    double ce_sum = 0.0, kld_sum = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), start + cfg.batch_size);
      ModelBatch batch = make_batch(data, spec, std::span(samples).subspan(start, end - start));
      Tensor eps;
      if (!spec.dirac) eps = Tensor({batch.size, spec.latent}, rng.normal_vector(batch.size * spec.latent));
      try {
        model.parameters().zero_grad();
        ElboResult r = elbo(model, batch, eps, e.alpha, Mode::kTrain);
        backward(r.loss);
        adam_step(model.parameters(), state, adam);
        for (double v : r.ce_per_example) ce_sum += v;
        for (double v : r.kld_per_example) kld_sum += v;
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(e.batches) + ")");
      }
      ++e.batches;
    }
    const double count = static_cast<double>(samples.size());
    e.ce = ce_sum / count;
    e.kld = kld_sum / count;
    e.loss = e.ce + e.alpha * e.kld;
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  if (cfg.recalibrate_bn && cfg.epochs > 0) recalibrate_batchnorm(model, data, records, cfg.batch_size);
  return log;
}

void recalibrate_batchnorm(Model& model, const Dataset& data, std::span<const std::size_t> records,
                           std::size_t batch_size) {
  const ModelSpec& spec = model.spec();
  std::vector<SampleRef> samples = training_samples(data, spec, records);
  std::vector<LayerParams*> layers = model.batchnorm_layers();
  std::vector<double> saved;
  for (LayerParams* l : layers) saved.push_back(l->momentum);

  NoGradGuard no_grad;
  std::size_t k = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    ModelBatch batch = make_batch(data, spec, std::span(samples).subspan(start, end - start));
    ++k;
    // Momentum 1/k turns the exponential average into a running mean.
    for (LayerParams* l : layers) l->momentum = 1.0 / static_cast<double>(k);
    elbo(model, batch, Tensor(), 1.0, Mode::kTrain);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i]->momentum = saved[i];
}

}  // namespace convdial
