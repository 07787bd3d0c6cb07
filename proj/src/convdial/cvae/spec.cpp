#include "convdial/cvae/spec.hpp"

#include <algorithm>
#include <cctype>

#include "convdial/util/error.hpp"

namespace convdial {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kA:
      return "A";
    case ModelKind::kB:
      return "B";
    case ModelKind::kBAR:
      return "B_AR";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  std::string up = text;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "A") return ModelKind::kA;
  if (up == "B") return ModelKind::kB;
  if (up == "B_AR" || up == "BAR") return ModelKind::kBAR;
  throw ConfigError("unknown model kind '" + text + "' (expected A, B or B_AR)");
}

std::size_t ModelSpec::channels() const { return kind == ModelKind::kA ? 1 : 2 * turns; }

std::size_t ModelSpec::context_channels() const { return kind == ModelKind::kA ? 2 * turns - 1 : 0; }

void ModelSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model spec: " + msg); };
  if (embed_dim == 0 || length == 0 || turns == 0 || latent == 0 || fixed_embed_dim == 0 || hidden == 0) {
    fail("dimensions must be positive");
  }
  if (vocab < 3) fail("vocabulary must hold PAD, UNK and at least one word");
  if (spatial < 2 || spatial % 2 != 0) fail("spatial extent must be even and >= 2");
  if (embed_dim < spatial || fixed_embed_dim < spatial || length < spatial) {
    fail("E, E_fixed and L must be at least the spatial extent");
  }
  if (feature_dim % (spatial * spatial) != 0) fail("feature_dim must be a multiple of spatial^2");
  if (kind == ModelKind::kBAR) {
    if (ar_layers < 1) fail("B_AR needs at least one AR layer");
    if (ar_kernel % 2 == 0 || ar_kernel < 3) fail("ar_kernel must be odd and >= 3");
  } else if (ar_layers != 0) {
    fail("ar_layers only applies to B_AR");
  }
  if (dirac && kind != ModelKind::kA) fail("Dirac mode is defined for model A only");
}

std::string ModelSpec::description() const { return to_json().dump(); }

nlohmann::json ModelSpec::to_json() const {
  return {{"kind", to_string(kind)},
          {"ar_layers", ar_layers},
          {"ar_kernel", ar_kernel},
          {"dirac", dirac},
          {"E", embed_dim},
          {"L", length},
          {"T", turns},
          {"V", vocab},
          {"Z", latent},
          {"E_fixed", fixed_embed_dim},
          {"feature_dim", feature_dim},
          {"hidden", hidden},
          {"spatial", spatial},
          {"mask_pad", mask_pad}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    s.ar_layers = j.value("ar_layers", s.kind == ModelKind::kBAR ? 2 : 0);
    s.ar_kernel = j.value("ar_kernel", s.ar_kernel);
    s.dirac = j.value("dirac", false);
    s.embed_dim = j.value("E", s.embed_dim);
    s.length = j.value("L", s.length);
    s.turns = j.value("T", s.turns);
    s.vocab = j.value("V", s.vocab);
    s.latent = j.value("Z", s.latent);
    s.fixed_embed_dim = j.value("E_fixed", s.fixed_embed_dim);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.hidden = j.value("hidden", s.hidden);
    s.spatial = j.value("spatial", s.spatial);
    s.mask_pad = j.value("mask_pad", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return s;
}

}  // namespace convdial
