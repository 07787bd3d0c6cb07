#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace convdial {

enum class ModelKind { kA, kB, kBAR };

std::string to_string(ModelKind kind);
/// "A", "B" or "B_AR" (case-insensitive).
ModelKind parse_model_kind(const std::string& text);

/// Architecture of one model. Spatial maps inside the networks are
/// spatial x spatial with `hidden` channels; image features are reshaped to
/// (feature_dim / spatial^2) x spatial x spatial.
struct ModelSpec {
  ModelKind kind = ModelKind::kA;
  std::size_t ar_layers = 0;
  std::size_t ar_kernel = 9;
  bool dirac = false;
  std::size_t embed_dim = 32;        // E
  std::size_t length = 16;           // L
  std::size_t turns = 5;             // T
  std::size_t vocab = 0;             // V
  std::size_t latent = 32;           // Z
  std::size_t fixed_embed_dim = 32;  // E_fixed
  std::size_t feature_dim = 256;
  std::size_t hidden = 32;
  std::size_t spatial = 4;
  bool mask_pad = false;

  /// Channels of x: 1 for A, 2T otherwise.
  std::size_t channels() const;
  /// Channels of A's context h+_t (2T - 1); 0 for block models.
  std::size_t context_channels() const;
  std::size_t image_channels() const { return feature_dim / (spatial * spatial); }

  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;
  /// Canonical text used for the checkpoint architecture hash.
  std::string description() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  bool operator==(const ModelSpec&) const = default;
};

}  // namespace convdial
