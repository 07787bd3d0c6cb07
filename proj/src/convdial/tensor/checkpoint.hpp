#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "convdial/tensor/nn.hpp"

namespace convdial {

// Checkpoint layout (all integers little-endian):
//
//   offset 0   8 bytes  magic "CVDCKPT1"
//   offset 8   u64      manifest byte length M
//   offset 16  M bytes  UTF-8 JSON manifest:
//                {"format": "convdial-checkpoint", "version": 1, "dtype": "float64-le",
//                 "arch_hash": "<16 hex digits>", "seed": <u64>,
//                 "tensors": [{"name": ..., "role": "parameter"|"buffer", "shape": [...]}, ...],
//                 "meta": {...}}
//   offset 16+M         raw float64 values of every tensor, in manifest order
//                       (parameters in declaration order, then batch-norm buffers)

struct CheckpointInfo {
  std::string arch_hash;
  std::uint64_t seed = 0;
  nlohmann::json meta;
};

/// FNV-1a over an architecture description plus every tensor name and shape.
std::string architecture_hash(const std::string& description, const ParameterStore& store);

void save_checkpoint(const std::string& path, const ParameterStore& store, const CheckpointInfo& info);

/// Reads only the manifest.
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Loads values into an already-constructed store. The manifest's tensor list
/// and arch hash must match `expected_hash` and the store exactly.
CheckpointInfo load_checkpoint(const std::string& path, ParameterStore& store, const std::string& expected_hash);

}  // namespace convdial
