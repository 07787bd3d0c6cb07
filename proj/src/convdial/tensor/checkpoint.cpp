#include "convdial/tensor/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "convdial/util/bytes.hpp"
#include "convdial/util/error.hpp"

namespace convdial {

namespace {

constexpr char kMagic[8] = {'C', 'V', 'D', 'C', 'K', 'P', 'T', '1'};

struct Entry {
  std::string name;
  std::string role;
  Tensor tensor;
};

std::vector<Entry> ordered_entries(const ParameterStore& store) {
  std::vector<Entry> out;
  for (const auto& p : store.parameters()) out.push_back({p.name, "parameter", p.tensor});
  for (const auto& b : store.buffers()) out.push_back({b.name, "buffer", b.tensor});
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Parsed {
  nlohmann::json manifest;
  std::size_t data_offset = 0;
};

Parsed parse_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError(path + ": not a convdial checkpoint");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t len = get_u64(raw + 8);
  if (len > bytes.size() - 16) throw ParseError(path + ": truncated manifest");
  Parsed p;
  try {
    p.manifest = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad manifest: " + e.what());
  }
  if (p.manifest.value("format", "") != "convdial-checkpoint" || p.manifest.value("dtype", "") != "float64-le") {
    throw ParseError(path + ": unsupported checkpoint format");
  }
  p.data_offset = 16 + len;
  return p;
}

CheckpointInfo info_from(const nlohmann::json& m) {
  CheckpointInfo info;
  info.arch_hash = m.at("arch_hash").get<std::string>();
  info.seed = m.at("seed").get<std::uint64_t>();
  info.meta = m.value("meta", nlohmann::json::object());
  return info;
}

}  // namespace

std::string architecture_hash(const std::string& description, const ParameterStore& store) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(description);
  for (const auto& e : ordered_entries(store)) {
    mix(e.name);
    mix(shape_str(e.tensor.shape()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& path, const ParameterStore& store, const CheckpointInfo& info) {
  nlohmann::json manifest;
  manifest["format"] = "convdial-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64-le";
  manifest["arch_hash"] = info.arch_hash;
  manifest["seed"] = info.seed;
  auto entries = ordered_entries(store);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries) list.push_back({{"name", e.name}, {"role", e.role}, {"shape", e.tensor.shape()}});
  manifest["tensors"] = list;
  manifest["meta"] = info.meta.is_null() ? nlohmann::json::object() : info.meta;
  const std::string text = manifest.dump();

  std::string out(kMagic, 8);
  put_u64(out, text.size());
  out += text;
  for (const auto& e : entries) {
    for (double v : e.tensor.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint " + path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  const std::string bytes = read_file(path);
  return info_from(parse_header(bytes, path).manifest);
}

CheckpointInfo load_checkpoint(const std::string& path, ParameterStore& store, const std::string& expected_hash) {
  const std::string bytes = read_file(path);
  Parsed parsed = parse_header(bytes, path);
  CheckpointInfo info = info_from(parsed.manifest);
  if (info.arch_hash != expected_hash) {
    throw StateError(path + ": architecture hash " + info.arch_hash + " does not match model " + expected_hash);
  }
  auto entries = ordered_entries(store);
  const auto& list = parsed.manifest.at("tensors");
  if (list.size() != entries.size()) throw StateError(path + ": tensor count mismatch");
  std::size_t offset = parsed.data_offset;
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (list[i].at("name").get<std::string>() != entries[i].name ||
        list[i].at("shape").get<Shape>() != entries[i].tensor.shape()) {
      throw StateError(path + ": tensor " + entries[i].name + " does not match the model");
    }
    auto dst = entries[i].tensor.mutable_values();
    if (offset + dst.size() * 8 > bytes.size()) throw ParseError(path + ": truncated tensor data");
    for (auto& v : dst) {
      v = std::bit_cast<double>(get_u64(raw + offset));
      offset += 8;
    }
  }
  if (offset != bytes.size()) throw ParseError(path + ": trailing bytes after tensor data");
  for (const auto& bn : store.batchnorm_buffers()) bn->initialized = true;
  return info;
}

}  // namespace convdial
