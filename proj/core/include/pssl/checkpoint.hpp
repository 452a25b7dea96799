#pragma once

// Checkpoint files: a JSON manifest listing each tensor's name, shape, dtype
// and byte range, plus a raw little-endian blob. Tensors are stored row-major.

#include "pssl/common.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace pssl::ckpt {

enum class Dtype { f32, f64 };

std::string to_string(Dtype d);
Dtype parse_dtype(const std::string& s);

struct NamedTensor {
  std::string name;
  Matrix value;
  Dtype dtype = Dtype::f32;
};

struct Contents {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

inline constexpr const char* kManifestName = "checkpoint.json";
inline constexpr const char* kBlobName = "checkpoint.bin";

// Writes <dir>/checkpoint.json and <dir>/checkpoint.bin. f32 tensors must
// already hold float-representable values, otherwise IoError is thrown.
void write(const std::filesystem::path& dir, const Contents& contents);
Contents read(const std::filesystem::path& dir);

}  // namespace pssl::ckpt
