#include "pssl/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

namespace pssl::ckpt {

namespace fs = std::filesystem;

std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw IoError("checkpoint: unknown dtype '" + s + "'");
}

const NamedTensor& Contents::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw IoError("checkpoint: missing tensor '" + name + "'");
}

bool Contents::contains(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

namespace {

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t element_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

}  // namespace

void write(const fs::path& dir, const Contents& contents) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("checkpoint: cannot create " + dir.string() + ": " + ec.message());

  std::string blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& t : contents.tensors) {
    const std::size_t offset = blob.size();
    for (Index i = 0; i < t.value.rows(); ++i)
      for (Index j = 0; j < t.value.cols(); ++j) {
        const double v = t.value(i, j);
        if (t.dtype == Dtype::f32) {
          const float f = static_cast<float>(v);
          if (static_cast<double>(f) != v && !(std::isnan(v) && std::isnan(f)))
            throw IoError("checkpoint: tensor '" + t.name + "' is not float32-representable");
          put_le(blob, std::bit_cast<std::uint32_t>(f));
        } else {
          put_le(blob, std::bit_cast<std::uint64_t>(v));
        }
      }
    entries.push_back({{"name", t.name},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"dtype", to_string(t.dtype)},
                       {"offset", offset},
                       {"nbytes", blob.size() - offset}});
  }

  nlohmann::json manifest = {{"format", "pssl-checkpoint"},
                             {"version", 1},
                             {"byte_order", "little"},
                             {"layout", "row_major"},
                             {"blob", kBlobName},
                             {"blob_bytes", blob.size()},
                             {"tensors", entries},
                             {"meta", contents.meta}};

  const auto write_file = [](const fs::path& p, const std::string& data) {
    const fs::path tmp = p.string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("checkpoint: cannot open " + tmp.string());
      f.write(data.data(), static_cast<std::streamsize>(data.size()));
      if (!f) throw IoError("checkpoint: write failed for " + tmp.string());
    }
    std::error_code rename_ec;
    fs::rename(tmp, p, rename_ec);
    if (rename_ec) throw IoError("checkpoint: cannot rename " + tmp.string() + ": " + rename_ec.message());
  };
  write_file(dir / kBlobName, blob);
  write_file(dir / kManifestName, manifest.dump(2) + "\n");
}

Contents read(const fs::path& dir) {
  std::ifstream mf(dir / kManifestName);
  if (!mf) throw IoError("checkpoint: cannot open " + (dir / kManifestName).string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "pssl-checkpoint" || manifest.value("version", 0) != 1)
    throw IoError("checkpoint: unsupported manifest format/version");

  const fs::path blob_path = dir / manifest.value("blob", std::string(kBlobName));
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError("checkpoint: cannot open " + blob_path.string());
  const std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  if (blob.size() != manifest.value("blob_bytes", std::size_t{0}))
    throw IoError("checkpoint: blob size does not match manifest");

  Contents out;
  out.meta = manifest.value("meta", nlohmann::json::object());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (const auto& e : manifest.at("tensors")) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    t.dtype = parse_dtype(e.at("dtype").get<std::string>());
    const Index rows = e.at("shape").at(0).get<Index>();
    const Index cols = e.at("shape").at(1).get<Index>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
    const std::size_t es = element_size(t.dtype);
    if (rows < 0 || cols < 0 || nbytes != static_cast<std::size_t>(rows * cols) * es || offset + nbytes > blob.size())
      throw IoError("checkpoint: inconsistent entry for '" + t.name + "'");
    t.value.resize(rows, cols);
    const unsigned char* p = bytes + offset;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j, p += es) {
        t.value(i, j) = t.dtype == Dtype::f32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)))
                                              : std::bit_cast<double>(get_le<std::uint64_t>(p));
      }
    out.tensors.push_back(std::move(t));
  }
  return out;
}

}  // namespace pssl::ckpt
