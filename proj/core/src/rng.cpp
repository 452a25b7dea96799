#include "pssl/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace pssl {

ConfigError::ConfigError(std::vector<std::string> keys)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration key(s):";
        for (const auto& k : keys) msg += " " + k;
        return msg;
      }()),
      keys_(std::move(keys)) {}

std::string to_string(Method m) { return m == Method::barlow ? "barlow" : "vicreg"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::deterministic: return "deterministic";
    case Variant::zprob: return "zprob";
    case Variant::hprob: return "hprob";
  }
  return "?";
}

std::string to_string(PriorKind p) { return p == PriorKind::standard_normal ? "standard_normal" : "mog"; }

Method parse_method(const std::string& s) {
  if (s == "barlow") return Method::barlow;
  if (s == "vicreg") return Method::vicreg;
  throw InvalidArgument("unknown method '" + s + "' (expected barlow|vicreg)");
}

Variant parse_variant(const std::string& s) {
  if (s == "deterministic") return Variant::deterministic;
  if (s == "zprob") return Variant::zprob;
  if (s == "hprob") return Variant::hprob;
  throw InvalidArgument("unknown variant '" + s + "' (expected deterministic|zprob|hprob)");
}

PriorKind parse_prior_kind(const std::string& s) {
  if (s == "standard_normal") return PriorKind::standard_normal;
  if (s == "mog") return PriorKind::mog;
  throw InvalidArgument("unknown prior '" + s + "' (expected standard_normal|mog)");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix_seed(h ^ mix_seed(p));
  return h;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  require(n > 0, "Rng::below: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Matrix Rng::uniform_matrix(Index rows, Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
  return m;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(i)]);
  return p;
}

}  // namespace pssl
