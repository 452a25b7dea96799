#pragma once

#include "pssl/common.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace pssl {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

// Folds a list of integers into one seed: derive_seed({run_seed, epoch, item}).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// Seeded random stream. Uniform and normal draws are computed here rather than
// through std:: distributions so that sequences agree across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Matrix normal_matrix(Index rows, Index cols);
  Matrix uniform_matrix(Index rows, Index cols, double lo, double hi);
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pssl
