#pragma once

// Datasets and two-view augmentation.

#include "pssl/autodiff.hpp"
#include "pssl/common.hpp"
#include "pssl/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pssl::data {

// Class c -> latent center mu_c -> observation A (mu_c + latent noise) + observation noise.
// OOD latents are drawn around a shifted point, away from the class centers.
struct SyntheticSpec {
  int num_classes = 10;
  int latent_dim = 16;
  int observed_dim = 64;
  double center_scale = 1.0;
  double latent_noise = 0.5;
  double observation_noise = 0.1;
  int train_size = 2048;
  int test_size = 1024;
  int ood_size = 1024;
  double ood_shift = 4.0;
  double ood_scale = 1.0;

  // Returns offending keys (empty when valid).
  std::vector<std::string> problems() const;
};

struct Dataset {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  Matrix ood_x;
  int num_classes = 0;
  bool is_image = false;
  ad::ImageShape image;
};

Dataset synth_multiview_dataset(const SyntheticSpec& spec, std::uint64_t seed);

// CIFAR-10 binary records: one label byte followed by 3072 CHW pixel bytes.
// Pixels are scaled to [0, 1]. ood_file may be empty.
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& train_files,
                          const std::filesystem::path& test_file, const std::filesystem::path& ood_file);
// Reads one file of records into (pixels, labels).
std::pair<Matrix, std::vector<int>> read_cifar_records(const std::filesystem::path& file);

struct AugmentSpec {
  // vector data
  double noise_std = 0.1;
  double mask_prob = 0.1;
  double gain = 0.2;  // gain drawn from [1 - gain, 1 + gain]
  // image data
  double crop_min_scale = 0.6;
  double flip_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;

  std::vector<std::string> problems() const;
};

struct ViewPair {
  Matrix v;
  Matrix v_prime;
  std::vector<std::uint64_t> item_seeds;
};

RowVector augment_vector(const RowVector& x, const AugmentSpec& spec, Rng& rng);
RowVector augment_image(const RowVector& x, const ad::ImageShape& shape, const AugmentSpec& spec, Rng& rng);

// Two independent transform draws per row; each row's draws come only from its own seed.
ViewPair make_views(const Matrix& x, const AugmentSpec& spec, std::span<const std::uint64_t> item_seeds,
                    bool is_image = false, const ad::ImageShape& shape = {});
// Convenience form drawing one seed per row from rng.
ViewPair make_views(const Matrix& x, const AugmentSpec& spec, Rng& rng, bool is_image = false,
                    const ad::ImageShape& shape = {});

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows);
std::vector<int> gather(const std::vector<int>& y, std::span<const std::size_t> rows);

// Stratified subset: round(fraction * count) items per class (at least one), seeded.
std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, int num_classes, double fraction,
                                           std::uint64_t seed);

}  // namespace pssl::data
