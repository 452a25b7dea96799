#include "pssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace pssl::data {

std::vector<std::string> SyntheticSpec::problems() const {
  std::vector<std::string> bad;
  if (num_classes < 2) bad.push_back("num_classes");
  if (latent_dim < 1) bad.push_back("latent_dim");
  if (observed_dim < 1) bad.push_back("observed_dim");
  if (!(center_scale >= 0.0)) bad.push_back("center_scale");
  if (!(latent_noise >= 0.0)) bad.push_back("latent_noise");
  if (!(observation_noise >= 0.0)) bad.push_back("observation_noise");
  if (train_size < 2) bad.push_back("train_size");
  if (test_size < 1) bad.push_back("test_size");
  if (ood_size < 0) bad.push_back("ood_size");
  if (!(ood_shift >= 0.0)) bad.push_back("ood_shift");
  if (!(ood_scale >= 0.0)) bad.push_back("ood_scale");
  return bad;
}

Dataset synth_multiview_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto bad = spec.problems();
  if (!bad.empty()) throw ConfigError(bad);

  Rng rng(derive_seed({seed, 0x73796e7468ULL}));
  const Matrix mixing = rng.normal_matrix(spec.observed_dim, spec.latent_dim) / std::sqrt(double(spec.latent_dim));
  const Matrix centers = rng.normal_matrix(spec.num_classes, spec.latent_dim) * spec.center_scale;
  RowVector ood_dir = rng.normal_matrix(1, spec.latent_dim);
  ood_dir /= ood_dir.norm();

  const auto observe = [&](const RowVector& latent) -> RowVector {
    RowVector obs = latent * mixing.transpose();
    for (Index j = 0; j < obs.size(); ++j) obs(j) += spec.observation_noise * rng.normal();
    return obs;
  };
  const auto draw_class = [&](int n, Matrix& x, std::vector<int>& y) {
    x.resize(n, spec.observed_dim);
    y.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));
      RowVector latent = centers.row(c);
      for (Index j = 0; j < latent.size(); ++j) latent(j) += spec.latent_noise * rng.normal();
      x.row(i) = observe(latent);
      y[static_cast<std::size_t>(i)] = c;
    }
  };

  Dataset d;
  d.num_classes = spec.num_classes;
  draw_class(spec.train_size, d.train_x, d.train_y);
  draw_class(spec.test_size, d.test_x, d.test_y);
  d.ood_x.resize(spec.ood_size, spec.observed_dim);
  for (int i = 0; i < spec.ood_size; ++i) {
    RowVector latent = ood_dir * spec.ood_shift * std::max(spec.center_scale, 1.0);
    for (Index j = 0; j < latent.size(); ++j) latent(j) += spec.ood_scale * rng.normal();
    d.ood_x.row(i) = observe(latent);
  }
  return d;
}

std::pair<Matrix, std::vector<int>> read_cifar_records(const std::filesystem::path& file) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = 1 + kPixels;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open image file " + file.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kRecord != 0)
    throw IoError(file.string() + ": size is not a multiple of the 3073-byte record");
  const std::size_t n = bytes.size() / kRecord;
  Matrix x(static_cast<Index>(n), static_cast<Index>(kPixels));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + i * kRecord);
    y[i] = rec[0];
    for (std::size_t p = 0; p < kPixels; ++p) x(static_cast<Index>(i), static_cast<Index>(p)) = rec[1 + p] / 255.0;
  }
  return {std::move(x), std::move(y)};
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& train_files,
                          const std::filesystem::path& test_file, const std::filesystem::path& ood_file) {
  if (train_files.empty()) throw IoError("no training image files given");
  Dataset d;
  d.is_image = true;
  d.image = ad::ImageShape{3, 32, 32};
  std::vector<Matrix> parts;
  for (const auto& f : train_files) {
    auto [x, y] = read_cifar_records(f);
    parts.push_back(std::move(x));
    d.train_y.insert(d.train_y.end(), y.begin(), y.end());
  }
  Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  d.train_x.resize(rows, d.image.size());
  Index at = 0;
  for (const auto& p : parts) {
    d.train_x.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  auto [tx, ty] = read_cifar_records(test_file);
  d.test_x = std::move(tx);
  d.test_y = std::move(ty);
  if (!ood_file.empty()) d.ood_x = read_cifar_records(ood_file).first;
  else d.ood_x.resize(0, d.image.size());
  int max_label = 0;
  for (int v : d.train_y) max_label = std::max(max_label, v);
  for (int v : d.test_y) max_label = std::max(max_label, v);
  d.num_classes = max_label + 1;
  return d;
}

std::vector<std::string> AugmentSpec::problems() const {
  std::vector<std::string> bad;
  if (!(noise_std >= 0.0)) bad.push_back("noise_std");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) bad.push_back("mask_prob");
  if (!(gain >= 0.0 && gain < 1.0)) bad.push_back("gain");
  if (!(crop_min_scale > 0.0 && crop_min_scale <= 1.0)) bad.push_back("crop_min_scale");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) bad.push_back("flip_prob");
  if (!(brightness >= 0.0)) bad.push_back("brightness");
  if (!(contrast >= 0.0 && contrast < 1.0)) bad.push_back("contrast");
  return bad;
}

RowVector augment_vector(const RowVector& x, const AugmentSpec& spec, Rng& rng) {
  const double g = spec.gain > 0.0 ? rng.uniform(1.0 - spec.gain, 1.0 + spec.gain) : 1.0;
  RowVector out = x * g;
  for (Index j = 0; j < out.size(); ++j) {
    if (spec.noise_std > 0.0) out(j) += spec.noise_std * rng.normal();
    if (spec.mask_prob > 0.0 && rng.bernoulli(spec.mask_prob)) out(j) = 0.0;
  }
  return out;
}

RowVector augment_image(const RowVector& x, const ad::ImageShape& shape, const AugmentSpec& spec, Rng& rng) {
  require(x.size() == shape.size(), "augment_image: row width does not match image shape");
  const int h = shape.height;
  const int w = shape.width;
  // Random square-ish crop, resized back with bilinear sampling.
  const double scale = spec.crop_min_scale < 1.0 ? rng.uniform(spec.crop_min_scale, 1.0) : 1.0;
  const double ch = scale * h;
  const double cw = scale * w;
  const double y0 = rng.uniform(0.0, h - ch);
  const double x0 = rng.uniform(0.0, w - cw);
  const bool flip = spec.flip_prob > 0.0 && rng.bernoulli(spec.flip_prob);
  const double bright = spec.brightness > 0.0 ? rng.uniform(-spec.brightness, spec.brightness) : 0.0;
  const double contrast = spec.contrast > 0.0 ? rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast) : 1.0;

  RowVector out(x.size());
  const Index plane = static_cast<Index>(h) * w;
  for (int c = 0; c < shape.channels; ++c) {
    const auto src = [&](int yy, int xx) { return x(c * plane + static_cast<Index>(yy) * w + xx); };
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        const int tx = flip ? w - 1 - ox : ox;
        const double sy = std::clamp(y0 + (oy + 0.5) * ch / h - 0.5, 0.0, double(h - 1));
        const double sx = std::clamp(x0 + (tx + 0.5) * cw / w - 0.5, 0.0, double(w - 1));
        const int iy = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
        const int ix = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
        const double fy = sy - iy;
        const double fx = sx - ix;
        const int iy1 = std::min(iy + 1, h - 1);
        const int ix1 = std::min(ix + 1, w - 1);
        const double v = (1 - fy) * ((1 - fx) * src(iy, ix) + fx * src(iy, ix1)) +
                         fy * ((1 - fx) * src(iy1, ix) + fx * src(iy1, ix1));
        out(c * plane + static_cast<Index>(oy) * w + ox) = v;
      }
  }
  const double mean = out.mean();
  out = ((out.array() - mean) * contrast + mean + bright).matrix();
  return out;
}

ViewPair make_views(const Matrix& x, const AugmentSpec& spec, std::span<const std::uint64_t> item_seeds,
                    bool is_image, const ad::ImageShape& shape) {
  require(static_cast<std::size_t>(x.rows()) == item_seeds.size(), "make_views: one seed per row required");
  ViewPair p;
  p.v.resize(x.rows(), x.cols());
  p.v_prime.resize(x.rows(), x.cols());
  p.item_seeds.assign(item_seeds.begin(), item_seeds.end());
  for (Index i = 0; i < x.rows(); ++i) {
    Rng rng(item_seeds[static_cast<std::size_t>(i)]);
    const RowVector row = x.row(i);
    if (is_image) {
      p.v.row(i) = augment_image(row, shape, spec, rng);
      p.v_prime.row(i) = augment_image(row, shape, spec, rng);
    } else {
      p.v.row(i) = augment_vector(row, spec, rng);
      p.v_prime.row(i) = augment_vector(row, spec, rng);
    }
  }
  return p;
}

ViewPair make_views(const Matrix& x, const AugmentSpec& spec, Rng& rng, bool is_image, const ad::ImageShape& shape) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(x.rows()));
  for (auto& s : seeds) s = rng.next_u64();
  return make_views(x, spec, seeds, is_image, shape);
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < static_cast<std::size_t>(x.rows()), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.row(static_cast<Index>(rows[i]));
  }
  return out;
}

std::vector<int> gather(const std::vector<int>& y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y.at(r));
  return out;
}

std::vector<std::size_t> stratified_subset(const std::vector<int>& labels, int num_classes, double fraction,
                                           std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "stratified_subset: fraction must be in (0, 1]");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, "stratified_subset: label out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  Rng rng(derive_seed({seed, 0x7374726174ULL}));
  std::vector<std::size_t> out;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const auto perm = rng.permutation(members.size());
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * double(members.size()))), 1, members.size());
    for (std::size_t i = 0; i < take; ++i) out.push_back(members[perm[i]]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pssl::data
