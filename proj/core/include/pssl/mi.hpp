#pragma once

// Mutual information estimation with a trained statistic network (MINE),
// using the Donsker-Varadhan lower bound.

#include "pssl/autodiff.hpp"
#include "pssl/data.hpp"
#include "pssl/models.hpp"
#include "pssl/params.hpp"
#include "pssl/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace pssl::mi {

// T(x, y): concat -> fc(width) -> relu -> fc(width) -> relu -> fc(1).
class StatisticNet {
 public:
  StatisticNet(Index x_dim, Index y_dim, int width, std::uint64_t seed);

  Index x_dim() const { return x_dim_; }
  Index y_dim() const { return y_dim_; }
  int width() const { return width_; }
  ParamStore& params() { return params_; }

  // n x 1 scores on the tape.
  ad::Var forward(models::Bound& b, const Matrix& x, const Matrix& y) const;
  Vector evaluate(const Matrix& x, const Matrix& y);

 private:
  Index x_dim_;
  Index y_dim_;
  int width_;
  ParamStore params_;
};

// mean(t_joint) - log(mean(exp(t_marginal))), max-shifted.
double dv_bound(const Vector& t_joint, const Vector& t_marginal);
double dv_bound(StatisticNet& net, const Matrix& x, const Matrix& y, const Matrix& y_marginal);

// Rows of y permuted within the batch.
Matrix shuffle_rows(const Matrix& y, Rng& rng);

// Produces one aligned (x, y) batch of the requested size.
using PairSource = std::function<std::pair<Matrix, Matrix>(Rng& rng, Index batch)>;

struct MineConfig {
  int width = 128;
  int steps = 2000;
  int batch_size = 256;
  double lr = 1e-3;
  double ema_decay = 0.99;
  double tail_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MIEstimate {
  std::string label;
  double value = 0.0;           // nats
  std::vector<double> curve;    // bound on each training batch
  std::size_t window = 0;       // number of tail points averaged
};

// Maximizes the bound; the gradient of the log-denominator uses an EMA of
// mean(exp(T)) over marginal batches.
MIEstimate mine_train(const PairSource& source, Index x_dim, Index y_dim, const MineConfig& config,
                      const std::string& label = "");

// x ~ N(0, I_d), y = rho x + sqrt(1 - rho^2) noise; true MI is -d/2 ln(1 - rho^2).
PairSource gaussian_pairs(double rho, Index dim);
double gaussian_mi(double rho, Index dim);

enum class Pair { v_h, h_hp, h_z, z_zp };

std::string to_string(Pair p);
// Accepts "v:h", "h:h'", "h:z", "z:z'".
Pair parse_pair(const std::string& s);
const std::vector<Pair>& all_pairs();

// Draws batches of training items, builds two views and embeds them in
// evaluation mode. Stochastic spaces contribute one posterior sample.
PairSource probe_pairs(const models::Model& model, ParamStore& params, const Matrix& x, const data::AugmentSpec& aug,
                       Pair pair, bool is_image = false, const ad::ImageShape& shape = {});
std::pair<Index, Index> pair_dims(const models::Model& model, Pair pair);

}  // namespace pssl::mi
