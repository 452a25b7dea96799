#pragma once

#include "pssl/autodiff.hpp"
#include "pssl/models.hpp"
#include "pssl/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace pssl::testing {

// Builds a scalar on a fresh tape from the store.
using ScalarFn = std::function<ad::Var(ad::Tape&, models::Bound&)>;

// Largest per-tensor relative error ||g - g_fd|| / max(||g||, ||g_fd||, floor)
// between reverse-mode and central-difference gradients. The floor also scales
// with the whole-model gradient norm, so tensors whose exact gradient is zero
// (a bias feeding batch norm) are judged against the model's gradient scale
// rather than against their own roundoff.
inline double max_gradient_error(ParamStore& store, const ScalarFn& f, double h = 1e-5,
                                 const std::vector<std::string>& only = {}, double floor = 1e-8,
                                 std::string* worst = nullptr) {
  store.zero_grad();
  {
    ad::Tape tape;
    models::Bound b(tape, store);
    tape.backward(f(tape, b));
  }
  const auto eval = [&]() {
    ad::Tape tape;
    models::Bound b(tape, store);
    return f(tape, b).item();
  };
  double total_sq = 0.0;
  for (const auto& [name, t] : store)
    if (t.trainable) total_sq += t.grad.squaredNorm();
  floor = std::max(floor, 1e-6 * std::sqrt(total_sq));
  double worst_err = 0.0;
  for (auto& [name, t] : store) {
    if (!t.trainable) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Matrix fd(t.value.rows(), t.value.cols());
    for (Index k = 0; k < t.value.size(); ++k) {
      const double saved = t.value(k);
      t.value(k) = saved + h;
      const double up = eval();
      t.value(k) = saved - h;
      const double down = eval();
      t.value(k) = saved;
      fd(k) = (up - down) / (2 * h);
    }
    const double denom = std::max({t.grad.norm(), fd.norm(), floor});
    const double err = (t.grad - fd).norm() / denom;
    if (err > worst_err) {
      worst_err = err;
      if (worst) *worst = name;
    }
  }
  return worst_err;
}

}  // namespace pssl::testing
