#pragma once

#include "pssl/params.hpp"

#include <functional>
#include <map>
#include <string>

namespace pssl::optim {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct Moments {
  Matrix m;
  Matrix v;
};

struct AdamState {
  long step = 0;
  std::map<std::string, Moments> moments;
};

// Decoupled-weight-decay Adam: p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p.
// Non-trainable tensors are skipped.
void adamw_step(ParamStore& params, AdamState& state, const AdamConfig& config, double lr);
// Per-tensor learning rate; a rate of 0 leaves that tensor (and its moments) untouched.
void adamw_step(ParamStore& params, AdamState& state, const AdamConfig& config,
                const std::function<double(const std::string&)>& lr_for);

// Linear warmup 0 -> lr_peak over warmup_steps, then cosine decay to lr_final at total_steps.
double cosine_schedule(long step, long total_steps, long warmup_steps, double lr_peak, double lr_final);

}  // namespace pssl::optim
