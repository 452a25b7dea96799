#include "pssl/optim.hpp"

#include <cmath>
#include <numbers>

namespace pssl::optim {

void adamw_step(ParamStore& params, AdamState& state, const AdamConfig& config, double lr) {
  adamw_step(params, state, config, [lr](const std::string&) { return lr; });
}

void adamw_step(ParamStore& params, AdamState& state, const AdamConfig& config,
                const std::function<double(const std::string&)>& lr_for) {
  ++state.step;
  const double t = double(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, tensor] : params) {
    if (!tensor.trainable) continue;
    const double lr = lr_for(name);
    if (lr == 0.0) continue;
    require(tensor.grad.rows() == tensor.value.rows() && tensor.grad.cols() == tensor.value.cols(),
            "adamw_step: gradient shape mismatch for '" + name + "'");
    auto [it, inserted] = state.moments.try_emplace(name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Matrix::Zero(tensor.value.rows(), tensor.value.cols());
      mom.v = Matrix::Zero(tensor.value.rows(), tensor.value.cols());
    }
    require(mom.m.rows() == tensor.value.rows() && mom.m.cols() == tensor.value.cols(),
            "adamw_step: optimizer state shape mismatch for '" + name + "'");
    mom.m = config.beta1 * mom.m + (1.0 - config.beta1) * tensor.grad;
    mom.v = config.beta2 * mom.v + (1.0 - config.beta2) * tensor.grad.cwiseProduct(tensor.grad);
    const Matrix m_hat = mom.m / bc1;
    const Matrix v_hat = mom.v / bc2;
    const Matrix update = (m_hat.array() / (v_hat.array().sqrt() + config.eps)).matrix();
    tensor.value = tensor.value - lr * update - lr * config.weight_decay * tensor.value;
  }
}

double cosine_schedule(long step, long total_steps, long warmup_steps, double lr_peak, double lr_final) {
  require(total_steps > 0 && warmup_steps >= 0 && warmup_steps < total_steps,
          "cosine_schedule: need 0 <= warmup_steps < total_steps");
  require(step >= 0 && step <= total_steps, "cosine_schedule: step out of range");
  if (step < warmup_steps) return lr_peak * double(step) / double(warmup_steps);
  const double progress = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return lr_final + 0.5 * (lr_peak - lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace pssl::optim
