#include "mivolo/optimizer.hpp"

#include <cmath>

#include "mivolo/error.hpp"

namespace mivolo {

AdamWParams AdamWParams::from(const ModelConfig& c) {
  return {scaled_base_lr(c), c.weight_decay, c.beta1, c.beta2, c.adam_eps};
}

AdamW::AdamW(ParameterList params, AdamWParams hp) : params_(std::move(params)), hp_(hp) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad())
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in " + p.name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i].tensor;
    if (!w.requires_grad()) continue;
    auto data = w.mutable_data();
    const auto grad = w.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      data[j] *= 1.0 - lr * hp_.weight_decay;
      m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g;
      v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g * g;
      data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + hp_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void AdamW::set_state(std::size_t t, std::vector<std::vector<double>> m,
                      std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw DimensionError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (m[i].size() != params_[i].tensor.numel() || v[i].size() != params_[i].tensor.numel())
      throw DimensionError("optimizer state shape mismatch for " + params_[i].name);
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double scaled_base_lr(const ModelConfig& c) {
  if (c.lr_batch_scaling == "linear")
    return c.learning_rate * static_cast<double>(c.batch_size) / static_cast<double>(c.lr_base_batch);
  return c.learning_rate;
}

std::size_t warmup_horizon(const ModelConfig& c, std::size_t steps_per_epoch) {
  return c.warmup_steps > 0 ? c.warmup_steps : c.warmup_epochs * steps_per_epoch;
}

double warmup_lr(std::size_t step, double start_lr, double base_lr, std::size_t horizon) {
  if (step >= horizon) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(horizon);
  return start_lr + (base_lr - start_lr) * t;
}

double warmup_lr(std::size_t step, const ModelConfig& c, std::size_t steps_per_epoch) {
  return warmup_lr(step, c.warmup_lr, scaled_base_lr(c), warmup_horizon(c, steps_per_epoch));
}

}  // namespace mivolo
