#pragma once

#include <string>
#include <vector>

#include "mivolo/config.hpp"
#include "mivolo/nn.hpp"

namespace mivolo {

struct AdamWParams {
  double lr = 1e-5;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamWParams from(const ModelConfig& config);
};

// Decoupled weight decay Adam. Parameters with requires_grad off are skipped.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWParams hp);

  // One update using the current .grad of each parameter (missing grad = 0).
  // Throws NumericalError naming the parameter on a non-finite gradient,
  // before any value is modified.
  void step(double lr);
  void step() { step(hp_.lr); }
  void zero_grad();

  std::size_t steps() const { return t_; }
  const ParameterList& parameters() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }
  // Restores state (checkpoint resume, tests).
  void set_state(std::size_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  ParameterList params_;
  AdamWParams hp_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Base lr after batch-size scaling (linear: lr * batch / lr_base_batch).
double scaled_base_lr(const ModelConfig& config);

// Warmup length in optimizer steps.
std::size_t warmup_horizon(const ModelConfig& config, std::size_t steps_per_epoch);

// Linear ramp from start_lr at step 0 to base_lr at `horizon`, constant after.
double warmup_lr(std::size_t step, double start_lr, double base_lr, std::size_t horizon);
double warmup_lr(std::size_t step, const ModelConfig& config, std::size_t steps_per_epoch);

}  // namespace mivolo
