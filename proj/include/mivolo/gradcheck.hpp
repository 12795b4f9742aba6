#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mivolo/nn.hpp"

namespace mivolo {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double denominator_floor = 1e-8;
  // 0 checks every element; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 0;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Compares reverse-mode gradients of `loss_fn` against central finite
// differences for every parameter in `params`. `loss_fn` must be deterministic
// and build its graph from the given parameter tensors.
std::vector<GradCheckEntry> check_gradients(const ParameterList& params,
                                            const std::function<Tensor()>& loss_fn,
                                            const GradCheckOptions& options = {});

double max_relative_error(const std::vector<GradCheckEntry>& entries);

}  // namespace mivolo
