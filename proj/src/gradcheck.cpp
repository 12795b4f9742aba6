#include "mivolo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mivolo {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckEntry> check_gradients(const ParameterList& params,
                                            const std::function<Tensor()>& loss_fn,
                                            const GradCheckOptions& options) {
  std::vector<bool> saved_flags;
  for (const auto& p : params) {
    saved_flags.push_back(p.tensor.requires_grad());
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss_fn());
  }

  std::mt19937_64 rng(options.seed);
  std::vector<GradCheckEntry> entries;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> indices(t.numel());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_entries_per_parameter > 0 && indices.size() > options.max_entries_per_parameter) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_parameter);
      std::sort(indices.begin(), indices.end());
    }

    GradCheckEntry entry{params[pi].name};
    auto values = t.mutable_data();
    for (std::size_t idx : indices) {
      const double original = values[idx];
      values[idx] = original + options.step;
      const double plus = loss_fn().item();
      values[idx] = original - options.step;
      const double minus = loss_fn().item();
      values[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic[idx], numeric, options.denominator_floor);
      if (entry.checked == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = idx;
        entry.worst_analytic = analytic[idx];
        entry.worst_numeric = numeric;
      }
      ++entry.checked;
    }
    entries.push_back(entry);
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    t.set_requires_grad(saved_flags[pi]);
  }
  return entries;
}

double max_relative_error(const std::vector<GradCheckEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

}  // namespace mivolo
