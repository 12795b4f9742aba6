#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mivolo/dataset.hpp"
#include "mivolo/gradcheck.hpp"
#include "mivolo/metrics.hpp"

namespace mivolo {

struct TrainLogEntry {
  std::size_t step = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;        // batch mean of the combined loss
  double age_mae = 0.0;     // years, on the augmented batch
  double gender_acc = 0.0;  // percent, on the augmented batch
};

// Round-trip exact text form of one log line.
std::string format_log_entry(const TrainLogEntry& e);

using StepCallback = std::function<void(const TrainLogEntry&)>;

std::size_t steps_per_epoch(std::size_t samples, const ModelConfig& config);
std::size_t total_steps(std::size_t samples, const ModelConfig& config);

// Sample indices of the batch at 0-based `step`: a seeded permutation per
// epoch, cut into consecutive batches (the last one may be short).
std::vector<std::size_t> batch_indices(std::size_t step, std::size_t samples, const ModelConfig& config);

// Seeded optimization of `model` on `data`. Each sample runs augment, input
// dropout, forward, combined loss / batch size, and backward on its own tape;
// gradients accumulate in the parameters until the optimizer step.
std::vector<TrainLogEntry> train(MiVolo& model, const Dataset& data, const ModelConfig& config,
                                 const StepCallback& on_step = {});

enum class EvalMode { face, body, both };
EvalMode parse_eval_mode(const std::string& name);

struct Evaluation {
  MetricsReport report;
  std::vector<std::size_t> indices;  // evaluated records
  std::vector<double> pred_age;
  std::vector<int> pred_gender;
};

// face: the face crop alone; body: the body crop alone; both: records with
// both crops. Records lacking a required side are skipped and counted.
Evaluation evaluate(const MiVolo& model, const Dataset& data, EvalMode mode);

struct ModelGradCheck {
  std::size_t parameters = 0;  // scalar parameters in the model
  std::size_t checked = 0;     // scalar entries compared
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
};

// Finite-difference check of the combined loss of a fixed random face+body
// pair through the whole model. init_std > 0 replaces config.init_std.
ModelGradCheck model_gradient_check(ModelConfig config, const GradCheckOptions& options,
                                    double init_std = 0.0);

}  // namespace mivolo
