#include "mivolo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mivolo/error.hpp"
#include "mivolo/losses.hpp"
#include "mivolo/optimizer.hpp"

namespace mivolo {

std::string format_log_entry(const TrainLogEntry& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step %zu lr %.17g loss %.17g age_mae %.17g gender_acc %.17g", e.step,
                e.lr, e.loss, e.age_mae, e.gender_acc);
  return buf;
}

std::size_t steps_per_epoch(std::size_t samples, const ModelConfig& c) {
  return (samples + c.batch_size - 1) / c.batch_size;
}

std::size_t total_steps(std::size_t samples, const ModelConfig& c) {
  return c.steps > 0 ? c.steps : c.epochs * steps_per_epoch(samples, c);
}

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kSampleStream = 2;

}  // namespace

std::vector<std::size_t> batch_indices(std::size_t step, std::size_t samples, const ModelConfig& c) {
  const std::size_t spe = steps_per_epoch(samples, c);
  const std::size_t epoch = step / spe, k = step % spe;
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded(c.seed, epoch, 0, kShuffleStream);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t begin = k * c.batch_size, end = std::min(samples, begin + c.batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<TrainLogEntry> train(MiVolo& model, const Dataset& data, const ModelConfig& config,
                                 const StepCallback& on_step) {
  config.validate();
  if (data.size() == 0) throw InputError("empty training set");
  if (model.config().architecture_hash() != config.architecture_hash() ||
      model.config().single_input != config.single_input)
    throw ConfigError("model does not match the training config");

  const AgeNormalizer norm(config);
  const std::vector<double> ages = data.ages();
  const LdsWeights lds(ages, LdsWeights::params_from(config));

  AdamW opt(model.parameters(), AdamWParams::from(config));
  const std::size_t spe = steps_per_epoch(data.size(), config);
  const std::size_t steps = total_steps(data.size(), config);

  std::vector<TrainLogEntry> log;
  for (std::size_t step = 0; step < steps; ++step) {
    const double lr = warmup_lr(step, config, spe);
    const std::vector<std::size_t> batch = batch_indices(step, data.size(), config);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    opt.zero_grad();

    TrainLogEntry entry;
    entry.step = step + 1;
    entry.lr = lr;
    std::size_t correct = 0;
    for (std::size_t idx : batch) {
      const SampleRecord& rec = data.record(idx);
      auto rng = seeded(config.seed, step, idx, kSampleStream);
      const CropPair pair = data.training_pair(idx, rng);
      ForwardContext ctx{true, &rng, config.drop_rate, config.drop_path_rate};

      Tape tape;
      TapeScope scope(tape);
      const Prediction pred = model.forward_pair(pair, ctx);
      const double target = norm.normalize(rec.age);
      const double weight = lds.weight_for(rec.age);
      const int label = static_cast<int>(rec.gender);
      const Tensor age_loss = weighted_mse(pred.age_tensor(), std::span(&target, 1), std::span(&weight, 1));
      const Tensor g_loss = gender_loss(pred.logits_tensor(), std::span(&label, 1));
      const Tensor loss = scale(combined_loss(age_loss, g_loss, config.w_gender), inv_b);
      check_finite(loss, "training loss at step " + std::to_string(step + 1));
      tape.backward(loss);

      entry.loss += loss.item();
      entry.age_mae += std::abs(norm.denormalize(pred.age_norm()) - rec.age) * inv_b;
      correct += pred.gender() == rec.gender;
    }
    entry.gender_acc = 100.0 * static_cast<double>(correct) * inv_b;
    opt.step(lr);
    log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return log;
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "face") return EvalMode::face;
  if (name == "body") return EvalMode::body;
  if (name == "both") return EvalMode::both;
  throw InputError("eval mode must be face, body or both");
}

Evaluation evaluate(const MiVolo& model, const Dataset& data, EvalMode mode) {
  const ModelConfig& config = model.config();
  const AgeNormalizer norm(config);
  Evaluation out;
  std::vector<double> truth;
  std::vector<int> true_gender;
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SampleRecord& rec = data.record(i);
    const bool usable = mode == EvalMode::face   ? rec.face.has_value()
                        : mode == EvalMode::body ? rec.body.has_value()
                                                 : rec.face && rec.body;
    if (!usable) {
      ++excluded;
      continue;
    }
    CropPair pair = data.clean_pair(i);
    if (mode == EvalMode::face) pair.body.reset();
    if (mode == EvalMode::body) pair.face.reset();
    const Prediction pred = model.forward_pair(pair);
    out.indices.push_back(i);
    out.pred_age.push_back(norm.denormalize(pred.age_norm()));
    out.pred_gender.push_back(static_cast<int>(pred.gender()));
    truth.push_back(rec.age);
    true_gender.push_back(static_cast<int>(rec.gender));
  }
  out.report = make_report(out.pred_age, truth, out.pred_gender, true_gender, excluded, 10.0,
                           config.y_min, config.y_max);
  return out;
}

ModelGradCheck model_gradient_check(ModelConfig config, const GradCheckOptions& options,
                                    double init_std) {
  if (init_std > 0.0) config.init_std = init_std;
  config.drop_rate = 0.0;
  config.drop_path_rate = 0.0;
  MiVolo model(config, options.seed);
  std::mt19937_64 rng(options.seed + 1);
  std::normal_distribution<double> n(0.0, 1.0);
  const Shape shape{3, config.image_size, config.image_size};
  auto random_image = [&] {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = n(rng);
    return Tensor(shape, std::move(v));
  };
  CropPair pair;
  pair.face = random_image();
  if (model.dual_input()) pair.body = random_image();
  const double target = 0.37, weight = 1.3;
  const int label = 1;
  auto loss_fn = [&] {
    const Prediction pred = model.forward_pair(pair);
    return combined_loss(weighted_mse(pred.age_tensor(), std::span(&target, 1), std::span(&weight, 1)),
                         gender_loss(pred.logits_tensor(), std::span(&label, 1)), config.w_gender);
  };
  ModelGradCheck out;
  const ParameterList params = model.parameters();
  for (const auto& p : params) out.parameters += p.tensor.numel();
  out.entries = check_gradients(params, loss_fn, options);
  for (const auto& e : out.entries) out.checked += e.checked;
  out.max_rel_error = max_relative_error(out.entries);
  return out;
}

}  // namespace mivolo
