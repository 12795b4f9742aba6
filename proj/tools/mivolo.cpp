#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mivolo/checkpoint.hpp"
#include "mivolo/error.hpp"
#include "mivolo/preprocess.hpp"
#include "mivolo/synth.hpp"
#include "mivolo/trainer.hpp"
#include "mivolo/votes.hpp"

namespace fs = std::filesystem;
using namespace mivolo;

namespace {

ModelConfig config_or_default(const std::string& path) {
  ModelConfig c = path.empty() ? ModelConfig::tiny() : ModelConfig::load(path);
  c.validate();
  return c;
}

int cmd_train(const std::string& manifest, const std::string& config_path, const std::string& out,
              const std::string& init, const std::string& log_path) {
  const ModelConfig config = config_or_default(config_path);
  Dataset data(read_sample_manifest(manifest, config), config);
  std::unique_ptr<MiVolo> model = init.empty() ? std::make_unique<MiVolo>(config, config.seed)
                                               : init_from_single_input(init, config, config.seed);
  const ModelConfig& used = model->config();
  std::ofstream log(log_path.empty() ? out + ".log" : log_path);
  if (!log) throw InputError("cannot write training log");
  const auto start = std::chrono::steady_clock::now();
  train(*model, data, used, [&](const TrainLogEntry& e) {
    log << format_log_entry(e) << '\n';
    if (e.step % 50 == 0 || e.step == 1) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "step %zu loss %.6f age_mae %.3f gender_acc %.1f (%.0fs)\n", e.step, e.loss,
                   e.age_mae, e.gender_acc, s);
    }
  });
  save_checkpoint(out, *model);
  const Evaluation ev = evaluate(*model, data, EvalMode::both);
  std::cout << "train-set evaluation (both)\n" << ev.report.to_text();
  return 0;
}

int cmd_eval(const std::string& manifest, const std::string& checkpoint, const std::string& mode,
             const std::string& out) {
  const EvalMode m = parse_eval_mode(mode);
  const auto model = load_checkpoint(checkpoint);
  Dataset data(read_sample_manifest(manifest, model->config()), model->config());
  const Evaluation ev = evaluate(*model, data, m);
  const std::string text = "mode " + mode + "\n" + ev.report.to_text();
  std::cout << text;
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw InputError("cannot write " + out);
    f << text;
  }
  return 0;
}

int cmd_pair(const std::string& detections, const std::string& out, const std::string& config_path,
             const std::string& crops_dir) {
  const ModelConfig config = config_or_default(config_path);
  const fs::path base = fs::path(detections).parent_path();
  std::vector<PairRecord> all;
  for (const auto& rec : read_detection_manifest(detections)) {
    const fs::path image = fs::path(rec.image).is_relative() ? base / rec.image : fs::path(rec.image);
    std::vector<PairRecord> pairs = make_pairs(load_ppm(image.string()), rec.detections, config, rec.image);
    for (auto& p : pairs) all.push_back(std::move(p));
  }
  write_pair_manifest(out, all);
  if (!crops_dir.empty()) {
    fs::create_directories(crops_dir);
    for (std::size_t i = 0; i < all.size(); ++i) {
      char name[32];
      if (all[i].face_crop) {
        std::snprintf(name, sizeof name, "pair_%05zu_face.ppm", i);
        save_ppm((fs::path(crops_dir) / name).string(), all[i].face_crop->image);
      }
      if (all[i].body_crop) {
        std::snprintf(name, sizeof name, "pair_%05zu_body.ppm", i);
        save_ppm((fs::path(crops_dir) / name).string(), all[i].body_crop->image);
      }
    }
  }
  std::cout << "pairs " << all.size() << '\n';
  return 0;
}

int cmd_aggregate(const std::string& votes, const std::string& controls, const std::string& method,
                  const std::string& out, const std::string& users_out) {
  const AggregationMethod m = parse_method(method);
  const std::vector<UserStat> users = score_users(read_controls(controls));
  const std::vector<TaskResult> results = aggregate_tasks(read_votes(votes), users, m);
  write_task_results(out, results);
  write_user_report(users_out.empty() ? out + ".users.jsonl" : users_out, users);
  std::size_t rejected = 0;
  for (const auto& r : results) rejected += !r.gender;
  std::cout << "tasks " << results.size() << " gender_rejected " << rejected << " users " << users.size()
            << '\n';
  return 0;
}

int cmd_synth(std::size_t n, const std::string& out, const std::string& mode, std::uint64_t seed) {
  SynthOptions o;
  o.n = n;
  o.mode = parse_synth_mode(mode);
  o.seed = seed;
  write_synthetic_set(out, o);
  std::cout << "wrote " << n << " samples to " << out << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& config_path, std::size_t entries, double init_std,
                  double tolerance) {
  const ModelConfig config = config_or_default(config_path);
  GradCheckOptions opts;
  opts.max_entries_per_parameter = entries;
  opts.seed = config.seed;
  const ModelGradCheck r = model_gradient_check(config, opts, init_std);
  for (const auto& e : r.entries)
    std::printf("%-48s checked %6zu max_rel_err %.3e (analytic %.6e numeric %.6e)\n", e.name.c_str(),
                e.checked, e.max_rel_error, e.worst_analytic, e.worst_numeric);
  std::printf("parameters %zu checked %zu max_rel_err %.3e\n", r.parameters, r.checked, r.max_rel_error);
  if (!(r.max_rel_error < tolerance))
    throw NumericalError("gradient check failed: max relative error above tolerance");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face and body age/gender estimation toolkit"};
  app.require_subcommand(1);

  std::string manifest, config, out, init, log, checkpoint, mode = "both", detections, crops_dir;
  std::string votes, controls, method, users_out, synth_mode = "joint";
  std::size_t n = 64, entries = 0;
  std::uint64_t seed = 0;
  double init_std = 0.0, tolerance = 1e-4;

  auto* train = app.add_subcommand("train", "train a model on a sample manifest");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--config", config);
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--init", init, "single-input checkpoint to start from");
  train->add_option("--log", log, "training log (default <out>.log)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--mode", mode)->check(CLI::IsMember({"face", "body", "both"}));
  eval->add_option("--out", out, "also write the report here");

  auto* pair = app.add_subcommand("pair", "pair faces with persons and clean the crops");
  pair->add_option("--detections", detections)->required();
  pair->add_option("--out", out)->required();
  pair->add_option("--config", config);
  pair->add_option("--crops-dir", crops_dir);

  auto* aggregate = app.add_subcommand("aggregate", "aggregate crowd votes");
  aggregate->add_option("--votes", votes)->required();
  aggregate->add_option("--controls", controls)->required();
  aggregate->add_option("--method", method)->required();
  aggregate->add_option("--out", out)->required();
  aggregate->add_option("--users-out", users_out);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--n", n)->required();
  synth->add_option("--out", out)->required();
  synth->add_option("--mode", synth_mode)->check(CLI::IsMember({"joint", "split"}));
  synth->add_option("--seed", seed);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--config", config);
  gradcheck->add_option("--entries", entries, "entries per parameter tensor (0 = all)");
  gradcheck->add_option("--init-std", init_std, "override the init std for the check");
  gradcheck->add_option("--tolerance", tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(manifest, config, out, init, log);
    if (*eval) return cmd_eval(manifest, checkpoint, mode, out);
    if (*pair) return cmd_pair(detections, out, config, crops_dir);
    if (*aggregate) return cmd_aggregate(votes, controls, method, out, users_out);
    if (*synth) return cmd_synth(n, out, synth_mode, seed);
    if (*gradcheck) return cmd_gradcheck(config, entries, init_std, tolerance);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
