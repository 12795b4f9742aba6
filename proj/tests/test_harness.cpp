#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "mivolo/checkpoint.hpp"
#include "mivolo/error.hpp"
#include "mivolo/optimizer.hpp"
#include "mivolo/synth.hpp"
#include "mivolo/trainer.hpp"

using namespace mivolo;
namespace fs = std::filesystem;

namespace {

ModelConfig micro() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.outlooker_blocks = 1;
  c.transformer_blocks = 1;
  c.transformer_heads = 2;
  c.head_hidden = 8;
  c.fusion_heads = 2;
  c.mlp_ratio = 2.0;
  c.batch_size = 4;
  c.steps = 6;
  c.warmup_steps = 2;
  c.learning_rate = 1e-3;
  c.lr_batch_scaling = "none";
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("mivolo_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Dataset synth_dataset(const TempDir& dir, std::size_t n, const ModelConfig& c) {
  SynthOptions o;
  o.n = n;
  write_synthetic_set(dir.path().string(), o);
  return Dataset(read_sample_manifest(dir / "manifest.jsonl", c), c);
}

bool same_values(const ParameterList& a, const ParameterList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name) return false;
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("MIVOLO_CLI");
  if (!cli) return -1;
  const int status = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(AdamW, HandComputedScalarStep) {
  Tensor w({1}, {0.5});
  w.set_requires_grad(true);
  AdamW opt({{"w", w}}, {0.1, 0.01, 0.9, 0.999, 1e-8});
  opt.set_state(2, {{0.05}}, {{0.002}});
  w.mutable_grad()[0] = 0.3;
  opt.step(0.1);
  // Reference: decay, moments, bias correction at t = 3.
  const double theta = 0.5 * (1.0 - 0.1 * 0.01);
  const double m = 0.9 * 0.05 + 0.1 * 0.3, v = 0.999 * 0.002 + 0.001 * 0.09;
  const double mh = m / (1.0 - std::pow(0.9, 3)), vh = v / (1.0 - std::pow(0.999, 3));
  EXPECT_NEAR(w[0], theta - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
  EXPECT_NEAR(opt.first_moment(0)[0], m, 1e-15);
  EXPECT_NEAR(opt.second_moment(0)[0], v, 1e-15);
  EXPECT_EQ(opt.steps(), 3u);
}

TEST(AdamW, ZeroGradientNoDecayIsNoOp) {
  Tensor w({3}, {1.0, -2.0, 0.25});
  w.set_requires_grad(true);
  AdamW opt({{"w", w}}, {0.01, 0.0});
  w.mutable_grad();
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], -2.0);
  EXPECT_EQ(w[2], 0.25);
}

TEST(AdamW, DecayOnlyShrinksByLrTimesWd) {
  Tensor w({2}, {3.0, -1.0});
  w.set_requires_grad(true);
  AdamW opt({{"w", w}}, {0.1, 0.5});
  opt.step();
  EXPECT_NEAR(w[0], 3.0 - 0.1 * 0.5 * 3.0, 1e-15);
  EXPECT_NEAR(w[1], -1.0 + 0.1 * 0.5 * 1.0, 1e-15);
}

TEST(AdamW, NonFiniteGradientAbortsBeforeUpdate) {
  Tensor a({1}, {1.0}), b({1}, {2.0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  AdamW opt({{"a", a}, {"b", b}}, {0.1, 0.0});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::nan("");
  try {
    opt.step();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(AdamW, FrozenParametersUntouched) {
  Tensor a({1}, {1.0});
  AdamW opt({{"a", a}}, {0.1, 0.5});
  opt.step();
  EXPECT_EQ(a[0], 1.0);
}

TEST(Warmup, RampAndScaling) {
  EXPECT_EQ(warmup_lr(0, 1e-6, 1e-5, 10), 1e-6);
  EXPECT_EQ(warmup_lr(10, 1e-6, 1e-5, 10), 1e-5);
  EXPECT_EQ(warmup_lr(500, 1e-6, 1e-5, 10), 1e-5);
  EXPECT_NEAR(warmup_lr(5, 1e-6, 1e-5, 10), 0.5 * (1e-6 + 1e-5), 1e-12);
  ModelConfig c;
  EXPECT_EQ(c.warmup_lr, 1e-6);
  EXPECT_EQ(warmup_lr(0, c, 8), 1e-6);
  c.batch_size = 384;
  EXPECT_NEAR(scaled_base_lr(c), 2e-5, 1e-20);
  EXPECT_EQ(warmup_horizon(c, 8), 25u * 8u);
  c.warmup_steps = 7;
  EXPECT_EQ(warmup_horizon(c, 8), 7u);
  EXPECT_EQ(warmup_lr(7, c, 8), scaled_base_lr(c));
  c.lr_batch_scaling = "none";
  EXPECT_EQ(scaled_base_lr(c), 1e-5);
}

TEST(Config, JsonRoundTripAndHash) {
  ModelConfig c = micro();
  c.pixel_mean = {0.1, 0.2, 0.3};
  c.seed = 123456789012345ULL;
  c.face_drop_prob = 0.123456789012345678;
  const ModelConfig r = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(r.to_json(), c.to_json());
  EXPECT_EQ(r.hash(), c.hash());
  EXPECT_EQ(r.face_drop_prob, c.face_drop_prob);
  EXPECT_EQ(ModelConfig::from_json(c.to_json_line()).hash(), c.hash());
  ModelConfig d = c;
  d.w_gender = 0.04;
  EXPECT_NE(d.hash(), c.hash());
  EXPECT_EQ(d.architecture_hash(), c.architecture_hash());
  d.embed_dim = 16;
  EXPECT_NE(d.architecture_hash(), c.architecture_hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ModelConfig::from_json(R"({"image_size": 64, "colour": 3})"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("[1, 2]"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("{"), ConfigError);
  EXPECT_NO_THROW(ModelConfig::from_json(R"({"w_gender": 0.05})").validate());
  ModelConfig c;
  c.face_drop_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig();
  c.body_drop_prob = 0.6;
  c.face_drop_prob = 0.6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig();
  c.rand_augment = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig();
  c.image_size = 60;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig::tiny().validate());
  EXPECT_NO_THROW(ModelConfig::d1().validate());
  EXPECT_NO_THROW(micro().validate());
}

TEST(Augment, ZeroedConfigIsIdentity) {
  ModelConfig c;
  c.jitter_shift = c.jitter_scale = c.flip_prob = c.erase_prob = 0.0;
  std::mt19937_64 rng(1);
  Image src(60, 40);
  std::uniform_real_distribution<double> u;
  for (auto& v : src.data) v = u(rng);
  const BBox face{5, 5, 25, 20}, body{0, 10, 50, 40};
  for (int t = 0; t < 20; ++t) {
    const RawPair p = augment(src, face, body, rng, c);
    EXPECT_EQ(p.face->data, crop(src, face).data);
    EXPECT_EQ(p.body->data, crop(src, body).data);
  }
}

TEST(Augment, SeededDeterminismAndSharedPlan) {
  ModelConfig c;
  c.flip_prob = 1.0;
  c.erase_prob = 1.0;
  Image src(60, 40, 0.7);
  for (int x = 0; x < 60; ++x) src.at(0, 3, x) = x / 60.0;
  std::mt19937_64 a(9), b(9);
  const RawPair p = augment(src, BBox{5, 0, 25, 20}, BBox{0, 10, 50, 40}, a, c);
  const RawPair q = augment(src, BBox{5, 0, 25, 20}, BBox{0, 10, 50, 40}, b, c);
  EXPECT_EQ(p.face->data, q.face->data);
  EXPECT_EQ(p.body->data, q.body->data);

  std::mt19937_64 rng(3);
  const AugmentPlan plan = draw_plan(rng, c);
  ASSERT_TRUE(plan.flip && plan.erase);
  const double area = plan.erase->w * plan.erase->h;
  EXPECT_GE(area, c.erase_area_min - 1e-12);
  EXPECT_LE(area, c.erase_area_max + 1e-12);
}

TEST(Augment, JitterStaysInsideImage) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> side(2, 300);
  for (int t = 0; t < 1000; ++t) {
    const int w = side(rng), h = side(rng);
    std::uniform_int_distribution<int> x(0, w - 1), y(0, h - 1);
    int x0 = x(rng), x1 = x(rng), y0 = y(rng), y1 = y(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const BBox box{x0, y0, x1 + 1, y1 + 1};
    const BBox j = jitter_box(box, w, h, 0.45, 0.45, rng);
    ASSERT_TRUE(j.valid());
    ASSERT_GE(j.x0, 0);
    ASSERT_GE(j.y0, 0);
    ASSERT_LE(j.x1, w);
    ASSERT_LE(j.y1, h);
  }
}

TEST(InputDropout, FrequenciesMatchConfig) {
  const ModelConfig c;
  std::mt19937_64 rng(5);
  int face = 0, body = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const DropChoice d = draw_input_dropout(true, true, rng, c);
    face += d == DropChoice::face;
    body += d == DropChoice::body;
  }
  EXPECT_NEAR(static_cast<double>(body) / trials, 0.1, 0.01);
  EXPECT_NEAR(static_cast<double>(face) / trials, 0.5, 0.01);
}

TEST(InputDropout, SingleSidedPairsAndZeroProbabilities) {
  ModelConfig c;
  std::mt19937_64 rng(6);
  const Tensor img = Tensor::full({3, 4, 4}, 0.5);
  for (int t = 0; t < 1000; ++t) {
    const CropPair f = input_dropout({img, std::nullopt}, rng, c);
    EXPECT_TRUE(f.face_present());
    EXPECT_EQ(draw_input_dropout(false, true, rng, c), DropChoice::none);
    const CropPair both = input_dropout({img, img}, rng, c);
    EXPECT_TRUE(both.face_present() || both.body_present());
  }
  c.body_drop_prob = c.face_drop_prob = 0.0;
  for (int t = 0; t < 1000; ++t) EXPECT_EQ(draw_input_dropout(true, true, rng, c), DropChoice::none);
}

TEST(Dataset, ManifestRoundTripAndValidation) {
  TempDir dir("dataset");
  const ModelConfig c = micro();
  const Dataset data = synth_dataset(dir, 6, c);
  ASSERT_EQ(data.size(), 6u);
  const CropPair p = data.clean_pair(0);
  ASSERT_TRUE(p.face && p.body);
  EXPECT_EQ(p.face->shape(), (Shape{3, 16, 16}));
  write_sample_manifest(dir / "copy.jsonl", data.records());
  const auto again = read_sample_manifest(dir / "copy.jsonl", c);
  ASSERT_EQ(again.size(), 6u);
  EXPECT_EQ(again[3].age, data.record(3).age);
  EXPECT_EQ(again[3].body, data.record(3).body);

  std::ofstream(dir / "bad.jsonl") << R"({"image": "img_00000.ppm", "face_bbox": null, "body_bbox": null, "age": 5, "gender": "male"})" << '\n';
  EXPECT_THROW(read_sample_manifest(dir / "bad.jsonl", c), InputError);
  std::ofstream(dir / "old.jsonl") << R"({"image": "img_00000.ppm", "face_bbox": [0,0,8,8], "body_bbox": null, "age": 500, "gender": "male"})" << '\n';
  EXPECT_THROW(read_sample_manifest(dir / "old.jsonl", c), InputError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  const ModelConfig c = micro();
  const Dataset data = synth_dataset(dir, 8, c);
  MiVolo model(c, 11);
  train(model, data, c);
  save_checkpoint(dir / "m.ckpt", model);
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_TRUE(same_values(model.parameters(), loaded->parameters()));
  EXPECT_EQ(loaded->config().hash(), c.hash());
  const Evaluation a = evaluate(model, data, EvalMode::both), b = evaluate(*loaded, data, EvalMode::both);
  EXPECT_EQ(a.pred_age, b.pred_age);
  EXPECT_EQ(a.report.to_text(), b.report.to_text());

  // A tampered config line fails the hash check.
  std::ifstream in(dir / "m.ckpt");
  std::stringstream text;
  text << in.rdbuf();
  std::string s = text.str();
  const auto pos = s.find("\"w_gender\":0.03");
  ASSERT_NE(pos, std::string::npos);
  s.replace(pos, 15, "\"w_gender\":0.05");
  std::ofstream(dir / "bad.ckpt") << s;
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), InputError);
}

TEST(Training, SeededRunIsReproducible) {
  TempDir dir("train");
  ModelConfig c = micro();
  const Dataset data = synth_dataset(dir, 8, c);
  MiVolo a(c, 3), b(c, 3);
  const auto la = train(a, data, c), lb = train(b, data, c);
  ASSERT_EQ(la.size(), 6u);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(format_log_entry(la[i]), format_log_entry(lb[i]));
  EXPECT_TRUE(same_values(a.parameters(), b.parameters()));
  EXPECT_EQ(la[0].lr, c.warmup_lr);
  EXPECT_EQ(la[2].lr, c.learning_rate);
}

TEST(Training, BatchesCoverEachEpochOnce) {
  ModelConfig c = micro();
  c.batch_size = 3;
  std::vector<int> seen(10, 0);
  for (std::size_t s = 0; s < steps_per_epoch(10, c); ++s)
    for (std::size_t i : batch_indices(s, 10, c)) ++seen[i];
  for (int v : seen) EXPECT_EQ(v, 1);
  EXPECT_EQ(batch_indices(4, 10, c).size(), 3u);
  EXPECT_EQ(batch_indices(3, 10, c).size(), 1u);
}

TEST(Training, InitFromSingleInputAndFreezing) {
  TempDir dir("init");
  ModelConfig single = micro();
  single.single_input = true;
  const Dataset data = synth_dataset(dir, 8, single);
  MiVolo face_model(single, 5);
  train(face_model, data, single);
  save_checkpoint(dir / "face.ckpt", face_model);

  const ModelConfig dual = micro();
  auto m1 = init_from_single_input(dir / "face.ckpt", dual, 100);
  auto m2 = init_from_single_input(dir / "face.ckpt", dual, 200);
  EXPECT_TRUE(m1->config().freeze_face_embed);
  ParameterList face, body, enh1, enh2;
  m1->face_embed.collect("", face);
  m1->body_embed.collect("", body);
  EXPECT_TRUE(same_values(face, body));
  m1->enhancer.collect("", enh1);
  m2->enhancer.collect("", enh2);
  EXPECT_FALSE(same_values(enh1, enh2));
  ParameterList trunk_src, trunk_dst;
  face_model.trunk.collect("", trunk_src);
  m1->trunk.collect("", trunk_dst);
  EXPECT_TRUE(same_values(trunk_src, trunk_dst));

  // Frozen face embedding: no gradient, no change; the body copy trains.
  ParameterList face_before;
  for (const auto& p : face) face_before.push_back({p.name, p.tensor.clone()});
  const Tensor body_w = m1->body_embed.proj.weight.clone();
  train(*m1, data, m1->config());
  for (const auto& p : face) {
    EXPECT_FALSE(p.tensor.requires_grad());
    for (double g : p.tensor.grad()) EXPECT_EQ(g, 0.0);
  }
  EXPECT_TRUE(same_values(face, face_before));
  EXPECT_FALSE(std::equal(body_w.data().begin(), body_w.data().end(), m1->body_embed.proj.weight.data().begin()));

  ModelConfig wider = micro();
  wider.embed_dim = 16;
  EXPECT_THROW(init_from_single_input(dir / "face.ckpt", wider, 1), ConfigError);
  MiVolo not_single(dual, 1);
  EXPECT_THROW(init_from_single_input(not_single, dual, 1), ConfigError);
}

TEST(Evaluation, ModesSkipAndCountMissingSides) {
  TempDir dir("eval");
  const ModelConfig c = micro();
  const Dataset full = synth_dataset(dir, 6, c);
  std::vector<SampleRecord> recs = full.records();
  recs[1].body.reset();
  recs[4].face.reset();
  const Dataset data(recs, c);
  MiVolo model(c, 1);
  const Evaluation body = evaluate(model, data, EvalMode::body);
  EXPECT_EQ(body.report.evaluated, 5u);
  EXPECT_EQ(body.report.excluded, 1u);
  EXPECT_EQ(std::count(body.indices.begin(), body.indices.end(), 1u), 0);
  const Evaluation both = evaluate(model, data, EvalMode::both);
  EXPECT_EQ(both.report.evaluated, 4u);
  EXPECT_EQ(both.report.excluded, 2u);
  EXPECT_EQ(evaluate(model, data, EvalMode::face).report.excluded, 1u);
  EXPECT_THROW(parse_eval_mode("torso"), InputError);
}

TEST(Cli, ExitCodes) {
  if (!std::getenv("MIVOLO_CLI")) GTEST_SKIP() << "MIVOLO_CLI not set";
  TempDir dir("cli");
  EXPECT_EQ(run_cli("synth --n 4 --out " + dir / "data"), 0);
  EXPECT_TRUE(fs::exists(dir / "data/manifest.jsonl"));
  EXPECT_EQ(run_cli("pair --detections " + dir / "data/detections.jsonl" + " --out " + dir / "pairs.jsonl"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("eval --manifest " + dir / "missing.jsonl" + " --checkpoint x"), 1);
  EXPECT_EQ(run_cli("aggregate --votes " + dir / "none.jsonl" + " --controls x --method mean --out y"), 1);

  ModelConfig c = micro();
  c.save(dir / "cfg.json");
  EXPECT_EQ(run_cli("train --manifest " + dir / "data/manifest.jsonl" + " --config " + dir / "cfg.json" +
                    " --out " + dir / "m.ckpt"),
            0);
  EXPECT_EQ(run_cli("eval --manifest " + dir / "data/manifest.jsonl" + " --checkpoint " + dir / "m.ckpt" +
                    " --mode body --out " + dir / "report.txt"),
            0);
  std::ifstream report(dir / "report.txt");
  std::string first;
  std::getline(report, first);
  EXPECT_EQ(first, "mode body");

  c.learning_rate = 1e300;
  c.lr_batch_scaling = "none";
  c.warmup_steps = 1;
  c.save(dir / "blowup.json");
  EXPECT_EQ(run_cli("train --manifest " + dir / "data/manifest.jsonl" + " --config " + dir / "blowup.json" +
                    " --out " + dir / "x.ckpt"),
            2);
  std::ofstream(dir / "extra.json") << R"({"image_size": 16, "mystery": 1})";
  EXPECT_EQ(run_cli("gradcheck --config " + dir / "extra.json"), 1);
}
