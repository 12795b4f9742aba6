#include "mivolo/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include "mivolo/error.hpp"

namespace mivolo {

namespace fs = std::filesystem;

SynthMode parse_synth_mode(const std::string& name) {
  if (name == "joint") return SynthMode::joint;
  if (name == "split") return SynthMode::split;
  throw InputError("synth mode must be joint or split");
}

namespace {

void paint(Image& img, const BBox& box, double level, Gender g, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, noise);
  const double tint = g == Gender::male ? 0.15 : -0.15;
  const std::array<double, 3> base{level + tint, level, level - tint};
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(base[c] + n(rng), 0.0, 1.0);
}

}  // namespace

SynthSample synth_sample(std::size_t index, const SynthOptions& o) {
  std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(o.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, o.noise);

  SynthSample s;
  s.image = Image(o.width, o.height);
  for (double& v : s.image.data) v = std::clamp(0.5 + n(rng), 0.0, 1.0);

  double f, b, age;
  if (o.mode == SynthMode::joint) {
    age = 2.0 + 96.0 * u(rng);
    f = b = age / 100.0;
  } else {
    f = u(rng);
    b = u(rng);
    age = 50.0 * (f + b);
  }
  const Gender g = u(rng) < 0.5 ? Gender::male : Gender::female;

  const int fs_side = o.width * 3 / 8;
  const int fx = o.width / 4 + static_cast<int>(u(rng) * (o.width / 8));
  const int fy = 2 + static_cast<int>(u(rng) * 6);
  const BBox face{fx, fy, fx + fs_side, fy + fs_side};
  const int tx = o.width / 8 + static_cast<int>(u(rng) * (o.width / 16));
  const int tw = o.width * 5 / 8 + static_cast<int>(u(rng) * (o.width / 8));
  const int th = std::min(o.height - face.y1 - 2, o.height / 2 + static_cast<int>(u(rng) * (o.height / 8)));
  const BBox torso{tx, face.y1, std::min(o.width, tx + tw), face.y1 + th};

  paint(s.image, face, 0.15 + 0.7 * f, g, o.noise, rng);
  paint(s.image, torso, 0.15 + 0.7 * b, g, o.noise, rng);

  char name[32];
  std::snprintf(name, sizeof name, "img_%05zu.ppm", index);
  s.record = {name, face, torso, age, g};
  const BBox figure{std::min(face.x0, torso.x0), face.y0, std::max(face.x1, torso.x1), torso.y1};
  s.detections = {{face, ObjectKind::face, 0.99}, {figure, ObjectKind::person, 0.98}};
  return s;
}

std::vector<SampleRecord> write_synthetic_set(const std::string& out_dir, const SynthOptions& o) {
  if (o.n == 0) throw InputError("synth needs n > 0");
  fs::create_directories(out_dir);
  std::vector<SampleRecord> records;
  std::vector<DetectionRecord> detections;
  for (std::size_t i = 0; i < o.n; ++i) {
    SynthSample s = synth_sample(i, o);
    save_ppm((fs::path(out_dir) / s.record.image).string(), s.image);
    detections.push_back({s.record.image, s.detections});
    records.push_back(s.record);
  }
  write_sample_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
  write_detection_manifest((fs::path(out_dir) / "detections.jsonl").string(), detections);
  for (auto& r : records) r.image = (fs::path(out_dir) / r.image).string();
  return records;
}

}  // namespace mivolo
