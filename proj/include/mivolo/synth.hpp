#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mivolo/dataset.hpp"
#include "mivolo/preprocess.hpp"

namespace mivolo {

// Test-fixture generator. Each image holds one figure: a face patch above a
// torso patch on a noisy grey background. Patch brightness encodes age and
// red-vs-blue dominance encodes gender (red = male).
//   joint: face and torso both encode age / 100
//   split: face encodes f, torso encodes b, age = 50 (f + b)
enum class SynthMode { joint, split };
SynthMode parse_synth_mode(const std::string& name);

struct SynthOptions {
  std::size_t n = 64;
  SynthMode mode = SynthMode::joint;
  std::uint64_t seed = 0;
  int width = 64;
  int height = 128;
  double noise = 0.03;
};

struct SynthSample {
  Image image;
  SampleRecord record;          // face box and torso box
  std::vector<Detection> detections;  // face box and whole-figure person box
};

SynthSample synth_sample(std::size_t index, const SynthOptions& options);

// Writes img_XXXXX.ppm files, manifest.jsonl (training/eval samples) and
// detections.jsonl (input for the pairing step) into `out_dir`.
std::vector<SampleRecord> write_synthetic_set(const std::string& out_dir, const SynthOptions& options);

}  // namespace mivolo
