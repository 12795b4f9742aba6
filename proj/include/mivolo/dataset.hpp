#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mivolo/augment.hpp"

namespace mivolo {

struct SampleRecord {
  std::string image;  // resolved path
  std::optional<BBox> face;
  std::optional<BBox> body;
  double age = 0.0;
  Gender gender = Gender::male;
};

// Newline-delimited JSON, one sample per line:
//   {"image": str, "face_bbox": [x0,y0,x1,y1] | null, "body_bbox": [...] | null,
//    "age": num, "gender": "male"|"female"}
// Relative image paths resolve against the manifest's directory.
std::vector<SampleRecord> read_sample_manifest(const std::string& path, const ModelConfig& config);
void write_sample_manifest(const std::string& path, const std::vector<SampleRecord>& records,
                           const std::string& base_dir = "");

// Letterbox to the model side, then channel z-score.
Tensor to_model_input(const Image& crop, const ModelConfig& config);

// Samples plus a decoded-image cache.
class Dataset {
 public:
  Dataset(std::vector<SampleRecord> records, const ModelConfig& config);

  std::size_t size() const { return records_.size(); }
  const SampleRecord& record(std::size_t i) const { return records_[i]; }
  const std::vector<SampleRecord>& records() const { return records_; }
  std::vector<double> ages() const;

  const Image& image(std::size_t i) const;

  // Evaluation input: plain crops, no augmentation.
  CropPair clean_pair(std::size_t i) const;
  // Training input: augmentation then input dropout, all draws from `rng`.
  CropPair training_pair(std::size_t i, std::mt19937_64& rng) const;

 private:
  std::vector<SampleRecord> records_;
  ModelConfig config_;
  mutable std::map<std::string, Image> cache_;
};

}  // namespace mivolo
