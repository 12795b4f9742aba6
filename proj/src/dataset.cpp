#include "mivolo/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mivolo/error.hpp"

namespace mivolo {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::optional<BBox> box_field(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& b = j.at(key);
  if (!b.is_array() || b.size() != 4) throw InputError(std::string(key) + " must be [x0, y0, x1, y1]");
  BBox box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  if (!box.valid()) throw InputError(std::string("degenerate ") + key);
  return box;
}

ojson box_json(const std::optional<BBox>& b) {
  if (!b) return nullptr;
  return ojson::array({b->x0, b->y0, b->x1, b->y1});
}

}  // namespace

std::vector<SampleRecord> read_sample_manifest(const std::string& path, const ModelConfig& config) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    try {
      const ojson j = ojson::parse(line);
      SampleRecord r;
      fs::path image = j.at("image").get<std::string>();
      r.image = (image.is_relative() ? base / image : image).string();
      r.face = box_field(j, "face_bbox");
      r.body = box_field(j, "body_bbox");
      r.age = j.at("age").get<double>();
      r.gender = parse_gender(j.at("gender").get<std::string>());
      if (!r.face && !r.body) throw InputError("record has neither face nor body box");
      if (!(r.age >= config.y_min && r.age <= config.y_max))
        throw InputError("age outside [y_min, y_max]");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + e.what());
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  if (out.empty()) throw InputError("manifest " + path + " has no records");
  return out;
}

void write_sample_manifest(const std::string& path, const std::vector<SampleRecord>& records,
                           const std::string& base_dir) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& r : records) {
    ojson j;
    j["image"] = base_dir.empty() ? r.image : fs::relative(r.image, base_dir).string();
    j["face_bbox"] = box_json(r.face);
    j["body_bbox"] = box_json(r.body);
    j["age"] = r.age;
    j["gender"] = gender_name(r.gender);
    out << j.dump() << '\n';
  }
}

Tensor to_model_input(const Image& crop, const ModelConfig& config) {
  const Letterboxed lb = letterbox(crop, static_cast<int>(config.image_size), config.pixel_mean);
  return normalize_channels(lb.image, config.pixel_mean, config.pixel_std);
}

Dataset::Dataset(std::vector<SampleRecord> records, const ModelConfig& config)
    : records_(std::move(records)), config_(config) {}

std::vector<double> Dataset::ages() const {
  std::vector<double> out;
  for (const auto& r : records_) out.push_back(r.age);
  return out;
}

const Image& Dataset::image(std::size_t i) const {
  const std::string& path = records_.at(i).image;
  auto it = cache_.find(path);
  if (it == cache_.end()) it = cache_.emplace(path, load_ppm(path)).first;
  return it->second;
}

CropPair Dataset::clean_pair(std::size_t i) const {
  const Image& src = image(i);
  const auto& r = records_[i];
  CropPair pair;
  if (r.face) pair.face = to_model_input(crop(src, *r.face), config_);
  if (r.body) pair.body = to_model_input(crop(src, *r.body), config_);
  return pair;
}

CropPair Dataset::training_pair(std::size_t i, std::mt19937_64& rng) const {
  const auto& r = records_[i];
  RawPair raw = augment(image(i), r.face, r.body, rng, config_);
  const DropChoice drop = draw_input_dropout(raw.face.has_value(), raw.body.has_value(), rng, config_);
  if (drop == DropChoice::face) raw.face.reset();
  if (drop == DropChoice::body) raw.body.reset();
  CropPair pair;
  if (raw.face) pair.face = to_model_input(*raw.face, config_);
  if (raw.body) pair.body = to_model_input(*raw.body, config_);
  return pair;
}

}  // namespace mivolo
