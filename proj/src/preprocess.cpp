#include "mivolo/preprocess.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "mivolo/error.hpp"

namespace mivolo {

using ojson = nlohmann::ordered_json;

MaskedCrop detach_objects(const BBox& crop_box, const Image& crop, const std::vector<BBox>& others,
                          const std::array<double, 3>& fill) {
  MaskedCrop out{crop, std::vector<unsigned char>(static_cast<std::size_t>(crop.width) * crop.height, 0)};
  for (const auto& other : others) {
    BBox local = intersect(other, crop_box);
    if (!local.valid()) continue;
    local = clamp_to({local.x0 - crop_box.x0, local.y0 - crop_box.y0, local.x1 - crop_box.x0,
                      local.y1 - crop_box.y0},
                     crop.width, crop.height);
    for (int y = local.y0; y < local.y1; ++y)
      for (int x = local.x0; x < local.x1; ++x) {
        out.filled[static_cast<std::size_t>(y) * crop.width + x] = 1;
        for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = fill[c];
      }
  }
  return out;
}

TrimResult trim(const MaskedCrop& in, double threshold) {
  int top = 0, bottom = in.image.height, left = 0, right = in.image.width;
  auto row_qualifies = [&](int y) {
    int n = 0;
    for (int x = left; x < right; ++x) n += in.is_filled(y, x);
    return n >= threshold * (right - left);
  };
  auto col_qualifies = [&](int x) {
    int n = 0;
    for (int y = top; y < bottom; ++y) n += in.is_filled(y, x);
    return n >= threshold * (bottom - top);
  };
  bool changed = true;
  while (changed && top < bottom && left < right) {
    changed = false;
    while (top < bottom && left < right && row_qualifies(top)) ++top, changed = true;
    while (top < bottom && left < right && row_qualifies(bottom - 1)) --bottom, changed = true;
    while (top < bottom && left < right && col_qualifies(left)) ++left, changed = true;
    while (top < bottom && left < right && col_qualifies(right - 1)) --right, changed = true;
  }
  TrimResult result;
  result.offset_x = left;
  result.offset_y = top;
  if (top >= bottom || left >= right) {
    result.empty = true;
    return result;
  }
  const int w = right - left, h = bottom - top;
  result.crop.image = crop(in.image, {left, top, right, bottom});
  result.crop.filled.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      result.crop.filled[static_cast<std::size_t>(y) * w + x] = in.is_filled(top + y, left + x);
  return result;
}

bool keep_crop(int width, int height, long long original_area, int min_side,
               double min_area_fraction) {
  if (width < min_side || height < min_side) return false;
  const double area = static_cast<double>(width) * height;
  return area >= min_area_fraction * static_cast<double>(original_area) * (1.0 - 1e-12);
}

namespace {

std::vector<BBox> boxes_except(const std::vector<Detection>& detections,
                               std::initializer_list<std::size_t> skip) {
  std::vector<BBox> out;
  for (std::size_t i = 0; i < detections.size(); ++i)
    if (std::find(skip.begin(), skip.end(), i) == skip.end()) out.push_back(detections[i].bbox);
  return out;
}

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

}  // namespace

std::vector<PairRecord> make_pairs(const Image& image, const std::vector<Detection>& detections,
                                   const ModelConfig& config, const std::string& image_name) {
  std::vector<std::size_t> face_ids, person_ids;
  std::vector<BBox> faces, persons;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const BBox b = clamp_to(detections[i].bbox, image.width, image.height);
    if (!b.valid()) throw InputError("detection box outside image " + image_name);
    (detections[i].kind == ObjectKind::face ? face_ids : person_ids).push_back(i);
    (detections[i].kind == ObjectKind::face ? faces : persons).push_back(b);
  }
  const AssignmentResult assignment = assign(faces, persons);

  auto body_record = [&](std::size_t person, std::size_t paired_face, PairRecord& rec) {
    const BBox box = persons[person];
    const std::size_t skip_face = paired_face == kNone ? kNone : face_ids[paired_face];
    MaskedCrop detached = detach_objects(box, crop(image, box),
                                         boxes_except(detections, {person_ids[person], skip_face}),
                                         config.pixel_mean);
    TrimResult trimmed = trim(detached, config.trim_threshold);
    if (trimmed.empty) return;
    const int w = trimmed.crop.image.width, h = trimmed.crop.image.height;
    if (!keep_crop(w, h, box.area(), static_cast<int>(config.min_crop_side),
                   config.min_area_fraction))
      return;
    rec.offset_x = trimmed.offset_x;
    rec.offset_y = trimmed.offset_y;
    rec.body = BBox{box.x0 + trimmed.offset_x, box.y0 + trimmed.offset_y,
                    box.x0 + trimmed.offset_x + w, box.y0 + trimmed.offset_y + h};
    rec.body_crop = std::move(trimmed.crop);
  };

  std::vector<PairRecord> records;
  for (auto [f, p] : assignment.matched) {
    PairRecord rec;
    rec.image = image_name;
    rec.face = faces[f];
    rec.face_crop = detach_objects(faces[f], crop(image, faces[f]),
                                   boxes_except(detections, {face_ids[f], person_ids[p]}),
                                   config.pixel_mean);
    body_record(p, f, rec);
    records.push_back(std::move(rec));
  }
  for (std::size_t f : assignment.unmatched_faces) {
    PairRecord rec;
    rec.image = image_name;
    rec.face = faces[f];
    const Image face_pixels = crop(image, faces[f]);
    rec.face_crop = MaskedCrop{face_pixels, std::vector<unsigned char>(
                                                static_cast<std::size_t>(face_pixels.width) *
                                                    face_pixels.height, 0)};
    records.push_back(std::move(rec));
  }
  for (std::size_t p : assignment.unmatched_persons) {
    PairRecord rec;
    rec.image = image_name;
    body_record(p, kNone, rec);
    if (rec.body) records.push_back(std::move(rec));
  }
  return records;
}

// ---- manifests ----------------------------------------------------------------

namespace {

std::vector<ojson> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read manifest " + path);
  std::vector<ojson> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

ojson box_json(const std::optional<BBox>& b) {
  if (!b) return nullptr;
  return ojson::array({b->x0, b->y0, b->x1, b->y1});
}

std::optional<BBox> box_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 4) throw InputError("bounding box must be [x0, y0, x1, y1]");
  return BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

std::vector<DetectionRecord> read_detection_manifest(const std::string& path) {
  std::vector<DetectionRecord> out;
  for (const auto& j : read_lines(path)) {
    try {
      DetectionRecord rec;
      rec.image = j.at("image").get<std::string>();
      for (const auto& d : j.at("detections")) {
        Detection det;
        const auto kind = d.at("kind").get<std::string>();
        if (kind != "face" && kind != "person") throw InputError("unknown detection kind " + kind);
        det.kind = kind == "face" ? ObjectKind::face : ObjectKind::person;
        det.bbox = {d.at("x0").get<int>(), d.at("y0").get<int>(), d.at("x1").get<int>(),
                    d.at("y1").get<int>()};
        det.score = d.value("score", 1.0);
        if (!(det.score >= 0.0 && det.score <= 1.0)) throw InputError("detection score outside [0, 1]");
        if (!det.bbox.valid()) throw InputError("degenerate detection box in " + rec.image);
        rec.detections.push_back(det);
      }
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  return out;
}

void write_detection_manifest(const std::string& path, const std::vector<DetectionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& r : records) {
    ojson j;
    j["image"] = r.image;
    j["detections"] = ojson::array();
    for (const auto& d : r.detections) {
      ojson dj;
      dj["kind"] = d.kind == ObjectKind::face ? "face" : "person";
      dj["x0"] = d.bbox.x0;
      dj["y0"] = d.bbox.y0;
      dj["x1"] = d.bbox.x1;
      dj["y1"] = d.bbox.y1;
      dj["score"] = d.score;
      j["detections"].push_back(dj);
    }
    out << j.dump() << '\n';
  }
}

std::string pair_record_line(const PairRecord& r) {
  ojson j;
  j["image"] = r.image;
  j["face_bbox"] = box_json(r.face);
  j["body_bbox"] = box_json(r.body);
  j["offsets"] = ojson::array({r.offset_x, r.offset_y});
  return j.dump();
}

void write_pair_manifest(const std::string& path, const std::vector<PairRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& r : records) out << pair_record_line(r) << '\n';
}

std::vector<PairRecord> read_pair_manifest(const std::string& path) {
  std::vector<PairRecord> out;
  for (const auto& j : read_lines(path)) {
    try {
      PairRecord r;
      r.image = j.at("image").get<std::string>();
      r.face = box_from(j.at("face_bbox"));
      r.body = box_from(j.at("body_bbox"));
      const auto& off = j.at("offsets");
      r.offset_x = off.at(0).get<int>();
      r.offset_y = off.at(1).get<int>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mivolo
