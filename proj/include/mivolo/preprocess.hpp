#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mivolo/pairing.hpp"

namespace mivolo {

// Crop plus a per-pixel flag marking pixels overwritten by detach_objects.
struct MaskedCrop {
  Image image;
  std::vector<unsigned char> filled;  // height * width, row-major

  bool is_filled(int y, int x) const { return filled[static_cast<std::size_t>(y) * image.width + x] != 0; }
};

// Fills every pixel of `crop` (cut from the source at `crop_box`) that any box
// in `others` covers, whatever the overlap size.
MaskedCrop detach_objects(const BBox& crop_box, const Image& crop, const std::vector<BBox>& others,
                          const std::array<double, 3>& fill);

struct TrimResult {
  MaskedCrop crop;
  int offset_x = 0;  // of the retained region inside the input crop
  int offset_y = 0;
  bool empty = false;
};

// Peels border rows/columns whose filled fraction is >= threshold, from every
// side inward, until no border line qualifies.
TrimResult trim(const MaskedCrop& crop, double threshold);

// True when the crop should be kept: min side >= min_side and retained area
// >= min_area_fraction of the original box area (boundary inclusive).
bool keep_crop(int width, int height, long long original_area, int min_side,
               double min_area_fraction);

struct PairRecord {
  std::string image;
  std::optional<BBox> face;
  std::optional<BBox> body;  // after trimming, in source coordinates
  int offset_x = 0;          // trim offset inside the detected person box
  int offset_y = 0;
  std::optional<MaskedCrop> face_crop;
  std::optional<MaskedCrop> body_crop;
};

// Assignment, occluder removal, trimming and size filtering for one image.
std::vector<PairRecord> make_pairs(const Image& image, const std::vector<Detection>& detections,
                                   const ModelConfig& config, const std::string& image_name = "");

struct DetectionRecord {
  std::string image;
  std::vector<Detection> detections;
};

// Newline-delimited JSON:
//   {"image": str, "detections": [{"kind": "face"|"person", "x0","y0","x1","y1": int, "score": num}]}
std::vector<DetectionRecord> read_detection_manifest(const std::string& path);
void write_detection_manifest(const std::string& path, const std::vector<DetectionRecord>& records);

// Newline-delimited JSON, fields in order:
//   {"image", "face_bbox": [x0,y0,x1,y1] | null, "body_bbox": [...] | null, "offsets": [dx, dy]}
std::string pair_record_line(const PairRecord& record);
void write_pair_manifest(const std::string& path, const std::vector<PairRecord>& records);
std::vector<PairRecord> read_pair_manifest(const std::string& path);

}  // namespace mivolo
