#pragma once

#include <optional>
#include <random>

#include "mivolo/config.hpp"
#include "mivolo/fusion.hpp"
#include "mivolo/image.hpp"

namespace mivolo {

// Random shift (fraction of the box side) and rescale of a box, clamped to the
// image. An empty result is redrawn up to 5 times, then the input box is used.
BBox jitter_box(const BBox& box, int image_width, int image_height, double shift, double scale,
                std::mt19937_64& rng);

// Erase rectangle in crop-relative coordinates.
struct EraseRect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
};

// Decisions shared by both crops of a pair.
struct AugmentPlan {
  bool flip = false;
  std::optional<EraseRect> erase;
};

AugmentPlan draw_plan(std::mt19937_64& rng, const ModelConfig& config);
Image apply_plan(const Image& crop, const AugmentPlan& plan, const std::array<double, 3>& fill);

struct RawPair {
  std::optional<Image> face;
  std::optional<Image> body;
};

// Jitter each box independently, crop, then flip/erase with one shared plan.
RawPair augment(const Image& source, const std::optional<BBox>& face, const std::optional<BBox>& body,
                std::mt19937_64& rng, const ModelConfig& config);

enum class DropChoice { none, face, body };

// Acts only on complete pairs. Body is dropped with body_drop_prob and face
// with face_drop_prob; the two events are exclusive, so a pair never loses
// both sides.
DropChoice draw_input_dropout(bool face_present, bool body_present, std::mt19937_64& rng,
                              const ModelConfig& config);
CropPair input_dropout(CropPair pair, std::mt19937_64& rng, const ModelConfig& config);

}  // namespace mivolo
