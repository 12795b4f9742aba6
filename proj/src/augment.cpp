#include "mivolo/augment.hpp"

#include <algorithm>
#include <cmath>

namespace mivolo {

BBox jitter_box(const BBox& box, int image_width, int image_height, double shift, double scale,
                std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double w = box.width(), h = box.height();
  const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
  for (int attempt = 0; attempt < 5; ++attempt) {
    const double dx = u(rng) * shift * w, dy = u(rng) * shift * h;
    const double nw = w * (1.0 + u(rng) * scale), nh = h * (1.0 + u(rng) * scale);
    const BBox out = clamp_to({static_cast<int>(std::lround(cx + dx - 0.5 * nw)),
                               static_cast<int>(std::lround(cy + dy - 0.5 * nh)),
                               static_cast<int>(std::lround(cx + dx + 0.5 * nw)),
                               static_cast<int>(std::lround(cy + dy + 0.5 * nh))},
                              image_width, image_height);
    if (out.valid()) return out;
  }
  return clamp_to(box, image_width, image_height);
}

AugmentPlan draw_plan(std::mt19937_64& rng, const ModelConfig& c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentPlan plan;
  plan.flip = u(rng) < c.flip_prob;
  if (u(rng) < c.erase_prob) {
    const double area = c.erase_area_min + (c.erase_area_max - c.erase_area_min) * u(rng);
    const double log_ratio = std::log(0.3) + (std::log(1.0 / 0.3) - std::log(0.3)) * u(rng);
    const double ratio = std::exp(log_ratio);
    EraseRect r;
    r.w = std::min(1.0, std::sqrt(area * ratio));
    r.h = std::min(1.0, std::sqrt(area / ratio));
    r.x = (1.0 - r.w) * u(rng);
    r.y = (1.0 - r.h) * u(rng);
    plan.erase = r;
  }
  return plan;
}

Image apply_plan(const Image& crop, const AugmentPlan& plan, const std::array<double, 3>& fill) {
  Image out = plan.flip ? flip_horizontal(crop) : crop;
  if (plan.erase) {
    const auto& r = *plan.erase;
    const int x0 = static_cast<int>(std::lround(r.x * out.width));
    const int y0 = static_cast<int>(std::lround(r.y * out.height));
    const int w = std::max(1, static_cast<int>(std::lround(r.w * out.width)));
    const int h = std::max(1, static_cast<int>(std::lround(r.h * out.height)));
    const BBox box = clamp_to({x0, y0, x0 + w, y0 + h}, out.width, out.height);
    for (int c = 0; c < 3; ++c)
      for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x) out.at(c, y, x) = fill[c];
  }
  return out;
}

RawPair augment(const Image& source, const std::optional<BBox>& face, const std::optional<BBox>& body,
                std::mt19937_64& rng, const ModelConfig& c) {
  RawPair out;
  if (face)
    out.face = crop(source, jitter_box(*face, source.width, source.height, c.jitter_shift,
                                       c.jitter_scale, rng));
  if (body)
    out.body = crop(source, jitter_box(*body, source.width, source.height, c.jitter_shift,
                                       c.jitter_scale, rng));
  const AugmentPlan plan = draw_plan(rng, c);
  if (out.face) out.face = apply_plan(*out.face, plan, c.pixel_mean);
  if (out.body) out.body = apply_plan(*out.body, plan, c.pixel_mean);
  return out;
}

DropChoice draw_input_dropout(bool face_present, bool body_present, std::mt19937_64& rng,
                              const ModelConfig& c) {
  if (!face_present || !body_present) return DropChoice::none;
  const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (r < c.body_drop_prob) return DropChoice::body;
  if (r < c.body_drop_prob + c.face_drop_prob) return DropChoice::face;
  return DropChoice::none;
}

CropPair input_dropout(CropPair pair, std::mt19937_64& rng, const ModelConfig& c) {
  switch (draw_input_dropout(pair.face_present(), pair.body_present(), rng, c)) {
    case DropChoice::face: pair.face.reset(); break;
    case DropChoice::body: pair.body.reset(); break;
    case DropChoice::none: break;
  }
  return pair;
}

}  // namespace mivolo
