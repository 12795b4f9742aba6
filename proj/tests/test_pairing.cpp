#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mivolo/error.hpp"
#include "mivolo/preprocess.hpp"
#include "oracles.hpp"

using namespace mivolo;

namespace {

BBox random_box(std::mt19937_64& rng, int w, int h, int min_side = 1) {
  std::uniform_int_distribution<int> x(0, w - min_side), y(0, h - min_side);
  const int x0 = x(rng), y0 = y(rng);
  std::uniform_int_distribution<int> bw(min_side, w - x0), bh(min_side, h - y0);
  return {x0, y0, x0 + bw(rng), y0 + bh(rng)};
}

Image noise_image(int w, int h, std::mt19937_64& rng) {
  Image im(w, h);
  std::uniform_real_distribution<double> u;
  for (auto& v : im.data) v = u(rng);
  return im;
}

MaskedCrop random_mask(std::mt19937_64& rng, int w, int h) {
  MaskedCrop m{Image(w, h), std::vector<unsigned char>(static_cast<std::size_t>(w) * h, 0)};
  std::uniform_int_distribution<int> kind(0, 2), count(0, 4);
  std::bernoulli_distribution coin(0.5), sparse(0.97);
  const int k = kind(rng);
  if (k == 0) {
    for (int i = count(rng); i > 0; --i) {
      const BBox b = random_box(rng, w, h);
      for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) m.filled[y * w + x] = 1;
    }
  } else {
    std::bernoulli_distribution p(k == 1 ? 0.5 : 0.97);
    for (auto& f : m.filled) f = p(rng);
  }
  return m;
}

}  // namespace

TEST(Hungarian, SpecExample) {
  const std::vector<double> cost{0.1, 0.9, 0.8, 0.2};
  const auto cols = hungarian(cost, 2);
  EXPECT_EQ(cols, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(cost[0 * 2 + cols[0]] + cost[1 * 2 + cols[1]], 0.3, 1e-15);
  EXPECT_THROW(hungarian(cost, 3), DimensionError);
  EXPECT_TRUE(hungarian({}, 0).empty());
}

TEST(Hungarian, MatchesExhaustiveSearchUpToSeven) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (std::size_t n = 1; n <= 7; ++n)
    for (int t = 0; t < 60; ++t) {
      std::vector<double> cost(n * n);
      // Coarse values exercise ties.
      for (auto& c : cost) c = t % 2 ? u(rng) : small(rng) / 3.0;
      const auto cols = hungarian(cost, n);
      std::set<std::size_t> seen(cols.begin(), cols.end());
      ASSERT_EQ(seen.size(), n);
      double total = 0.0;
      for (std::size_t r = 0; r < n; ++r) total += cost[r * n + cols[r]];
      EXPECT_NEAR(total, oracle::min_assignment(cost, n), 1e-12);
    }
}

TEST(Assign, FaceInsidePerson) {
  const std::vector<BBox> faces{{10, 10, 20, 20}, {200, 200, 210, 210}};
  const std::vector<BBox> persons{{0, 0, 50, 100}, {100, 0, 150, 100}};
  const AssignmentResult r = assign(faces, persons);
  ASSERT_EQ(r.matched.size(), 1u);
  EXPECT_EQ(r.matched[0], (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_EQ(r.unmatched_faces, std::vector<std::size_t>{1});
  EXPECT_EQ(r.unmatched_persons, std::vector<std::size_t>{1});
  EXPECT_EQ(face_person_cost(faces[0], persons[0]), 0.0);
  EXPECT_EQ(face_person_cost(faces[0], persons[1]), 1.0);
}

TEST(Assign, EmptyListsAndDegenerateBoxes) {
  const AssignmentResult none = assign({}, {});
  EXPECT_TRUE(none.matched.empty());
  const AssignmentResult faces_only = assign({{0, 0, 5, 5}, {9, 9, 12, 12}}, {});
  EXPECT_EQ(faces_only.unmatched_faces.size(), 2u);
  const AssignmentResult persons_only = assign({}, {{0, 0, 5, 5}});
  EXPECT_EQ(persons_only.unmatched_persons.size(), 1u);
  EXPECT_THROW(assign({{5, 5, 5, 9}}, {{0, 0, 9, 9}}), InputError);
  EXPECT_THROW(assign({{0, 0, 3, 3}}, {{4, 4, 2, 9}}), InputError);
}

TEST(Assign, OptimalAndPartitionsIndicesOnRandomScenes) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(0, 7);
  for (int t = 0; t < 300; ++t) {
    std::vector<BBox> faces(count(rng)), persons(count(rng));
    for (auto& f : faces) f = random_box(rng, 60, 60);
    for (auto& p : persons) p = random_box(rng, 60, 60);
    const AssignmentResult r = assign(faces, persons);
    std::size_t n = 0;
    const auto cost = assignment_cost_matrix(faces, persons, n);
    EXPECT_NEAR(r.total_cost, n ? oracle::min_assignment(cost, n) : 0.0, 1e-12);

    std::set<std::size_t> fs(r.unmatched_faces.begin(), r.unmatched_faces.end());
    std::set<std::size_t> ps(r.unmatched_persons.begin(), r.unmatched_persons.end());
    for (auto [f, p] : r.matched) {
      EXPECT_TRUE(fs.insert(f).second);
      EXPECT_TRUE(ps.insert(p).second);
      EXPECT_GT(intersect(faces[f], persons[p]).area(), 0);
    }
    EXPECT_EQ(fs.size(), faces.size());
    EXPECT_EQ(ps.size(), persons.size());
  }
}

TEST(Detach, NoOverlapLeavesCropUnchanged) {
  std::mt19937_64 rng(3);
  const Image src = noise_image(40, 40, rng);
  const BBox box{5, 5, 25, 30};
  const Image c = crop(src, box);
  const MaskedCrop m = detach_objects(box, c, {{30, 0, 40, 10}}, {0.5, 0.5, 0.5});
  EXPECT_EQ(m.image.data, c.data);
  EXPECT_TRUE(std::none_of(m.filled.begin(), m.filled.end(), [](auto f) { return f != 0; }));
}

TEST(Detach, LeftHalfCovered) {
  std::mt19937_64 rng(4);
  const Image src = noise_image(40, 40, rng);
  const BBox box{10, 0, 30, 20};
  const MaskedCrop m = detach_objects(box, crop(src, box), {{0, 0, 20, 40}}, {0.1, 0.2, 0.3});
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      EXPECT_EQ(m.is_filled(y, x), x < 10);
      if (x < 10) EXPECT_EQ(m.image.at(1, y, x), 0.2);
      else EXPECT_EQ(m.image.at(1, y, x), src.at(1, y, 10 + x));
    }
}

TEST(Detach, MatchesRasterizationOracle) {
  std::mt19937_64 rng(5);
  const std::array<double, 3> fill{0.485, 0.456, 0.406};
  for (int t = 0; t < 300; ++t) {
    const Image src = noise_image(48, 40, rng);
    const BBox box = random_box(rng, 48, 40);
    std::vector<BBox> others(3);
    for (auto& o : others) o = random_box(rng, 48, 40);
    const MaskedCrop m = detach_objects(box, crop(src, box), others, fill);
    for (int y = 0; y < box.height(); ++y)
      for (int x = 0; x < box.width(); ++x) {
        const int sx = box.x0 + x, sy = box.y0 + y;
        bool covered = false;
        for (const auto& o : others) covered |= sx >= o.x0 && sx < o.x1 && sy >= o.y0 && sy < o.y1;
        ASSERT_EQ(m.is_filled(y, x), covered);
        for (int c = 0; c < 3; ++c)
          ASSERT_EQ(m.image.at(c, y, x), covered ? fill[c] : src.at(c, sy, sx));
      }
  }
}

TEST(Trim, LeftColumnsExample) {
  MaskedCrop m{Image(100, 100), std::vector<unsigned char>(100 * 100, 0)};
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 30; ++x) m.filled[y * 100 + x] = 1;
  const TrimResult r = trim(m, 0.95);
  ASSERT_FALSE(r.empty);
  EXPECT_EQ(r.crop.image.width, 70);
  EXPECT_EQ(r.crop.image.height, 100);
  EXPECT_EQ(r.offset_x, 30);
  EXPECT_EQ(r.offset_y, 0);
}

TEST(Trim, CleanCropUnchangedAndFullyFilledIsEmpty) {
  std::mt19937_64 rng(6);
  MaskedCrop m{noise_image(17, 23, rng), std::vector<unsigned char>(17 * 23, 0)};
  const TrimResult r = trim(m, 0.95);
  EXPECT_FALSE(r.empty);
  EXPECT_EQ(r.offset_x, 0);
  EXPECT_EQ(r.offset_y, 0);
  EXPECT_EQ(r.crop.image.data, m.image.data);
  std::fill(m.filled.begin(), m.filled.end(), 1);
  EXPECT_TRUE(trim(m, 0.95).empty);
}

TEST(Trim, IdempotentOnFuzzMasks) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> side(1, 40);
  for (int t = 0; t < 1000; ++t) {
    const MaskedCrop m = random_mask(rng, side(rng), side(rng));
    const TrimResult once = trim(m, 0.95);
    if (once.empty) continue;
    const TrimResult twice = trim(once.crop, 0.95);
    ASSERT_FALSE(twice.empty);
    EXPECT_EQ(twice.offset_x, 0);
    EXPECT_EQ(twice.offset_y, 0);
    EXPECT_EQ(twice.crop.image.width, once.crop.image.width);
    EXPECT_EQ(twice.crop.image.height, once.crop.image.height);
    EXPECT_EQ(twice.crop.filled, once.crop.filled);
    // Result is the input window at the reported offset.
    for (int y = 0; y < once.crop.image.height; ++y)
      for (int x = 0; x < once.crop.image.width; ++x)
        ASSERT_EQ(once.crop.is_filled(y, x), m.is_filled(once.offset_y + y, once.offset_x + x));
  }
}

TEST(Discard, Thresholds) {
  EXPECT_FALSE(keep_crop(10, 200, 10 * 200, 16, 0.3));
  EXPECT_TRUE(keep_crop(64, 80, 64 * 80, 16, 0.3));
  EXPECT_TRUE(keep_crop(30, 100, 100 * 100, 16, 0.3));
  EXPECT_FALSE(keep_crop(29, 100, 100 * 100, 16, 0.3));
  EXPECT_TRUE(keep_crop(16, 16, 16 * 16, 16, 0.3));
  EXPECT_FALSE(keep_crop(15, 16, 15 * 16, 16, 0.3));
}

TEST(Letterbox, WideExample) {
  Image im(100, 50, 1.0);
  const std::array<double, 3> mean{0.485, 0.456, 0.406};
  const Letterboxed lb = letterbox(im, 224, mean);
  EXPECT_EQ(lb.image.width, 224);
  EXPECT_EQ(lb.image.height, 224);
  EXPECT_EQ(lb.content, (BBox{0, 56, 224, 168}));
  for (int y = 0; y < 224; ++y) {
    const bool band = y < 56 || y >= 168;
    EXPECT_EQ(lb.image.at(0, y, 100), band ? 0.485 : 1.0);
  }
  const Tensor t = normalize_channels(lb.image, mean, {0.229, 0.224, 0.225});
  EXPECT_EQ(t.shape(), (Shape{3, 224, 224}));
  EXPECT_NEAR(t[100 * 224 + 7], (1.0 - 0.485) / 0.229, 1e-12);
  EXPECT_NEAR(t[100 * 224 + 7], 2.2489, 1e-4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 56; ++y)
      for (int x = 0; x < 224; ++x) ASSERT_EQ(t[(c * 224 + y) * 224 + x], 0.0);
}

TEST(Letterbox, SquareInputIsPureResize) {
  std::mt19937_64 rng(8);
  const Image im = noise_image(50, 50, rng);
  const Letterboxed lb = letterbox(im, 64, {0.5, 0.5, 0.5});
  EXPECT_EQ(lb.content, (BBox{0, 0, 64, 64}));
  EXPECT_EQ(lb.image.data, resize_bilinear(im, 64, 64).data);
  EXPECT_EQ(letterbox(im, 50, {0, 0, 0}).image.data, im.data);
}

TEST(Letterbox, ShapeAndAspectFuzz) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> side(1, 400), tgt(8, 256);
  for (int t = 0; t < 1000; ++t) {
    const int w = side(rng), h = side(rng), target = t % 2 ? 224 : tgt(rng);
    const Image im(w, h, 0.25);
    const Letterboxed lb = letterbox(im, target, {0.9, 0.8, 0.7});
    ASSERT_EQ(lb.image.width, target);
    ASSERT_EQ(lb.image.height, target);
    const BBox& c = lb.content;
    EXPECT_EQ(std::max(c.width(), c.height()), target);
    // Aspect preserved to one pixel of rounding on the short side.
    if (w >= h) EXPECT_LE(std::abs(c.height() - static_cast<double>(h) * target / w), 1.0);
    else EXPECT_LE(std::abs(c.width() - static_cast<double>(w) * target / h), 1.0);
    // Centred bands.
    EXPECT_LE(std::abs(c.x0 - (target - c.x1)), 1);
    EXPECT_LE(std::abs(c.y0 - (target - c.y1)), 1);
    for (int y = 0; y < target; y += 7)
      for (int x = 0; x < target; x += 5) {
        const bool inside = x >= c.x0 && x < c.x1 && y >= c.y0 && y < c.y1;
        ASSERT_EQ(lb.image.at(2, y, x), inside ? 0.25 : 0.7);
      }
  }
}

TEST(Pipeline, NeverEnlargesOffsetsComposeAndPure) {
  std::mt19937_64 rng(10);
  ModelConfig cfg;
  cfg.min_crop_side = 4;
  std::uniform_int_distribution<int> count(0, 4);
  std::size_t bodies = 0;
  for (int t = 0; t < 200; ++t) {
    const Image src = noise_image(80, 60, rng);
    std::vector<Detection> dets;
    for (int i = count(rng); i > 0; --i) dets.push_back({random_box(rng, 80, 60, 4), ObjectKind::person});
    for (int i = count(rng); i > 0; --i) dets.push_back({random_box(rng, 80, 60, 2), ObjectKind::face});
    const auto records = make_pairs(src, dets, cfg, "img");
    const auto again = make_pairs(src, dets, cfg, "img");
    ASSERT_EQ(records.size(), again.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      EXPECT_EQ(pair_record_line(records[i]), pair_record_line(again[i]));
      const PairRecord& r = records[i];
      EXPECT_TRUE(r.face || r.body);
      if (r.face) EXPECT_EQ(r.face_crop->image.width, r.face->width());
      if (!r.body) continue;
      ++bodies;
      const BBox& b = *r.body;
      EXPECT_GE(b.width(), 4);
      // Some person box contains the trimmed body at the recorded offset.
      bool found = false;
      for (const auto& d : dets)
        if (d.kind == ObjectKind::person && d.bbox.x0 + r.offset_x == b.x0 &&
            d.bbox.y0 + r.offset_y == b.y0 && b.x1 <= d.bbox.x1 && b.y1 <= d.bbox.y1)
          found = true;
      EXPECT_TRUE(found);
      ASSERT_EQ(r.body_crop->image.width, b.width());
      ASSERT_EQ(r.body_crop->image.height, b.height());
      for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x)
          if (!r.body_crop->is_filled(y, x))
            ASSERT_EQ(r.body_crop->image.at(0, y, x), src.at(0, b.y0 + y, b.x0 + x));
    }
  }
  EXPECT_GT(bodies, 50u);
}

TEST(Pipeline, OccludedBodyIsTrimmedAndSmallOnesDropped) {
  Image src(200, 200, 0.3);
  ModelConfig cfg;
  // Person B covers the right 30 columns of person A.
  std::vector<Detection> dets{{{0, 0, 100, 100}, ObjectKind::person},
                              {{70, 0, 170, 100}, ObjectKind::person},
                              {{5, 5, 25, 25}, ObjectKind::face}};
  const auto r = make_pairs(src, dets, cfg);
  ASSERT_EQ(r.size(), 2u);
  ASSERT_TRUE(r[0].face && r[0].body);
  EXPECT_EQ(*r[0].body, (BBox{0, 0, 70, 100}));
  EXPECT_EQ(*r[1].body, (BBox{100, 0, 170, 100}));
  EXPECT_EQ(r[1].offset_x, 30);

  // A sliver left over after trimming is discarded.
  dets[1].bbox = {10, 0, 170, 100};
  const auto s = make_pairs(src, dets, cfg);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_TRUE(s[0].face);
  EXPECT_FALSE(s[0].body);
}

TEST(Manifests, PairLineFieldOrder) {
  PairRecord r;
  r.image = "a.ppm";
  r.body = BBox{1, 2, 3, 4};
  r.offset_x = 5;
  EXPECT_EQ(pair_record_line(r),
            R"({"image":"a.ppm","face_bbox":null,"body_bbox":[1,2,3,4],"offsets":[5,0]})");
}
