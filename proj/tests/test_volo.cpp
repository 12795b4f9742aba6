#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mivolo/gradcheck.hpp"
#include "mivolo/volo.hpp"

using namespace mivolo;

namespace {

Tensor randn(const Shape& shape, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = n(rng);
  return Tensor(shape, std::move(v));
}

void fill(Tensor t, double v) {
  for (double& x : t.mutable_data()) x = v;
}

void randomize(const ParameterList& params, std::mt19937_64& rng, double s) {
  std::normal_distribution<double> n(0.0, s);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (double& x : t.mutable_data()) x = n(rng);
  }
}

// Row-major [in x out] product plus optional bias, by loops.
std::vector<double> dense(const std::vector<double>& x, std::size_t rows, const Linear& l) {
  const std::size_t in = l.in_features(), out = l.out_features();
  std::vector<double> y(rows * out, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = l.bias.defined() ? l.bias[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * l.weight[i * out + o];
      y[r * out + o] = s;
    }
  return y;
}

// Outlook attention written out position by position.
std::vector<double> outlook_oracle(const OutlookAttention& oa, const TokenGrid& g, std::size_t heads) {
  const std::size_t c = g.channels(), h = g.height, w = g.width, n = h * w;
  const std::size_t k = oa.kernel(), k2 = k * k, hd = c / heads;
  const long pad = static_cast<long>(k / 2);
  const std::vector<double> x(g.tokens.data().begin(), g.tokens.data().end());
  const std::vector<double> v = dense(x, n, oa.value);
  const std::vector<double> logits = dense(x, n, oa.attn);
  std::vector<double> acc(n * c, 0.0), count(n, 0.0);
  auto pos = [&](std::size_t p, std::size_t m) -> long {
    const long y = static_cast<long>(p / w) + static_cast<long>(m / k) - pad;
    const long xx = static_cast<long>(p % w) + static_cast<long>(m % k) - pad;
    if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(w)) return -1;
    return y * static_cast<long>(w) + xx;
  };
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t a = 0; a < k2; ++a) {
      const long target = pos(p, a);
      if (target < 0) continue;
      count[target] += 1.0;
      for (std::size_t hh = 0; hh < heads; ++hh) {
        std::vector<double> row(k2);
        double mx = -1e300;
        for (std::size_t b = 0; b < k2; ++b) {
          row[b] = logits[p * heads * k2 * k2 + hh * k2 * k2 + a * k2 + b] / std::sqrt(double(hd));
          mx = std::max(mx, row[b]);
        }
        double z = 0.0;
        for (double& r : row) z += (r = std::exp(r - mx));
        for (std::size_t b = 0; b < k2; ++b) {
          const long src = pos(p, b);
          if (src < 0) continue;
          for (std::size_t d = 0; d < hd; ++d)
            acc[target * c + hh * hd + d] += row[b] / z * v[src * c + hh * hd + d];
        }
      }
    }
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) acc[p * c + ch] /= count[p];
  return dense(acc, n, oa.proj);
}

}  // namespace

TEST(PatchEmbedding, TokenCounts) {
  std::mt19937_64 rng(1);
  PatchEmbedding pe(8, 3, 16, 0.02, rng);
  TokenGrid g = pe.forward(Tensor::zeros({3, 64, 64}));
  EXPECT_EQ(g.height, 8u);
  EXPECT_EQ(g.width, 8u);
  EXPECT_EQ(g.tokens.shape(), (Shape{64, 16}));
  TokenGrid big = pe.forward(Tensor::zeros({3, 224, 224}));
  EXPECT_EQ(big.count(), 28u * 28u);
  EXPECT_THROW(pe.forward(Tensor::zeros({3, 60, 64})), DimensionError);
  EXPECT_THROW(pe.forward(Tensor::zeros({1, 64, 64})), DimensionError);
}

TEST(PatchEmbedding, ZeroImageGivesBiasTokens) {
  std::mt19937_64 rng(2);
  PatchEmbedding pe(8, 3, 16, 0.02, rng);
  Tensor b = pe.proj.bias;
  for (std::size_t i = 0; i < 16; ++i) b.mutable_data()[i] = 0.1 * static_cast<double>(i) - 0.3;
  TokenGrid g = pe.forward(Tensor::zeros({3, 16, 16}));
  for (std::size_t t = 0; t < g.count(); ++t)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(g.tokens[t * 16 + c], b[c]);
}

TEST(PatchEmbedding, MatchesPerPatchProjection) {
  std::mt19937_64 rng(3);
  PatchEmbedding pe(4, 3, 5, 0.5, rng);
  Tensor img = randn({3, 8, 12}, rng);
  TokenGrid g = pe.forward(img);
  ASSERT_EQ(g.height, 2u);
  ASSERT_EQ(g.width, 3u);
  for (std::size_t ty = 0; ty < 2; ++ty)
    for (std::size_t tx = 0; tx < 3; ++tx) {
      std::vector<double> patch;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < 4; ++dy)
          for (std::size_t dx = 0; dx < 4; ++dx) patch.push_back(img[(c * 8 + ty * 4 + dy) * 12 + tx * 4 + dx]);
      const auto expect = dense(patch, 1, pe.proj);
      for (std::size_t o = 0; o < 5; ++o) EXPECT_NEAR(g.tokens[(ty * 3 + tx) * 5 + o], expect[o], 1e-12);
    }
}

TEST(OutlookAttention, MatchesLoopOracle) {
  for (std::size_t heads : {1u, 2u}) {
    std::mt19937_64 rng(4 + heads);
    OutlookAttention oa(8, 3, heads, 0.3, rng);
    ParameterList ps;
    oa.collect("oa", ps);
    randomize(ps, rng, 0.3);
    TokenGrid g{randn({5 * 6, 8}, rng), 5, 6};
    const Tensor out = oa.forward(g).tokens;
    const auto expect = outlook_oracle(oa, g, heads);
    ASSERT_EQ(out.numel(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_NEAR(out[i], expect[i], 1e-12) << i;
  }
}

TEST(OutlookAttention, WeightsAreRowStochastic) {
  std::mt19937_64 rng(6);
  OutlookAttention oa(8, 3, 2, 1.0, rng);
  TokenGrid g{randn({16, 8}, rng, 3.0), 4, 4};
  Tensor a = oa.attention_weights(g);
  ASSERT_EQ(a.shape(), (Shape{2, 16, 9, 9}));
  for (std::size_t r = 0; r < a.numel() / 9; ++r) {
    double s = 0.0;
    for (std::size_t b = 0; b < 9; ++b) {
      EXPECT_GE(a[r * 9 + b], 0.0);
      s += a[r * 9 + b];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(OutlookAttention, KernelLargerThanGridIsConfigError) {
  std::mt19937_64 rng(7);
  OutlookAttention oa(4, 5, 1, 0.02, rng);
  EXPECT_THROW(oa.forward({Tensor::zeros({9, 4}), 3, 3}), ConfigError);
}

TEST(OutlookerBlock, ZeroedValuePathLeavesResidualPlusMlp) {
  std::mt19937_64 rng(8);
  OutlookerBlock block(8, 3, 1, 3.0, 1e-6, 0.3, rng);
  fill(block.attention.value.weight, 0.0);
  fill(block.attention.proj.weight, 0.0);
  fill(block.attention.proj.bias, 0.0);
  TokenGrid g{randn({16, 8}, rng), 4, 4};
  const Tensor out = block.forward(g, {}).tokens;
  const Tensor expect = add(g.tokens, block.mlp.forward(block.norm2.forward(g.tokens), {}));
  ASSERT_EQ(out.shape(), g.tokens.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], expect[i], 1e-14);
}

TEST(OutlookerBlock, ShapeAndGradient) {
  std::mt19937_64 rng(9);
  OutlookerBlock block(8, 3, 1, 2.0, 1e-6, 0.3, rng);
  ParameterList ps;
  block.collect("b", ps);
  randomize(ps, rng, 0.3);
  TokenGrid g{randn({16, 8}, rng), 4, 4};
  EXPECT_EQ(block.forward(g, {}).tokens.shape(), (Shape{16, 8}));
  Tensor probe = randn({16, 8}, rng);
  const auto entries = check_gradients(ps, [&] { return sum(mul(block.forward(g, {}).tokens, probe)); });
  EXPECT_LT(max_relative_error(entries), 1e-4);
}

TEST(Downsample, ShapesAndBias) {
  std::mt19937_64 rng(10);
  Downsample ds(64, 128, 0.02, rng);
  TokenGrid out = ds.forward({randn({64, 64}, rng), 8, 8});
  EXPECT_EQ(out.height, 4u);
  EXPECT_EQ(out.width, 4u);
  EXPECT_EQ(out.tokens.shape(), (Shape{16, 128}));
  fill(ds.proj.bias, 0.25);
  TokenGrid z = ds.forward({Tensor::zeros({64, 64}), 8, 8});
  for (double v : z.tokens.data()) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(ds.forward({Tensor::zeros({12, 64}), 3, 4}), DimensionError);
}

TEST(Downsample, MergesTwoByTwoNeighbourhoods) {
  std::mt19937_64 rng(11);
  Downsample ds(1, 4, 0.02, rng);
  // Identity projection exposes the merge order.
  Tensor w = ds.proj.weight;
  fill(w, 0.0);
  for (std::size_t i = 0; i < 4; ++i) w.mutable_data()[i * 4 + i] = 1.0;
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  TokenGrid out = ds.forward({Tensor({16, 1}, v), 4, 4});
  // Output token (0,1) covers rows 0-1, cols 2-3: values 2, 3, 6, 7.
  EXPECT_EQ(out.tokens[1 * 4 + 0], 2.0);
  EXPECT_EQ(out.tokens[1 * 4 + 1], 3.0);
  EXPECT_EQ(out.tokens[1 * 4 + 2], 6.0);
  EXPECT_EQ(out.tokens[1 * 4 + 3], 7.0);
}

TEST(Transformer, AttentionRowsSumToOneAndShapeHolds) {
  std::mt19937_64 rng(12);
  TransformerBlock block(16, 4, 3.0, 1e-6, 0.5, rng);
  Tensor x = randn({10, 16}, rng);
  Tensor a = block.attention.attention_weights(x, x);
  ASSERT_EQ(a.shape(), (Shape{4, 10, 10}));
  for (std::size_t r = 0; r < 40; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 10; ++j) s += a[r * 10 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(block.forward(x, {}).shape(), (Shape{10, 16}));
}

TEST(Head, ZeroWeightsExposeBias) {
  std::mt19937_64 rng(13);
  OutputHead head(16, 16, 0.02, rng);
  fill(head.fc1.weight, 0.0);
  fill(head.fc2.weight, 0.0);
  Tensor b = head.fc2.bias;
  b.mutable_data()[2] = 0.5;
  Tensor out = head.forward(randn({7, 16}, rng));
  ASSERT_EQ(out.shape(), (Shape{3}));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 0.5);
}

TEST(Head, PermutationInvariantAndSingleJointOutput) {
  std::mt19937_64 rng(14);
  OutputHead head(8, 8, 0.5, rng);
  Tensor x = randn({5, 8}, rng);
  std::vector<double> rev;
  for (std::size_t r = 5; r-- > 0;)
    for (std::size_t c = 0; c < 8; ++c) rev.push_back(x[r * 8 + c]);
  Tensor a = head.forward(x), b = head.forward(Tensor({5, 8}, rev));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
  // One head: a single final layer produces all three outputs.
  ParameterList ps;
  head.collect("head", ps);
  std::size_t three_wide = 0;
  for (const auto& p : ps)
    if (p.tensor.shape().back() == OutputHead::kOutputs) ++three_wide;
  EXPECT_EQ(three_wide, 2u);  // fc2 weight and bias
  EXPECT_EQ(head.fc2.out_features(), 3u);
}

TEST(Trunk, ShapeTraceMatchesConfig) {
  const ModelConfig c = ModelConfig::tiny();
  std::mt19937_64 rng(15);
  VoloTrunk trunk(c, rng);
  const std::size_t side = c.tokens_per_side();
  const auto shapes = trunk.trace_shapes({randn({side * side, c.embed_dim}, rng), side, side});
  std::vector<Shape> expect{{side * side, c.embed_dim}};
  for (std::size_t i = 0; i < c.outlooker_blocks; ++i) expect.push_back({side * side, c.embed_dim});
  expect.push_back({side * side / 4, c.trunk_dim()});
  for (std::size_t i = 0; i < c.transformer_blocks; ++i) expect.push_back({side * side / 4, c.trunk_dim()});
  expect.push_back({side * side / 4, c.trunk_dim()});
  EXPECT_EQ(shapes, expect);
}

TEST(Trunk, ParameterCountsMatchClosedForm) {
  for (const ModelConfig& c : {ModelConfig::tiny(), ModelConfig::d1()}) {
    std::mt19937_64 rng(16);
    VoloTrunk trunk(c, rng);
    ParameterList ps;
    trunk.collect("trunk", ps);
    EXPECT_EQ(count_parameters(ps), trunk_parameter_count(c));
    Downsample ds(c.embed_dim, c.trunk_dim(), 0.02, rng);
    ParameterList dps;
    ds.collect("d", dps);
    EXPECT_EQ(count_parameters(dps), downsample_parameter_count(c));
  }
}

TEST(Trunk, Deterministic) {
  const ModelConfig c = ModelConfig::tiny();
  std::mt19937_64 r1(17), r2(17);
  VoloTrunk a(c, r1), b(c, r2);
  std::mt19937_64 rng(18);
  TokenGrid g{randn({64, c.embed_dim}, rng), 8, 8};
  const Tensor ya = a.forward(g, {}), yb = b.forward(g, {});
  EXPECT_TRUE(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
}
