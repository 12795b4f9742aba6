#include "mivolo/volo.hpp"

#include <cmath>

namespace mivolo {

PatchEmbedding::PatchEmbedding(std::size_t patch_size, std::size_t in_channels, std::size_t dim,
                               double init_std, std::mt19937_64& rng)
    : proj(in_channels * patch_size * patch_size, dim, init_std, rng),
      patch_size_(patch_size),
      in_channels_(in_channels) {}

TokenGrid PatchEmbedding::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != in_channels_)
    throw DimensionError("patch_embed: expected [" + std::to_string(in_channels_) +
                         " x H x W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h % patch_size_ != 0 || w % patch_size_ != 0)
    throw DimensionError("patch_embed: image " + shape_str(image.shape()) +
                         " not divisible by patch size " + std::to_string(patch_size_));
  Tensor cols = unfold(image, patch_size_, patch_size_, 0);  // [3pp x L]
  Tensor patches = transpose(cols, 0, 1);                     // [L x 3pp]
  return {proj.forward(patches), h / patch_size_, w / patch_size_};
}

void PatchEmbedding::collect(const std::string& prefix, ParameterList& out) const {
  proj.collect(prefix + ".proj", out);
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (c % heads != 0)
    throw DimensionError("split_heads: width " + std::to_string(c) + " not divisible by " +
                         std::to_string(heads));
  return permute(reshape(x, {n, heads, c / heads}), {1, 0, 2});
}

Tensor merge_heads(const Tensor& x) {
  const std::size_t heads = x.dim(0), n = x.dim(1), d = x.dim(2);
  return reshape(permute(x, {1, 0, 2}), {n, heads * d});
}

// ---- outlooker ------------------------------------------------------------

OutlookAttention::OutlookAttention(std::size_t dim, std::size_t kernel, std::size_t heads,
                                   double init_std, std::mt19937_64& rng)
    : value(dim, dim, init_std, rng, false),
      attn(dim, heads * kernel * kernel * kernel * kernel, init_std, rng),
      proj(dim, dim, init_std, rng),
      kernel_(kernel),
      heads_(heads) {}

Tensor OutlookAttention::attention_weights(const TokenGrid& x) const {
  const std::size_t n = x.count(), k2 = kernel_ * kernel_;
  const std::size_t head_dim = x.channels() / heads_;
  Tensor logits = permute(reshape(attn.forward(x.tokens), {n, heads_, k2, k2}), {1, 0, 2, 3});
  return softmax(scale(logits, 1.0 / std::sqrt(static_cast<double>(head_dim))), 3);
}

TokenGrid OutlookAttention::forward(const TokenGrid& x) const {
  const std::size_t c = x.channels(), n = x.count(), h = x.height, w = x.width;
  const std::size_t k2 = kernel_ * kernel_, head_dim = c / heads_, pad = kernel_ / 2;
  if (kernel_ > h || kernel_ > w)
    throw ConfigError("outlook kernel " + std::to_string(kernel_) + " larger than " +
                      std::to_string(h) + "x" + std::to_string(w) + " grid");

  // values: [C x h x w] -> windows [heads*N x k^2 x d]
  Tensor v = reshape(transpose(value.forward(x.tokens), 0, 1), {c, h, w});
  Tensor windows = reshape(unfold(v, kernel_, 1, pad), {heads_, head_dim, k2, n});
  windows = reshape(permute(windows, {0, 3, 2, 1}), {heads_ * n, k2, head_dim});

  Tensor weights = reshape(attention_weights(x), {heads_ * n, k2, k2});
  Tensor mixed = reshape(bmm(weights, windows), {heads_, n, k2, head_dim});
  mixed = reshape(permute(mixed, {0, 3, 2, 1}), {c * k2, n});
  Tensor folded = fold(mixed, c, h, w, kernel_, 1, pad);

  // overlap normalization: every position averaged over the windows covering it
  Tensor counts = fold(unfold(Tensor::full({c, h, w}, 1.0), kernel_, 1, pad), c, h, w, kernel_,
                       1, pad);
  std::vector<double> inv(counts.numel());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / counts[i];
  folded = mul(folded, Tensor({c, h, w}, std::move(inv)));

  Tensor tokens = transpose(reshape(folded, {c, n}), 0, 1);
  return {proj.forward(tokens), h, w};
}

void OutlookAttention::collect(const std::string& prefix, ParameterList& out) const {
  value.collect(prefix + ".v", out);
  attn.collect(prefix + ".attn", out);
  proj.collect(prefix + ".proj", out);
}

OutlookerBlock::OutlookerBlock(std::size_t dim, std::size_t kernel, std::size_t heads,
                               double mlp_ratio, double eps, double init_std,
                               std::mt19937_64& rng)
    : norm1(dim, eps),
      attention(dim, kernel, heads, init_std, rng),
      norm2(dim, eps),
      mlp(dim, hidden_width(dim, mlp_ratio), dim, init_std, rng) {}

TokenGrid OutlookerBlock::forward(const TokenGrid& x, const ForwardContext& ctx) const {
  TokenGrid normed{norm1.forward(x.tokens), x.height, x.width};
  Tensor y = add(x.tokens, drop_path(attention.forward(normed).tokens, ctx));
  y = add(y, drop_path(mlp.forward(norm2.forward(y), ctx), ctx));
  return {y, x.height, x.width};
}

void OutlookerBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attention.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

// ---- downsample -----------------------------------------------------------

Downsample::Downsample(std::size_t in_dim, std::size_t out_dim, double init_std,
                       std::mt19937_64& rng)
    : proj(4 * in_dim, out_dim, init_std, rng) {}

TokenGrid Downsample::forward(const TokenGrid& x) const {
  const std::size_t h = x.height, w = x.width, c = x.channels();
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("downsample: grid " + std::to_string(h) + "x" + std::to_string(w) +
                         " has an odd side");
  Tensor merged = reshape(x.tokens, {h / 2, 2, w / 2, 2, c});
  merged = reshape(permute(merged, {0, 2, 1, 3, 4}), {(h / 2) * (w / 2), 4 * c});
  return {proj.forward(merged), h / 2, w / 2};
}

void Downsample::collect(const std::string& prefix, ParameterList& out) const {
  proj.collect(prefix + ".proj", out);
}

// ---- attention ------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, double init_std,
                                       std::mt19937_64& rng)
    : query(dim, dim, init_std, rng, false),
      key(dim, dim, init_std, rng, false),
      value(dim, dim, init_std, rng, false),
      proj(dim, dim, init_std, rng),
      heads_(heads) {}

Tensor MultiHeadAttention::attention_weights(const Tensor& x, const Tensor& context) const {
  if (x.rank() != 2 || context.rank() != 2 || x.dim(1) != context.dim(1))
    throw DimensionError("attention: query " + shape_str(x.shape()) + " and context " +
                         shape_str(context.shape()) + " widths differ");
  const double head_dim = static_cast<double>(x.dim(1) / heads_);
  Tensor q = split_heads(query.forward(x), heads_);
  Tensor k = split_heads(key.forward(context), heads_);
  Tensor scores = scale(bmm(q, transpose(k, 1, 2)), 1.0 / std::sqrt(head_dim));
  return softmax(scores, 2);
}

Tensor MultiHeadAttention::forward(const Tensor& x, const Tensor& context) const {
  Tensor weights = attention_weights(x, context);
  Tensor v = split_heads(value.forward(context), heads_);
  return proj.forward(merge_heads(bmm(weights, v)));
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  query.collect(prefix + ".q", out);
  key.collect(prefix + ".k", out);
  value.collect(prefix + ".v", out);
  proj.collect(prefix + ".proj", out);
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, double mlp_ratio,
                                   double eps, double init_std, std::mt19937_64& rng)
    : norm1(dim, eps),
      attention(dim, heads, init_std, rng),
      norm2(dim, eps),
      mlp(dim, hidden_width(dim, mlp_ratio), dim, init_std, rng) {}

Tensor TransformerBlock::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor normed = norm1.forward(x);
  Tensor y = add(x, drop_path(attention.forward(normed, normed), ctx));
  return add(y, drop_path(mlp.forward(norm2.forward(y), ctx), ctx));
}

void TransformerBlock::collect(const std::string& prefix, ParameterList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attention.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

// ---- head -----------------------------------------------------------------

OutputHead::OutputHead(std::size_t dim, std::size_t hidden, double init_std,
                       std::mt19937_64& rng)
    : fc1(dim, hidden, init_std, rng), fc2(hidden, kOutputs, init_std, rng) {}

Tensor OutputHead::forward(const Tensor& tokens) const {
  if (tokens.rank() != 2) throw DimensionError("head: expected [N x C] tokens");
  return fc2.forward(gelu(fc1.forward(mean_rows(tokens))));
}

void OutputHead::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

// ---- trunk ----------------------------------------------------------------

VoloTrunk::VoloTrunk(const ModelConfig& config, std::mt19937_64& rng) {
  const double eps = config.layer_norm_eps, std = config.init_std;
  for (std::size_t i = 0; i < config.outlooker_blocks; ++i)
    outlookers.emplace_back(config.embed_dim, config.outlook_kernel, config.outlook_heads,
                            config.mlp_ratio, eps, std, rng);
  downsample = Downsample(config.embed_dim, config.trunk_dim(), std, rng);
  for (std::size_t i = 0; i < config.transformer_blocks; ++i)
    transformers.emplace_back(config.trunk_dim(), config.transformer_heads, config.mlp_ratio,
                              eps, std, rng);
  norm = LayerNorm(config.trunk_dim(), eps);
}

Tensor VoloTrunk::forward(const TokenGrid& x, const ForwardContext& ctx) const {
  TokenGrid grid = x;
  for (const auto& block : outlookers) grid = block.forward(grid, ctx);
  Tensor tokens = downsample.forward(grid).tokens;
  for (const auto& block : transformers) tokens = block.forward(tokens, ctx);
  return norm.forward(tokens);
}

std::vector<Shape> VoloTrunk::trace_shapes(const TokenGrid& x) const {
  std::vector<Shape> shapes{x.tokens.shape()};
  ForwardContext ctx;
  TokenGrid grid = x;
  for (const auto& block : outlookers) {
    grid = block.forward(grid, ctx);
    shapes.push_back(grid.tokens.shape());
  }
  Tensor tokens = downsample.forward(grid).tokens;
  shapes.push_back(tokens.shape());
  for (const auto& block : transformers) {
    tokens = block.forward(tokens, ctx);
    shapes.push_back(tokens.shape());
  }
  shapes.push_back(norm.forward(tokens).shape());
  return shapes;
}

void VoloTrunk::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < outlookers.size(); ++i)
    outlookers[i].collect(prefix + ".outlooker" + std::to_string(i), out);
  downsample.collect(prefix + ".downsample", out);
  for (std::size_t i = 0; i < transformers.size(); ++i)
    transformers[i].collect(prefix + ".transformer" + std::to_string(i), out);
  norm.collect(prefix + ".norm", out);
}

// ---- closed-form parameter counts -----------------------------------------

std::size_t count_parameters(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

std::size_t linear_parameter_count(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t patch_embedding_parameter_count(const ModelConfig& c) {
  return linear_parameter_count(3 * c.patch_size * c.patch_size, c.embed_dim);
}

std::size_t outlooker_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.embed_dim, k4 = c.outlook_kernel * c.outlook_kernel *
                                          c.outlook_kernel * c.outlook_kernel;
  const std::size_t hidden = hidden_width(d, c.mlp_ratio);
  return 4 * d + d * d + linear_parameter_count(d, d) +
         linear_parameter_count(d, c.outlook_heads * k4) + linear_parameter_count(d, hidden) +
         linear_parameter_count(hidden, d);
}

std::size_t downsample_parameter_count(const ModelConfig& c) {
  return linear_parameter_count(4 * c.embed_dim, c.trunk_dim());
}

std::size_t transformer_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.trunk_dim(), hidden = hidden_width(d, c.mlp_ratio);
  return 4 * d + 3 * d * d + linear_parameter_count(d, d) + linear_parameter_count(d, hidden) +
         linear_parameter_count(hidden, d);
}

std::size_t head_parameter_count(const ModelConfig& c) {
  return linear_parameter_count(c.trunk_dim(), c.head_hidden) +
         linear_parameter_count(c.head_hidden, OutputHead::kOutputs);
}

std::size_t trunk_parameter_count(const ModelConfig& c) {
  return c.outlooker_blocks * outlooker_parameter_count(c) + downsample_parameter_count(c) +
         c.transformer_blocks * transformer_parameter_count(c) + 2 * c.trunk_dim();
}

}  // namespace mivolo
