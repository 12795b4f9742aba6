#pragma once

#include <random>
#include <vector>

#include "mivolo/config.hpp"
#include "mivolo/nn.hpp"

namespace mivolo {

// Row-major grid of tokens: `tokens` is [height*width x channels].
struct TokenGrid {
  Tensor tokens;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t channels() const { return tokens.dim(1); }
  std::size_t count() const { return height * width; }
};

// Non-overlapping patch_size x patch_size patches projected to `dim` channels.
class PatchEmbedding {
 public:
  PatchEmbedding() = default;
  PatchEmbedding(std::size_t patch_size, std::size_t in_channels, std::size_t dim,
                 double init_std, std::mt19937_64& rng);

  // image: [in_channels x H x W], H and W divisible by patch_size.
  TokenGrid forward(const Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t patch_size() const { return patch_size_; }

  Linear proj;  // [in_channels*patch*patch x dim]

 private:
  std::size_t patch_size_ = 8;
  std::size_t in_channels_ = 3;
};

// Split [N x C] into heads: [heads x N x C/heads].
Tensor split_heads(const Tensor& x, std::size_t heads);
// Inverse of split_heads.
Tensor merge_heads(const Tensor& x);

// Outlook attention: each position's k^2 x k^2 attention over its local window
// comes straight from a linear projection of the centre token.
class OutlookAttention {
 public:
  OutlookAttention() = default;
  OutlookAttention(std::size_t dim, std::size_t kernel, std::size_t heads, double init_std,
                   std::mt19937_64& rng);

  TokenGrid forward(const TokenGrid& x) const;
  // Softmaxed weights, [heads x N x k^2 x k^2].
  Tensor attention_weights(const TokenGrid& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t kernel() const { return kernel_; }

  Linear value;
  Linear attn;
  Linear proj;

 private:
  std::size_t kernel_ = 3;
  std::size_t heads_ = 1;
};

class OutlookerBlock {
 public:
  OutlookerBlock() = default;
  OutlookerBlock(std::size_t dim, std::size_t kernel, std::size_t heads, double mlp_ratio,
                 double eps, double init_std, std::mt19937_64& rng);

  TokenGrid forward(const TokenGrid& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm1;
  OutlookAttention attention;
  LayerNorm norm2;
  Mlp mlp;
};

// 2x2 patch merge by linear projection, [h x w x C] -> [h/2 x w/2 x out].
class Downsample {
 public:
  Downsample() = default;
  Downsample(std::size_t in_dim, std::size_t out_dim, double init_std, std::mt19937_64& rng);

  TokenGrid forward(const TokenGrid& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear proj;  // [4*in x out]
};

// Multi-head scaled dot-product attention. Queries come from `x`, keys and
// values from `context` (pass `x` twice for self-attention).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, double init_std, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const Tensor& context) const;
  // Softmaxed weights, [heads x Nq x Nk].
  Tensor attention_weights(const Tensor& x, const Tensor& context) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t heads() const { return heads_; }

  Linear query;
  Linear key;
  Linear value;
  Linear proj;

 private:
  std::size_t heads_ = 1;
};

class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, double mlp_ratio, double eps,
                   double init_std, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  LayerNorm norm1;
  MultiHeadAttention attention;
  LayerNorm norm2;
  Mlp mlp;
};

// Mean-pooled tokens through two linear layers to one joint 3-vector:
// [0:2] gender logits, [2] normalized age.
class OutputHead {
 public:
  OutputHead() = default;
  OutputHead(std::size_t dim, std::size_t hidden, double init_std, std::mt19937_64& rng);

  Tensor forward(const Tensor& tokens) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear fc1;
  Linear fc2;

  static constexpr std::size_t kOutputs = 3;
};

// Outlookers -> downsample -> transformers -> final norm.
class VoloTrunk {
 public:
  VoloTrunk() = default;
  VoloTrunk(const ModelConfig& config, std::mt19937_64& rng);

  // Returns [N' x 2C] tokens after the final norm.
  Tensor forward(const TokenGrid& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  // Shapes after every stage, for tracing.
  std::vector<Shape> trace_shapes(const TokenGrid& x) const;

  std::vector<OutlookerBlock> outlookers;
  Downsample downsample;
  std::vector<TransformerBlock> transformers;
  LayerNorm norm;
};

std::size_t count_parameters(const ParameterList& params);

// Closed-form counts derived from the config alone.
std::size_t linear_parameter_count(std::size_t in, std::size_t out);
std::size_t patch_embedding_parameter_count(const ModelConfig& config);
std::size_t outlooker_parameter_count(const ModelConfig& config);
std::size_t downsample_parameter_count(const ModelConfig& config);
std::size_t transformer_parameter_count(const ModelConfig& config);
std::size_t head_parameter_count(const ModelConfig& config);
std::size_t trunk_parameter_count(const ModelConfig& config);

}  // namespace mivolo
