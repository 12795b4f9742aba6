#pragma once

#include <random>
#include <string>
#include <vector>

#include "mivolo/tensor.hpp"

namespace mivolo {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

// Per-call forward state. Dropout and drop-path only act when `training`.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  double drop_rate = 0.0;
  double drop_path_rate = 0.0;
};

// Truncated normal at +-2 std; the sampling order is fixed so that equal seeds
// give equal weights.
Tensor trunc_normal(const Shape& shape, double std, std::mt19937_64& rng);

Tensor dropout(const Tensor& x, const ForwardContext& ctx);
// Stochastic depth on a residual branch: the whole branch is zeroed with
// probability drop_path_rate, otherwise rescaled.
Tensor drop_path(const Tensor& branch, const ForwardContext& ctx);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, double init_std, std::mt19937_64& rng,
         bool with_bias = true);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined for bias-free layers
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t dim, double eps);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps_); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor gamma;
  Tensor beta;

 private:
  double eps_ = 1e-6;
};

// fc1 -> GELU -> dropout -> fc2 -> dropout
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, double init_std, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear fc1;
  Linear fc2;
};

std::size_t hidden_width(std::size_t dim, double ratio);

}  // namespace mivolo
