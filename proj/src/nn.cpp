#include "mivolo/nn.hpp"

#include <cmath>

namespace mivolo {

Tensor trunc_normal(const Shape& shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) {
    double z = normal(rng);
    while (std::abs(z) > 2.0) z = normal(rng);
    v = z * std;
  }
  return Tensor(shape, std::move(values));
}

Tensor dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.drop_rate <= 0.0 || !ctx.rng) return x;
  std::bernoulli_distribution keep(1.0 - ctx.drop_rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(*ctx.rng) ? 1.0 : 0.0;
  return apply_mask(x, mask, 1.0 / (1.0 - ctx.drop_rate));
}

Tensor drop_path(const Tensor& branch, const ForwardContext& ctx) {
  if (!ctx.training || ctx.drop_path_rate <= 0.0 || !ctx.rng) return branch;
  std::bernoulli_distribution keep(1.0 - ctx.drop_path_rate);
  return scale(branch, keep(*ctx.rng) ? 1.0 / (1.0 - ctx.drop_path_rate) : 0.0);
}

Linear::Linear(std::size_t in, std::size_t out, double init_std, std::mt19937_64& rng,
               bool with_bias)
    : weight(trunc_normal({in, out}, init_std, rng)) {
  if (with_bias) bias = Tensor::zeros({out});
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim, double eps)
    : gamma(Tensor::full({dim}, 1.0)), beta(Tensor::zeros({dim})), eps_(eps) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, double init_std,
         std::mt19937_64& rng)
    : fc1(in, hidden, init_std, rng), fc2(hidden, out, init_std, rng) {}

Tensor Mlp::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = dropout(gelu(fc1.forward(x)), ctx);
  return dropout(fc2.forward(h), ctx);
}

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

std::size_t hidden_width(std::size_t dim, double ratio) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(dim) * ratio));
}

}  // namespace mivolo
