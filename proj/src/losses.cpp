#include "mivolo/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mivolo/error.hpp"

namespace mivolo {

AgeNormalizer::AgeNormalizer(double y_min, double y_max) : y_min_(y_min), y_max_(y_max) {
  if (!(y_max > y_min)) throw ConfigError("age normalizer needs y_max > y_min");
}

double AgeNormalizer::denormalize(double value) const {
  return std::clamp(y_min_ + value * (y_max_ - y_min_), y_min_, y_max_);
}

// ---- LDS ------------------------------------------------------------------

LdsWeights::Params LdsWeights::params_from(const ModelConfig& c) {
  return {c.y_min, c.y_max, c.lds_bin_width, c.lds_kernel == "gaussian", c.lds_kernel_size,
          c.lds_sigma};
}

std::vector<double> LdsWeights::kernel_window(const Params& p) {
  if (!p.gaussian || p.kernel_size <= 1) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(p.kernel_size / 2);
  std::vector<double> k;
  for (std::ptrdiff_t d = -radius; d <= radius; ++d)
    k.push_back(std::exp(-static_cast<double>(d * d) / (2.0 * p.sigma * p.sigma)));
  const double peak = *std::max_element(k.begin(), k.end());
  for (auto& v : k) v /= peak;
  return k;
}

std::vector<double> LdsWeights::smooth(std::span<const double> histogram,
                                       std::span<const double> kernel) {
  const auto n = static_cast<std::ptrdiff_t>(histogram.size());
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  auto reflect = [n](std::ptrdiff_t i) {
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
  };
  std::vector<double> out(histogram.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t d = -radius; d <= radius; ++d)
      acc += kernel[static_cast<std::size_t>(d + radius)] *
             histogram[static_cast<std::size_t>(reflect(i + d))];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

LdsWeights::LdsWeights(std::span<const double> ages, const Params& params) : params_(params) {
  if (!(params.y_max > params.y_min) || !(params.bin_width > 0.0))
    throw ConfigError("LDS needs y_max > y_min and a positive bin width");
  if (ages.empty()) throw InputError("LDS needs a non-empty label histogram");
  const auto bins =
      static_cast<std::size_t>(std::floor((params.y_max - params.y_min) / params.bin_width)) + 1;
  histogram_.assign(bins, 0.0);
  for (double a : ages) histogram_[bin_of(a)] += 1.0;

  smoothed_ = smooth(histogram_, kernel_window(params));
  double min_positive = 0.0;
  for (double s : smoothed_)
    if (s > 0.0 && (min_positive == 0.0 || s < min_positive)) min_positive = s;
  // Bins with no smoothed mass get the rarest observed bin's weight.
  table_.resize(bins);
  for (std::size_t i = 0; i < bins; ++i)
    table_[i] = 1.0 / (smoothed_[i] > 0.0 ? smoothed_[i] : min_positive);
  double mean = 0.0;
  for (double w : table_) mean += w;
  mean /= static_cast<double>(bins);
  for (auto& w : table_) w /= mean;
}

std::size_t LdsWeights::bin_of(double age) const {
  const double pos = std::floor((age - params_.y_min) / params_.bin_width);
  if (!(pos > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(pos), histogram_.size() - 1);
}

double LdsWeights::weight_for(double age) const { return table_[bin_of(age)]; }

// ---- plain losses ---------------------------------------------------------

double weighted_mse(std::span<const double> pred, std::span<const double> target,
                    std::span<const double> weights) {
  if (pred.size() != target.size() || pred.size() != weights.size())
    throw DimensionError("weighted_mse: length mismatch (" + std::to_string(pred.size()) + ", " +
                         std::to_string(target.size()) + ", " + std::to_string(weights.size()) +
                         ")");
  if (pred.empty()) throw InputError("weighted_mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += weights[i] * d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double gender_cross_entropy(std::span<const double> logits2, int label) {
  if (logits2.size() != 2) throw DimensionError("gender_cross_entropy: expected two logits");
  if (label != 0 && label != 1) throw InputError("gender label must be 0 or 1");
  const double mx = std::max(logits2[0], logits2[1]);
  const double lse = mx + std::log(std::exp(logits2[0] - mx) + std::exp(logits2[1] - mx));
  return lse - logits2[static_cast<std::size_t>(label)];
}

// ---- differentiable losses ------------------------------------------------

Tensor weighted_mse(const Tensor& pred, std::span<const double> target,
                    std::span<const double> weights) {
  const double value = weighted_mse(pred.data(), target, weights);
  const bool tracked = detail::wants_grad({&pred});
  Tensor result = detail::make_result({1}, {value}, tracked);
  if (tracked) {
    std::vector<double> t(target.begin(), target.end()), w(weights.begin(), weights.end());
    Tape::active()->record({pred.impl()}, result.impl(),
                           [P = pred.impl(), t = std::move(t), w = std::move(w)](const TensorImpl& o) {
                             P->ensure_grad();
                             const double inv_n = 1.0 / static_cast<double>(t.size());
                             for (std::size_t i = 0; i < t.size(); ++i)
                               P->grad[i] += o.grad[0] * 2.0 * w[i] * (P->data[i] - t[i]) * inv_n;
                           });
  }
  return result;
}

Tensor gender_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2 || logits.dim(0) != labels.size())
    throw DimensionError("gender_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  const std::size_t n = labels.size();
  auto lv = logits.data();
  double total = 0.0;
  std::vector<double> probs(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    total += gender_cross_entropy(lv.subspan(2 * i, 2), labels[i]);
    const double mx = std::max(lv[2 * i], lv[2 * i + 1]);
    const double e0 = std::exp(lv[2 * i] - mx), e1 = std::exp(lv[2 * i + 1] - mx);
    probs[2 * i] = e0 / (e0 + e1);
    probs[2 * i + 1] = e1 / (e0 + e1);
  }
  const bool tracked = detail::wants_grad({&logits});
  Tensor result = detail::make_result({1}, {total / static_cast<double>(n)}, tracked);
  if (tracked) {
    std::vector<int> y(labels.begin(), labels.end());
    Tape::active()->record({logits.impl()}, result.impl(),
                           [L = logits.impl(), probs = std::move(probs), y = std::move(y)](
                               const TensorImpl& o) {
                             L->ensure_grad();
                             const double scale = o.grad[0] / static_cast<double>(y.size());
                             for (std::size_t i = 0; i < y.size(); ++i)
                               for (std::size_t c = 0; c < 2; ++c)
                                 L->grad[2 * i + c] +=
                                     scale * (probs[2 * i + c] - (y[i] == static_cast<int>(c) ? 1.0 : 0.0));
                           });
  }
  return result;
}

Tensor combined_loss(const Tensor& age_loss, const Tensor& gender_loss, double w_gender) {
  return add(age_loss, scale(gender_loss, w_gender));
}

}  // namespace mivolo
