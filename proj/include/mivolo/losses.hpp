#pragma once

#include <span>
#include <vector>

#include "mivolo/config.hpp"
#include "mivolo/tensor.hpp"

namespace mivolo {

// Min-max age scaling to [0, 1].
class AgeNormalizer {
 public:
  AgeNormalizer(double y_min, double y_max);
  explicit AgeNormalizer(const ModelConfig& config)
      : AgeNormalizer(config.y_min, config.y_max) {}

  double normalize(double years) const { return (years - y_min_) / (y_max_ - y_min_); }
  // Clamped to [y_min, y_max].
  double denormalize(double value) const;
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }

 private:
  double y_min_;
  double y_max_;
};

// Label distribution smoothing: per-bin weights inversely proportional to the
// kernel-smoothed label density, scaled so the table mean is 1.
class LdsWeights {
 public:
  struct Params {
    double y_min = 0.0;
    double y_max = 100.0;
    double bin_width = 1.0;
    bool gaussian = true;
    std::size_t kernel_size = 5;
    double sigma = 2.0;
  };

  static Params params_from(const ModelConfig& config);

  LdsWeights(std::span<const double> ages, const Params& params);

  // Ages outside the table support clamp to the nearest bin.
  double weight_for(double age) const;
  std::size_t bin_of(double age) const;

  const std::vector<double>& histogram() const { return histogram_; }
  const std::vector<double>& smoothed() const { return smoothed_; }
  const std::vector<double>& table() const { return table_; }

  // Symmetric window normalized to a peak of 1; a single 1 when disabled.
  static std::vector<double> kernel_window(const Params& params);
  // Convolution with scipy's default 'reflect' boundary (d c b a | a b c d | d c b a).
  static std::vector<double> smooth(std::span<const double> histogram,
                                    std::span<const double> kernel);

 private:
  Params params_;
  std::vector<double> histogram_;
  std::vector<double> smoothed_;
  std::vector<double> table_;
};

// Plain-value forms.
double weighted_mse(std::span<const double> pred, std::span<const double> target,
                    std::span<const double> weights);
double gender_cross_entropy(std::span<const double> logits2, int label);

// Differentiable forms, recorded on the active tape.
// mean_i w_i (pred_i - target_i)^2; pred is [n].
Tensor weighted_mse(const Tensor& pred, std::span<const double> target,
                    std::span<const double> weights);
// Mean softmax cross-entropy over [n x 2] logits; labels in {0, 1}.
Tensor gender_loss(const Tensor& logits, std::span<const int> labels);
// age_loss + w_gender * gender_loss
Tensor combined_loss(const Tensor& age_loss, const Tensor& gender_loss, double w_gender);

}  // namespace mivolo
