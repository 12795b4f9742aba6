#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mivolo {

double mae(std::span<const double> pred_years, std::span<const double> target_years);

// Percentage of samples with |pred - target| <= l.
double cs_at(std::span<const double> pred_years, std::span<const double> target_years, double l);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Ordered, non-overlapping inclusive year ranges.
class ClassRanges {
 public:
  explicit ClassRanges(std::vector<std::pair<double, double>> ranges);

  // Range containing `age`; in a gap, the nearest range by boundary distance
  // with ties going to the lower index.
  std::size_t age_to_class(double age) const;
  std::size_t size() const { return ranges_.size(); }
  const std::vector<std::pair<double, double>>& ranges() const { return ranges_; }

  // 0-2, 4-6, 8-13, 15-20, 25-32, 38-43, 48-53, 60-100
  static ClassRanges adience();

 private:
  std::vector<std::pair<double, double>> ranges_;
};

struct AgeBinError {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mae = 0.0;
};

// MAE over ground-truth age bins [lo, lo + width).
std::vector<AgeBinError> per_bin_mae(std::span<const double> pred_years,
                                     std::span<const double> target_years, double bin_width,
                                     double y_min, double y_max);

struct MetricsReport {
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  double mae = 0.0;
  std::vector<double> cs;  // cs[l-1] = CS@l for l = 1..10
  double gender_acc = 0.0;
  std::vector<AgeBinError> bins;

  // One "key value" pair per line.
  std::string to_text() const;
};

MetricsReport make_report(std::span<const double> pred_years, std::span<const double> target_years,
                          std::span<const int> pred_gender, std::span<const int> true_gender,
                          std::size_t excluded, double bin_width, double y_min, double y_max);

}  // namespace mivolo
