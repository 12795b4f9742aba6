#include "mivolo/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mivolo/error.hpp"

namespace mivolo {

namespace {
void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  if (a.empty()) throw InputError(std::string(what) + ": empty input");
}
}  // namespace

double mae(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

double cs_at(std::span<const double> pred, std::span<const double> target, double l) {
  check_pair(pred, target, "cs_at");
  if (!(l >= 0.0)) throw InputError("cs_at: l must be non-negative");
  std::size_t within = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (std::abs(pred[i] - target[i]) <= l) ++within;
  return 100.0 * static_cast<double>(within) / static_cast<double>(pred.size());
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (predicted.empty()) throw InputError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predicted.size());
}

ClassRanges::ClassRanges(std::vector<std::pair<double, double>> ranges) : ranges_(std::move(ranges)) {
  if (ranges_.empty()) throw InputError("class ranges are empty");
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    if (ranges_[i].first > ranges_[i].second)
      throw InputError("class range " + std::to_string(i) + " has lo > hi");
    if (i > 0 && ranges_[i].first <= ranges_[i - 1].second)
      throw InputError("class ranges must be ascending and non-overlapping");
  }
}

std::size_t ClassRanges::age_to_class(double age) const {
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    const auto [lo, hi] = ranges_[i];
    const double dist = age < lo ? lo - age : (age > hi ? age - hi : 0.0);
    if (i == 0 || dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

ClassRanges ClassRanges::adience() {
  return ClassRanges({{0, 2}, {4, 6}, {8, 13}, {15, 20}, {25, 32}, {38, 43}, {48, 53}, {60, 100}});
}

std::vector<AgeBinError> per_bin_mae(std::span<const double> pred, std::span<const double> target,
                                     double bin_width, double y_min, double y_max) {
  check_pair(pred, target, "per_bin_mae");
  if (!(bin_width > 0.0)) throw InputError("per_bin_mae: bin width must be positive");
  const auto bins = static_cast<std::size_t>(std::ceil((y_max - y_min) / bin_width));
  std::vector<AgeBinError> out(std::max<std::size_t>(bins, 1));
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].lo = y_min + bin_width * static_cast<double>(b);
    out[b].hi = out[b].lo + bin_width;
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double pos = std::floor((target[i] - y_min) / bin_width);
    auto b = pos > 0.0 ? std::min(static_cast<std::size_t>(pos), out.size() - 1) : 0;
    out[b].count++;
    out[b].mae += std::abs(pred[i] - target[i]);
  }
  for (auto& b : out)
    if (b.count) b.mae /= static_cast<double>(b.count);
  return out;
}

MetricsReport make_report(std::span<const double> pred_years, std::span<const double> target_years,
                          std::span<const int> pred_gender, std::span<const int> true_gender,
                          std::size_t excluded, double bin_width, double y_min, double y_max) {
  MetricsReport r;
  r.evaluated = pred_years.size();
  r.excluded = excluded;
  if (r.evaluated == 0) return r;
  r.mae = mae(pred_years, target_years);
  for (int l = 1; l <= 10; ++l) r.cs.push_back(cs_at(pred_years, target_years, l));
  r.gender_acc = accuracy(pred_gender, true_gender);
  r.bins = per_bin_mae(pred_years, target_years, bin_width, y_min, y_max);
  return r;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  os << "evaluated " << evaluated << '\n';
  os << "excluded " << excluded << '\n';
  if (evaluated == 0) return os.str();
  os << "mae " << num(mae) << '\n';
  for (std::size_t l = 0; l < cs.size(); ++l) os << "cs@" << l + 1 << ' ' << num(cs[l]) << '\n';
  os << "gender_acc " << num(gender_acc) << '\n';
  for (const auto& b : bins) {
    if (!b.count) continue;
    os << "mae_bin[" << b.lo << "," << b.hi << ") " << num(b.mae) << " n=" << b.count << '\n';
  }
  return os.str();
}

}  // namespace mivolo
