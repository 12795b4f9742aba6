#include "mivolo/votes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "mivolo/error.hpp"

namespace mivolo {

using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::pair<AggregationMethod, std::string>>& method_names() {
  static const std::vector<std::pair<AggregationMethod, std::string>> names = {
      {AggregationMethod::mean, "mean"},
      {AggregationMethod::median, "median"},
      {AggregationMethod::interquartile_mean, "interquartile_mean"},
      {AggregationMethod::mode, "mode"},
      {AggregationMethod::max_likelihood, "max_likelihood"},
      {AggregationMethod::winsorized_mean, "winsorized_mean"},
      {AggregationMethod::truncated_mean, "truncated_mean"},
      {AggregationMethod::weighted_mean, "weighted_mean"},
  };
  return names;
}

void require_votes(const std::vector<double>& v) {
  if (v.empty()) throw InputError("no votes to aggregate");
  for (double x : v)
    if (!std::isfinite(x)) throw InputError("non-finite vote");
}

// Per-tail cut count; the epsilon keeps 0.3 * 10 at 3.
std::size_t tail_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

AggregationMethod parse_method(const std::string& name) {
  for (const auto& [m, s] : method_names())
    if (s == name) return m;
  throw InputError("unknown aggregation method '" + name + "'");
}

std::string method_name(AggregationMethod m) {
  for (const auto& [mm, s] : method_names())
    if (mm == m) return s;
  return "?";
}

const std::vector<AggregationMethod>& all_methods() {
  static const std::vector<AggregationMethod> methods = [] {
    std::vector<AggregationMethod> out;
    for (const auto& [m, s] : method_names()) out.push_back(m);
    return out;
  }();
  return methods;
}

double weighted_mean_age(const std::vector<double>& votes, const std::vector<double>& user_maes,
                         double mae_floor) {
  require_votes(votes);
  if (votes.size() != user_maes.size()) throw DimensionError("one MAE per vote required");
  // Subtract the largest exponent before exponentiating; the ratio is unchanged.
  std::vector<double> expo(votes.size());
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (!(user_maes[i] >= 0.0)) throw InputError("user MAE must be non-negative");
    expo[i] = 1.0 / std::max(user_maes[i], mae_floor);
  }
  const double top = *std::max_element(expo.begin(), expo.end());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    const double w = std::exp(expo[i] - top);
    num += w * votes[i];
    den += w;
  }
  return num / den;
}

double mean_of(std::vector<double> v) {
  require_votes(v);
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  require_votes(v);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double interquartile_mean(std::vector<double> v) {
  require_votes(v);
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  const double lo = 0.25 * n, hi = 0.75 * n;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double w = std::max(0.0, std::min<double>(i + 1, hi) - std::max<double>(i, lo));
    sum += w * v[i];
  }
  return sum / (hi - lo);
}

double mode_of(std::vector<double> v) {
  require_votes(v);
  std::sort(v.begin(), v.end());
  double best = v[0];
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    if (j - i > best_count) {
      best_count = j - i;
      best = v[i];
    }
    i = j;
  }
  return best;
}

double kde_mode(const std::vector<double>& v, double bandwidth, double grid_step) {
  require_votes(v);
  if (!(bandwidth > 0.0) || !(grid_step > 0.0)) throw ConfigError("KDE bandwidth and grid step must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double per_unit = 1.0 / grid_step;
  const auto first = static_cast<long long>(std::floor(*lo_it * per_unit));
  const auto last = static_cast<long long>(std::ceil(*hi_it * per_unit));
  std::vector<double> grid, density;
  for (long long i = first; i <= last; ++i) {
    const double g = static_cast<double>(i) / per_unit;
    double d = 0.0;
    for (double x : v) {
      const double z = (g - x) / bandwidth;
      d += std::exp(-0.5 * z * z);
    }
    grid.push_back(g);
    density.push_back(d);
  }
  const double peak = *std::max_element(density.begin(), density.end());
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (density[i] >= peak * (1.0 - 1e-12)) return grid[i];
  return grid.front();
}

double winsorized_mean(std::vector<double> v, double fraction) {
  require_votes(v);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t k = std::min(tail_count(n, fraction), (n - 1) / 2);
  for (std::size_t i = 0; i < k; ++i) {
    v[i] = v[k];
    v[n - 1 - i] = v[n - 1 - k];
  }
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
}

double truncated_mean(std::vector<double> v, double fraction) {
  require_votes(v);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t k = tail_count(n, fraction);
  if (2 * k >= n) return median_of(std::move(v));
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(k),
                         v.end() - static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(n - 2 * k);
}

double baseline_aggregate(const std::vector<double>& votes, AggregationMethod method,
                          const VoteParams& params) {
  switch (method) {
    case AggregationMethod::mean: return mean_of(votes);
    case AggregationMethod::median: return median_of(votes);
    case AggregationMethod::interquartile_mean: return interquartile_mean(votes);
    case AggregationMethod::mode: return mode_of(votes);
    case AggregationMethod::max_likelihood:
      return kde_mode(votes, params.kde_bandwidth, params.kde_grid_step);
    case AggregationMethod::winsorized_mean: return winsorized_mean(votes, params.winsor_fraction);
    case AggregationMethod::truncated_mean: return truncated_mean(votes, params.truncate_fraction);
    case AggregationMethod::weighted_mean: break;
  }
  throw InputError("weighted_mean needs per-user MAEs");
}

GenderVerdict aggregate_gender(const std::vector<Gender>& votes, double min_frequency) {
  if (votes.empty()) throw InputError("no gender votes to aggregate");
  const auto male = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), Gender::male));
  const std::size_t female = votes.size() - male;
  GenderVerdict out;
  const std::size_t top = std::max(male, female);
  out.frequency = static_cast<double>(top) / static_cast<double>(votes.size());
  // An exact tie can never reach the threshold unless it is <= 0.5.
  if (male != female && out.frequency >= min_frequency)
    out.gender = male > female ? Gender::male : Gender::female;
  return out;
}

std::vector<UserStat> score_users(const std::vector<ControlAnswer>& answers) {
  std::map<std::string, std::vector<double>> errors;
  for (const auto& a : answers) {
    if (!std::isfinite(a.voted) || !std::isfinite(a.truth)) throw InputError("non-finite control answer");
    errors[a.user].push_back(std::abs(a.voted - a.truth));
  }
  std::vector<UserStat> out;
  for (const auto& [user, errs] : errors) {
    UserStat s;
    s.user = user;
    s.controls = errs.size();
    std::size_t within = 0;
    for (double e : errs) {
      s.mae += e;
      within += e <= 3.0;
    }
    s.mae /= static_cast<double>(errs.size());
    s.cs3 = 100.0 * static_cast<double>(within) / static_cast<double>(errs.size());
    out.push_back(s);
  }
  return out;
}

std::vector<TaskResult> aggregate_tasks(const std::vector<Vote>& votes,
                                        const std::vector<UserStat>& users,
                                        AggregationMethod method, const VoteParams& params) {
  std::unordered_map<std::string, double> mae;
  for (const auto& u : users) mae[u.user] = u.mae;

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const Vote*>> by_task;
  for (const auto& v : votes) {
    auto [it, fresh] = by_task.try_emplace(v.task);
    if (fresh) order.push_back(v.task);
    it->second.push_back(&v);
  }

  std::vector<TaskResult> out;
  for (const auto& task : order) {
    const auto& tv = by_task[task];
    std::set<std::string> seen;
    std::vector<double> ages, maes;
    std::vector<Gender> genders;
    for (const Vote* v : tv) {
      if (!seen.insert(v->user).second)
        throw InputError("user " + v->user + " voted twice on task " + task);
      ages.push_back(v->age);
      if (v->gender) genders.push_back(*v->gender);
      if (method == AggregationMethod::weighted_mean) {
        const auto it = mae.find(v->user);
        if (it == mae.end()) throw InputError("user " + v->user + " has no control answers");
        maes.push_back(it->second);
      }
    }
    TaskResult r;
    r.task = task;
    r.votes = ages.size();
    r.age = method == AggregationMethod::weighted_mean
                ? weighted_mean_age(ages, maes, params.mae_floor)
                : baseline_aggregate(ages, method, params);
    if (!genders.empty()) r.gender = aggregate_gender(genders, params.gender_min_frequency).gender;
    out.push_back(r);
  }
  return out;
}

namespace {

template <typename F>
void for_each_line(const std::string& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string id_of(const ojson& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

}  // namespace

std::vector<Vote> read_votes(const std::string& path) {
  std::vector<Vote> out;
  for_each_line(path, [&](const ojson& j) {
    Vote v;
    v.task = id_of(j.at("task"));
    v.user = id_of(j.at("user"));
    v.age = j.at("age").get<double>();
    if (j.contains("gender") && !j.at("gender").is_null())
      v.gender = parse_gender(j.at("gender").get<std::string>());
    out.push_back(std::move(v));
  });
  return out;
}

std::vector<ControlAnswer> read_controls(const std::string& path) {
  std::vector<ControlAnswer> out;
  for_each_line(path, [&](const ojson& j) {
    out.push_back({id_of(j.at("user")), j.at("voted").get<double>(), j.at("truth").get<double>()});
  });
  return out;
}

void write_task_results(const std::string& path, const std::vector<TaskResult>& results) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& r : results) {
    ojson j;
    j["task"] = r.task;
    j["age"] = r.age;
    j["gender"] = r.gender ? gender_name(*r.gender) : "rejected";
    j["votes"] = r.votes;
    out << j.dump() << '\n';
  }
}

void write_user_report(const std::string& path, const std::vector<UserStat>& users) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& u : users) {
    ojson j;
    j["user"] = u.user;
    j["mae"] = u.mae;
    j["cs3"] = u.cs3;
    j["controls"] = u.controls;
    out << j.dump() << '\n';
  }
}

}  // namespace mivolo
