#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mivolo/fusion.hpp"

namespace mivolo {

enum class AggregationMethod {
  mean,
  median,
  interquartile_mean,
  mode,
  max_likelihood,
  winsorized_mean,
  truncated_mean,
  weighted_mean,
};

AggregationMethod parse_method(const std::string& name);
std::string method_name(AggregationMethod m);
const std::vector<AggregationMethod>& all_methods();

struct VoteParams {
  double mae_floor = 0.5;
  double kde_bandwidth = 2.0;
  double kde_grid_step = 0.1;
  double winsor_fraction = 0.3;    // per tail; 3 of 10 replaced on each side
  double truncate_fraction = 0.3;  // per tail
  double gender_min_frequency = 0.75;
};

// sum v_i exp(1/max(mae_i, floor)) / sum exp(1/max(mae_i, floor))
double weighted_mean_age(const std::vector<double>& votes, const std::vector<double>& user_maes,
                         double mae_floor = 0.5);

double mean_of(std::vector<double> v);
double median_of(std::vector<double> v);
// Mean of the central half with fractional weights at the quartile cuts.
double interquartile_mean(std::vector<double> v);
// Most frequent value; ties go to the smallest.
double mode_of(std::vector<double> v);
// Mode of a Gaussian kernel density evaluated on a grid.
double kde_mode(const std::vector<double>& v, double bandwidth, double grid_step);
double winsorized_mean(std::vector<double> v, double fraction);
// Drops floor(fraction * n) values from each tail; median when nothing is left.
double truncated_mean(std::vector<double> v, double fraction);

// Any method except weighted_mean.
double baseline_aggregate(const std::vector<double>& votes, AggregationMethod method,
                          const VoteParams& params = {});

struct GenderVerdict {
  std::optional<Gender> gender;  // empty when rejected
  double frequency = 0.0;
};
GenderVerdict aggregate_gender(const std::vector<Gender>& votes, double min_frequency = 0.75);

struct ControlAnswer {
  std::string user;
  double voted = 0.0;
  double truth = 0.0;
};

struct UserStat {
  std::string user;
  double mae = 0.0;
  double cs3 = 0.0;  // percent of control answers within 3 years
  std::size_t controls = 0;
};
// One entry per user, sorted by user id.
std::vector<UserStat> score_users(const std::vector<ControlAnswer>& answers);

struct Vote {
  std::string task;
  std::string user;
  double age = 0.0;
  std::optional<Gender> gender;
};

struct TaskResult {
  std::string task;
  double age = 0.0;
  std::optional<Gender> gender;
  std::size_t votes = 0;
};

// Groups votes by task (in first-appearance order) and aggregates each task.
// Throws InputError for a voter without control answers (weighted_mean only)
// or a user voting twice on one task.
std::vector<TaskResult> aggregate_tasks(const std::vector<Vote>& votes,
                                        const std::vector<UserStat>& users,
                                        AggregationMethod method, const VoteParams& params = {});

// Newline-delimited JSON.
//   votes:    {"task": str, "user": str, "age": num, "gender": "male"|"female"|null}
//   controls: {"user": str, "voted": num, "truth": num}
//   results:  {"task", "age", "gender": "male"|"female"|"rejected", "votes"}
//   users:    {"user", "mae", "cs3", "controls"}
std::vector<Vote> read_votes(const std::string& path);
std::vector<ControlAnswer> read_controls(const std::string& path);
void write_task_results(const std::string& path, const std::vector<TaskResult>& results);
void write_user_report(const std::string& path, const std::vector<UserStat>& users);

}  // namespace mivolo
