#pragma once

#include <string>
#include <vector>

namespace cmpg {

// One recorded control step of an evaluation episode.
struct StepRecord {
  double time = 0.0;
  double px = 0.0, py = 0.0, phi = 0.0;
  double v_lon = 0.0, v_lat = 0.0, yaw_rate = 0.0;
  double a = 0.0, steer = 0.0;  // applied action
  double r = 0.0, c = 0.0;
  int d = 0;
  int path_id = 0;
  double delta_v = 0.0;               // speed tracking error
  double decision_ms = 0.0;           // encode + policy forward wall time
  std::vector<double> attention;      // set-encoder weights, empty when N/A
  int red_entry = 0;
  int offroad = 0;                    // drivable-area boundary violation
  int collision = 0;                  // STP overlap this step
};

struct EpisodeLog {
  std::string scenario;     // battery entry name
  std::string task;         // grouping key
  std::string composition;  // grouping key
  uint64_t episode = 0;
  double dt = 0.1;
  bool completed = false;
  bool collided = false;
  double duration_s = 0.0;
  std::vector<StepRecord> steps;
};

struct MetricsReport {
  double i_time = 0.0;     // mean per-step decision latency, ms
  double i_comfort = 0.0;  // RMS total acceleration magnitude, m/s^2
  double i_traffic = 0.0;  // mean completion time over completed episodes, s
  long i_safety = 0;       // total collision events across all steps
  double i_failure = 0.0;  // fraction of episodes that did not complete
  long i_comp = 0;         // red-light entries + drivable-area exits
  long episodes = 0;
  long completed = 0;
  long steps = 0;

  std::string to_json() const;
  std::string to_table() const;  // fixed row order, one metric per line
};

// Aggregates a whole evaluation run. Empty input is an error.
MetricsReport compute_metrics(const std::vector<EpisodeLog>& logs);

// Per-group mean/variance rows (population variance, so groups recombine
// exactly into the pooled statistics).
struct GroupStats {
  std::string key;
  long episodes = 0;
  long completed = 0;  // weight for the pass-time statistic
  long steps = 0;      // weight for the per-step statistics
  double pass_time_mean = 0.0, pass_time_var = 0.0;
  double steer_mean = 0.0, steer_var = 0.0;
  double dv_mean = 0.0, dv_var = 0.0;  // |velocity error| statistics
  double accel_mean = 0.0, accel_var = 0.0;

  static std::string tsv_header();
  std::string to_tsv_row() const;
};

// `group_by` is "task" or "composition"; anything else is rejected by name.
std::vector<GroupStats> group_stats(const std::vector<EpisodeLog>& logs,
                                    const std::string& group_by);

// Total acceleration magnitude of one step: commanded longitudinal plus the
// centripetal component implied by the current speed and yaw rate.
double step_accel(const StepRecord& s);

}  // namespace cmpg
