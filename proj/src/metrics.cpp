#include "cmpg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "cmpg/errors.hpp"

namespace cmpg {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Streaming mean/variance accumulator (population variance).
struct Moments {
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return n > 0 ? sum / double(n) : 0.0; }
  double var() const {
    if (n == 0) return 0.0;
    double m = mean();
    return std::max(0.0, sumsq / double(n) - m * m);
  }
};

}  // namespace

double step_accel(const StepRecord& s) {
  return std::hypot(s.a, s.v_lon * s.yaw_rate);
}

MetricsReport compute_metrics(const std::vector<EpisodeLog>& logs) {
  if (logs.empty()) throw UsageError("compute_metrics: no episodes");
  MetricsReport rep;
  double decision_sum = 0.0, accel_sq_sum = 0.0, pass_time_sum = 0.0;
  for (const EpisodeLog& ep : logs) {
    ++rep.episodes;
    if (ep.completed) {
      ++rep.completed;
      pass_time_sum += ep.duration_s;
    }
    for (const StepRecord& s : ep.steps) {
      ++rep.steps;
      decision_sum += s.decision_ms;
      double acc = step_accel(s);
      accel_sq_sum += acc * acc;
      rep.i_safety += s.collision;
      rep.i_comp += s.red_entry + s.offroad;
    }
  }
  if (rep.steps > 0) {
    rep.i_time = decision_sum / double(rep.steps);
    rep.i_comfort = std::sqrt(accel_sq_sum / double(rep.steps));
  }
  if (rep.completed > 0) rep.i_traffic = pass_time_sum / double(rep.completed);
  rep.i_failure = double(rep.episodes - rep.completed) / double(rep.episodes);
  return rep;
}

std::string MetricsReport::to_json() const {
  std::string s = "{\"i_time\":" + fmt_g17(i_time);
  s += ",\"i_comfort\":" + fmt_g17(i_comfort);
  s += ",\"i_traffic\":" + fmt_g17(i_traffic);
  s += ",\"i_safety\":" + std::to_string(i_safety);
  s += ",\"i_failure\":" + fmt_g17(i_failure);
  s += ",\"i_comp\":" + std::to_string(i_comp);
  s += ",\"episodes\":" + std::to_string(episodes);
  s += ",\"completed\":" + std::to_string(completed);
  s += ",\"steps\":" + std::to_string(steps);
  s += "}";
  return s;
}

std::vector<GroupStats> group_stats(const std::vector<EpisodeLog>& logs,
                                    const std::string& group_by) {
  if (group_by != "task" && group_by != "composition")
    throw UsageError("group_stats: unknown grouping tag '" + group_by +
                     "' (expected \"task\" or \"composition\")");
  if (logs.empty()) throw UsageError("group_stats: no episodes");

  struct Acc {
    Moments pass_time, steer, dv, accel;
    long episodes = 0;
  };
  std::map<std::string, Acc> by_key;
  for (const EpisodeLog& ep : logs) {
    Acc& a = by_key[group_by == "task" ? ep.task : ep.composition];
    ++a.episodes;
    if (ep.completed) a.pass_time.add(ep.duration_s);
    for (const StepRecord& s : ep.steps) {
      a.steer.add(s.steer);
      a.dv.add(std::abs(s.delta_v));
      a.accel.add(step_accel(s));
    }
  }
  std::vector<GroupStats> out;
  for (const auto& [key, a] : by_key) {
    GroupStats g;
    g.key = key;
    g.episodes = a.episodes;
    g.completed = a.pass_time.n;
    g.steps = a.steer.n;
    g.pass_time_mean = a.pass_time.mean();
    g.pass_time_var = a.pass_time.var();
    g.steer_mean = a.steer.mean();
    g.steer_var = a.steer.var();
    g.dv_mean = a.dv.mean();
    g.dv_var = a.dv.var();
    g.accel_mean = a.accel.mean();
    g.accel_var = a.accel.var();
    out.push_back(std::move(g));
  }
  return out;
}

std::string MetricsReport::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-20s %s\n"
                "%-20s %.4f\n"
                "%-20s %.4f\n"
                "%-20s %.4f\n"
                "%-20s %ld\n"
                "%-20s %.4f\n"
                "%-20s %ld\n",
                "metric", "value", "I_time (ms)", i_time, "I_comfort (m/s^2)", i_comfort,
                "I_traffic (s)", i_traffic, "I_safety", i_safety, "I_failure", i_failure,
                "I_comp", i_comp);
  return buf;
}

std::string GroupStats::tsv_header() {
  return "key\tepisodes\tcompleted\tsteps\tpass_time_mean\tpass_time_var\tsteer_mean\tsteer_var"
         "\tdv_mean\tdv_var\taccel_mean\taccel_var";
}

std::string GroupStats::to_tsv_row() const {
  std::string s = key;
  s += "\t" + std::to_string(episodes);
  s += "\t" + std::to_string(completed);
  s += "\t" + std::to_string(steps);
  s += "\t" + fmt_g17(pass_time_mean);
  s += "\t" + fmt_g17(pass_time_var);
  s += "\t" + fmt_g17(steer_mean);
  s += "\t" + fmt_g17(steer_var);
  s += "\t" + fmt_g17(dv_mean);
  s += "\t" + fmt_g17(dv_var);
  s += "\t" + fmt_g17(accel_mean);
  s += "\t" + fmt_g17(accel_var);
  return s;
}

}  // namespace cmpg
