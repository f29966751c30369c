#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmpg/battery.hpp"
#include "cmpg/config.hpp"
#include "cmpg/errors.hpp"
#include "cmpg/metrics.hpp"
#include "cmpg/trainer.hpp"
#include "cmpg/verify.hpp"

namespace {

using nlohmann::json;

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Options {
  std::string config;
  std::string out = "out";
  std::string resume;
  std::string suite = "all";
  std::string log_path;
  uint64_t seed = 0;
  int workers = 1;
};

void write_episode_log(const cmpg::EpisodeLog& ep, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw cmpg::UsageError("cannot open " + path + " for writing");
  f << "{\"scenario\":\"" << ep.scenario << "\",\"task\":\"" << ep.task
    << "\",\"composition\":\"" << ep.composition << "\",\"episode\":" << ep.episode
    << ",\"dt\":" << fmt_g17(ep.dt) << ",\"completed\":" << (ep.completed ? 1 : 0)
    << ",\"collided\":" << (ep.collided ? 1 : 0) << ",\"duration_s\":" << fmt_g17(ep.duration_s)
    << "}\n";
  for (const cmpg::StepRecord& s : ep.steps) {
    f << "{\"t\":" << fmt_g17(s.time) << ",\"px\":" << fmt_g17(s.px) << ",\"py\":" << fmt_g17(s.py)
      << ",\"phi\":" << fmt_g17(s.phi) << ",\"v_lon\":" << fmt_g17(s.v_lon)
      << ",\"v_lat\":" << fmt_g17(s.v_lat) << ",\"yaw_rate\":" << fmt_g17(s.yaw_rate)
      << ",\"a\":" << fmt_g17(s.a) << ",\"steer\":" << fmt_g17(s.steer)
      << ",\"r\":" << fmt_g17(s.r) << ",\"c\":" << fmt_g17(s.c) << ",\"d\":" << s.d
      << ",\"path_id\":" << s.path_id << ",\"delta_v\":" << fmt_g17(s.delta_v)
      << ",\"decision_ms\":" << fmt_g17(s.decision_ms) << ",\"red_entry\":" << s.red_entry
      << ",\"offroad\":" << s.offroad << ",\"collision\":" << s.collision << ",\"attention\":[";
    for (size_t k = 0; k < s.attention.size(); ++k) {
      if (k) f << ",";
      f << fmt_g17(s.attention[k]);
    }
    f << "]}\n";
  }
}

int run_train(const Options& opt) {
  cmpg::FullConfig cfg = cmpg::load_config(opt.config);
  cmpg::Trainer trainer(cfg, opt.seed, opt.workers);
  if (!opt.resume.empty()) trainer.load_checkpoint(opt.resume);
  cmpg::TrainResult res = trainer.train(opt.out);
  if (res.diverged) {
    std::fprintf(stderr, "training diverged after %ld iterations (see %s/logs/divergence.json)\n",
                 res.iterations, opt.out.c_str());
    return 3;
  }
  std::printf("trained %ld iterations, %llu episodes, %ld env steps -> %s/checkpoints/final.ckpt\n",
              res.iterations, (unsigned long long)res.episodes, res.env_steps, opt.out.c_str());
  return 0;
}

int run_eval(const Options& opt) {
  cmpg::FullConfig cfg = cmpg::load_config(opt.config);
  if (opt.resume.empty())
    throw cmpg::UsageError("eval requires --resume <checkpoint> naming the policy to evaluate");
  auto env = cmpg::make_env(cfg.scenario, cfg.encoder.max_stps, opt.seed);
  cmpg::Agent agent(cfg, *env);
  agent.init(opt.seed);
  cmpg::load_agent_params(agent, opt.resume);

  std::vector<cmpg::EpisodeLog> logs =
      cmpg::run_battery(cfg, agent, opt.seed, cfg.trainer.timing);

  namespace fs = std::filesystem;
  fs::create_directories(opt.out + "/logs");
  fs::create_directories(opt.out + "/reports");
  for (const cmpg::EpisodeLog& ep : logs) {
    write_episode_log(ep, opt.out + "/logs/traj_" + ep.scenario + "_" +
                              std::to_string(ep.episode) + ".jsonl");
  }
  cmpg::MetricsReport rep = cmpg::compute_metrics(logs);
  {
    std::ofstream f(opt.out + "/reports/metrics.json");
    f << rep.to_json() << "\n";
  }
  {
    std::ofstream f(opt.out + "/reports/metrics.txt");
    f << rep.to_table();
  }
  for (const char* key : {"task", "composition"}) {
    std::vector<cmpg::GroupStats> groups = cmpg::group_stats(logs, key);
    std::ofstream f(opt.out + "/reports/groups_" + std::string(key) + ".tsv");
    f << cmpg::GroupStats::tsv_header() << "\n";
    for (const cmpg::GroupStats& g : groups) f << g.to_tsv_row() << "\n";
  }
  std::printf("%s\n", rep.to_json().c_str());
  return 0;
}

int run_verify_cmd(const Options& opt) {
  cmpg::FullConfig cfg;
  if (!opt.config.empty()) cfg = cmpg::load_config(opt.config);
  cmpg::VerifyResult res = cmpg::run_verify(cfg, opt.suite, opt.seed, 100);
  std::fputs(res.report.c_str(), stdout);
  std::printf("verify %s: %d checks, %d failed, %.1f s\n", opt.suite.c_str(), res.checks,
              res.failures, res.wall_s);
  return res.pass ? 0 : 1;
}

// Parses one trajectory log back into plot-ready delimiter-separated series.
int run_replay(const Options& opt) {
  std::ifstream f(opt.log_path);
  if (!f) throw cmpg::UsageError("cannot open trajectory log '" + opt.log_path + "'");

  std::string linebuf;
  long lineno = 0;
  json meta;
  std::vector<json> steps;
  while (std::getline(f, linebuf)) {
    ++lineno;
    if (linebuf.empty()) continue;
    json row;
    try {
      row = json::parse(linebuf);
    } catch (const json::exception& e) {
      throw cmpg::UsageError("corrupt trajectory log at line " + std::to_string(lineno) + ": " +
                             e.what());
    }
    if (lineno == 1) {
      if (!row.contains("dt"))
        throw cmpg::UsageError("corrupt trajectory log at line 1: missing header fields");
      meta = std::move(row);
    } else {
      for (const char* key : {"t", "v_lon", "a", "steer", "path_id", "attention"})
        if (!row.contains(key))
          throw cmpg::UsageError("corrupt trajectory log at line " + std::to_string(lineno) +
                                 ": missing field '" + key + "'");
      steps.push_back(std::move(row));
    }
  }
  if (lineno == 0) throw cmpg::UsageError("empty trajectory log '" + opt.log_path + "'");
  if (steps.empty())
    throw cmpg::UsageError("trajectory log '" + opt.log_path + "' has a header but no steps");

  namespace fs = std::filesystem;
  fs::create_directories(opt.out + "/series");
  std::ofstream speed(opt.out + "/series/speed.tsv");
  std::ofstream accel(opt.out + "/series/accel.tsv");
  std::ofstream steer(opt.out + "/series/steer.tsv");
  std::ofstream attention(opt.out + "/series/attention.tsv");
  std::ofstream path_id(opt.out + "/series/path_id.tsv");
  speed << "t\tv_lon\n";
  accel << "t\ta_cmd\ta_total\n";
  steer << "t\tsteer\n";
  path_id << "t\tpath_id\n";
  size_t max_w = 0;
  for (const json& s : steps) max_w = std::max(max_w, s["attention"].size());
  attention << "t";
  for (size_t k = 0; k < max_w; ++k) attention << "\tw" << k;
  attention << "\n";

  for (size_t i = 0; i < steps.size(); ++i) {
    const json& s = steps[i];
    double t = s["t"].get<double>();
    double v_lon = s["v_lon"].get<double>();
    double yaw_rate = s.value("yaw_rate", 0.0);
    double a = s["a"].get<double>();
    speed << fmt_g17(t) << "\t" << fmt_g17(v_lon) << "\n";
    accel << fmt_g17(t) << "\t" << fmt_g17(a) << "\t" << fmt_g17(std::hypot(a, v_lon * yaw_rate))
          << "\n";
    steer << fmt_g17(t) << "\t" << fmt_g17(s["steer"].get<double>()) << "\n";
    path_id << fmt_g17(t) << "\t" << s["path_id"].get<int>() << "\n";

    const json& w = s["attention"];
    attention << fmt_g17(t);
    double sum = 0.0;
    for (size_t k = 0; k < max_w; ++k) {
      double v = k < w.size() ? w[k].get<double>() : 0.0;
      sum += v;
      attention << "\t" << fmt_g17(v);
    }
    attention << "\n";
    if (!w.empty() && std::abs(sum - 1.0) > 1e-6) {
      std::fprintf(stderr, "attention weights at step %zu sum to %.12f (expected 1)\n", i, sum);
      return 1;
    }
  }
  std::printf("replayed %zu steps -> %s/series\n", steps.size(), opt.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained mixed policy gradient driving framework"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* train = app.add_subcommand("train", "Train a policy");
  train->add_option("--config", opt.config, "Run config JSON")->required();
  train->add_option("--seed", opt.seed, "Master seed")->required();
  train->add_option("--out", opt.out, "Output directory");
  train->add_option("--resume", opt.resume, "Checkpoint to continue from");
  train->add_option("--workers", opt.workers, "Parallel episode collectors")
      ->check(CLI::PositiveNumber);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the scenario battery");
  eval->add_option("--config", opt.config, "Run config JSON")->required();
  eval->add_option("--seed", opt.seed, "Master seed")->required();
  eval->add_option("--out", opt.out, "Output directory");
  eval->add_option("--resume", opt.resume, "Checkpoint to evaluate")->required();

  CLI::App* verify = app.add_subcommand("verify", "Run self-verification suites");
  verify->add_option("--suite", opt.suite, "gradients | injectivity | all");
  verify->add_option("--config", opt.config, "Run config JSON (defaults apply when omitted)");
  verify->add_option("--seed", opt.seed, "Master seed");

  CLI::App* replay = app.add_subcommand("replay", "Emit plot series from a trajectory log");
  replay->add_option("log", opt.log_path, "Trajectory log (JSONL)")->required();
  replay->add_option("--out", opt.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (app.got_subcommand(train)) return run_train(opt);
    if (app.got_subcommand(eval)) return run_eval(opt);
    if (app.got_subcommand(verify)) return run_verify_cmd(opt);
    return run_replay(opt);
  } catch (const cmpg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cmpg::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 1;
  }
}
