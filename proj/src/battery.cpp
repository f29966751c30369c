#include "cmpg/battery.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cmpg/diff_model.hpp"
#include "cmpg/errors.hpp"
#include "cmpg/params.hpp"
#include "cmpg/rng.hpp"
#include "cmpg/scenario.hpp"

namespace cmpg {

namespace {

TrafficEntry traffic(const std::string& route, const std::string& type, double spawn, double start,
                     double speed) {
  TrafficEntry e;
  e.route = route;
  e.type = type;
  e.spawn_time_s = spawn;
  e.start_s = start;
  e.speed = speed;
  if (type == "pedestrian") {
    e.length = 0.6;
    e.width = 0.6;
  } else if (type == "cyclist") {
    e.length = 1.8;
    e.width = 0.6;
  }
  return e;
}

std::vector<TrafficEntry> vehicles_composition() {
  return {traffic("eb_through_0", "vehicle", 0.0, 0.0, 7.0),
          traffic("wb_through_1", "vehicle", 1.5, 4.0, 6.5),
          traffic("sb_through_0", "vehicle", 0.5, 0.0, 6.0)};
}

std::vector<TrafficEntry> pedestrians_composition() {
  return {traffic("ped_n_pos", "pedestrian", 0.0, 0.0, 1.4),
          traffic("ped_s_neg", "pedestrian", 2.0, 0.0, 1.2),
          traffic("cyc_e_neg", "cyclist", 1.0, 0.0, 3.0)};
}

std::vector<TrafficEntry> mixed_composition() {
  return {traffic("eb_through_0", "vehicle", 0.0, 0.0, 7.0),
          traffic("sb_through_0", "vehicle", 1.0, 0.0, 6.0),
          traffic("ped_n_pos", "pedestrian", 0.5, 0.0, 1.4),
          traffic("cyc_w_pos", "cyclist", 1.5, 0.0, 3.0)};
}

int argmax3(const std::vector<double>& x, int offset) {
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (x[size_t(offset + k)] > x[size_t(offset + best)]) best = k;
  return best;
}

}  // namespace

std::vector<BatteryEntry> default_battery() {
  struct Comp {
    const char* name;
    std::vector<TrafficEntry> traffic;
  };
  std::vector<Comp> comps;
  comps.push_back({"empty", {}});
  comps.push_back({"vehicles", vehicles_composition()});
  comps.push_back({"pedestrians", pedestrians_composition()});
  comps.push_back({"mixed", mixed_composition()});

  std::vector<BatteryEntry> out;
  for (const char* task : {"left", "straight", "right"}) {
    for (const Comp& comp : comps) {
      BatteryEntry e;
      e.name = std::string(task) + "_" + comp.name;
      e.composition = comp.name;
      e.task = task;
      e.path_select = "cycle";
      e.traffic = comp.traffic;
      e.traffic_overridden = true;
      e.episodes = 2;
      out.push_back(std::move(e));
    }
  }
  return out;
}

ScenarioConfig scenario_for_entry(const ScenarioConfig& base, const BatteryEntry& entry) {
  ScenarioConfig sc = base;
  sc.task = entry.task;
  sc.path_select = entry.path_select;
  if (entry.traffic_overridden) sc.traffic = entry.traffic;
  return sc;
}

std::vector<EpisodeLog> run_battery(const FullConfig& cfg, Agent& agent, uint64_t seed,
                                    bool timing) {
  std::vector<BatteryEntry> entries = cfg.battery.empty() ? default_battery() : cfg.battery;
  std::vector<EpisodeLog> logs;
  for (size_t j = 0; j < entries.size(); ++j) {
    const BatteryEntry& entry = entries[j];
    if (entry.episodes < 1) throw ConfigError("battery entry '" + entry.name + "': episodes < 1");
    ScenarioConfig sc = scenario_for_entry(cfg.scenario, entry);
    uint64_t env_seed = Rng::stream(seed, uint64_t(j)).next_u64();
    auto env = make_env(sc, cfg.encoder.max_stps, env_seed);
    for (int k = 0; k < entry.episodes; ++k) {
      env->reset(uint64_t(k));
      EpisodeLog ep;
      ep.scenario = entry.name;
      ep.task = entry.task;
      ep.composition = entry.composition;
      ep.episode = uint64_t(k);
      ep.dt = sc.dt;
      Observation o = env->observe();
      while (true) {
        StepRecord rec;
        rec.time = env->time();
        auto t0 = std::chrono::steady_clock::now();
        std::vector<double> attn;
        std::vector<double> s = agent.encode_plain(o, false, &attn);
        std::vector<double> a = agent.policy_plain(s, false);
        auto t1 = std::chrono::steady_clock::now();
        rec.decision_ms =
            timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
        if (int(o.x.size()) == obs::kDim) {
          rec.v_lon = o.x[obs::kVLon];
          rec.v_lat = o.x[obs::kVLat];
          rec.yaw_rate = o.x[obs::kYawRate];
          rec.px = o.x[obs::kPx];
          rec.py = o.x[obs::kPy];
          rec.phi = o.x[obs::kPhi];
          rec.delta_v = o.x[obs::kDeltaV];
          rec.path_id = argmax3(o.x, obs::kRefOneHot);
        } else if (!o.x.empty()) {
          rec.px = o.x[0];
        }
        rec.a = a.empty() ? 0.0 : a[0];
        rec.steer = a.size() > 1 ? a[1] : 0.0;
        rec.attention = std::move(attn);
        StepResult sr = env->step(a);
        rec.r = sr.r;
        rec.c = sr.c;
        rec.d = sr.d;
        rec.red_entry = sr.red_entry ? 1 : 0;
        rec.offroad = sr.c_boundary > 0.0 ? 1 : 0;
        rec.collision = sr.c_collision > 0.0 ? 1 : 0;
        if (rec.collision) ep.collided = true;
        ep.steps.push_back(std::move(rec));
        if (sr.done) {
          ep.completed = sr.completed;
          break;
        }
        o = std::move(sr.obs);
      }
      ep.duration_s = env->time();
      logs.push_back(std::move(ep));
    }
  }
  return logs;
}

void load_agent_params(Agent& agent, const std::string& checkpoint_path) {
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  const auto& pv = ck.require("params");
  auto dst = agent.params().data();
  if (pv.size() != dst.size())
    throw ConfigError("checkpoint '" + checkpoint_path + "': parameter count " +
                      std::to_string(pv.size()) + " does not match this configuration (" +
                      std::to_string(dst.size()) + ")");
  std::copy(pv.begin(), pv.end(), dst.begin());
}

}  // namespace cmpg
