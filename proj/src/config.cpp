#include "cmpg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmpg/errors.hpp"

namespace cmpg {
namespace {

using nlohmann::json;

// Cursor into the config tree that keeps the full key path for error
// messages and rejects keys it was never asked about (typo guard).
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config key '" + path_ + "': expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  double num(const std::string& key, double def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "a number");
    return v.get<double>();
  }
  int inum(const std::string& key, int def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    return v.get<int>();
  }
  long lnum(const std::string& key, long def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    return v.get<long>();
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "a boolean");
    return v.get<bool>();
  }
  std::string str(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "a string");
    return v.get<std::string>();
  }
  std::vector<double> nums(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) fail(key, "an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<int> ints(const std::string& key, std::vector<int> def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "an array of integers");
    std::vector<int> out;
    for (const json& e : v) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }
  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& path() const { return path_; }

  // Call after all known keys were queried.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key()))
        throw ConfigError("config key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) +
                          "': unknown key");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& want) const {
    throw ConfigError("config key '" + (path_.empty() ? key : path_ + "." + key) + "': expected " +
                      want);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

GeometryConfig parse_geometry(Section s) {
  GeometryConfig g;
  g.lane_width = s.num("lane_width", g.lane_width);
  g.bike_lane_width = s.num("bike_lane_width", g.bike_lane_width);
  g.lanes_per_direction = s.inum("lanes_per_direction", g.lanes_per_direction);
  g.approach_length = s.num("approach_length", g.approach_length);
  g.exit_length = s.num("exit_length", g.exit_length);
  g.stop_line_setback = s.num("stop_line_setback", g.stop_line_setback);
  s.finish();
  if (g.lane_width <= 0.0)
    throw ConfigError("config key '" + s.path() + ".lane_width': must be positive");
  if (g.lanes_per_direction < 1)
    throw ConfigError("config key '" + s.path() + ".lanes_per_direction': must be >= 1");
  return g;
}

dyn::VehicleParams parse_vehicle(Section s) {
  dyn::VehicleParams v;
  v.lf = s.num("lf", v.lf);
  v.lr = s.num("lr", v.lr);
  v.length = s.num("length", v.length);
  v.width = s.num("width", v.width);
  s.finish();
  if (v.lf <= 0.0 || v.lr <= 0.0)
    throw ConfigError("config key '" + s.path() + "': lf and lr must be positive");
  return v;
}

SignalConfig parse_signal(Section s) {
  SignalConfig sig;
  sig.offset_s = s.num("offset_s", 0.0);
  if (s.has("phases")) {
    const json& arr = s.raw("phases");
    if (!arr.is_array())
      throw ConfigError("config key '" + s.path() + ".phases': expected an array");
    int idx = 0;
    for (const json& e : arr) {
      Section p(e, s.path() + ".phases[" + std::to_string(idx) + "]");
      SignalPhaseConfig phase;
      phase.movement = p.str("movement", "");
      phase.duration_s = p.num("duration_s", 20.0);
      p.finish();
      if (phase.movement != "ns_through" && phase.movement != "ns_left" &&
          phase.movement != "ew_through" && phase.movement != "ew_left")
        throw ConfigError("config key '" + s.path() + ".phases[" + std::to_string(idx) +
                          "].movement': unknown movement '" + phase.movement + "'");
      if (phase.duration_s <= 0.0)
        throw ConfigError("config key '" + s.path() + ".phases[" + std::to_string(idx) +
                          "].duration_s': must be positive");
      sig.phases.push_back(phase);
      ++idx;
    }
  }
  s.finish();
  return sig;
}

std::vector<TrafficEntry> parse_traffic(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw ConfigError("config key '" + path + "': expected an array");
  std::vector<TrafficEntry> out;
  int idx = 0;
  for (const json& e : arr) {
    Section t(e, path + "[" + std::to_string(idx) + "]");
    TrafficEntry entry;
    entry.route = t.str("route", "");
    entry.type = t.str("type", entry.type);
    entry.spawn_time_s = t.num("spawn_time_s", entry.spawn_time_s);
    entry.start_s = t.num("start_s", entry.start_s);
    entry.speed = t.num("speed", entry.speed);
    entry.yields = t.flag("yields", entry.yields);
    entry.length = t.num("length", entry.length);
    entry.width = t.num("width", entry.width);
    t.finish();
    if (entry.route.empty())
      throw ConfigError("config key '" + path + "[" + std::to_string(idx) + "].route': required");
    if (entry.type != "vehicle" && entry.type != "pedestrian" && entry.type != "cyclist")
      throw ConfigError("config key '" + path + "[" + std::to_string(idx) + "].type': unknown type '" +
                        entry.type + "'");
    if ((entry.type == "pedestrian" || entry.type == "cyclist") && entry.speed > 3.0)
      throw ConfigError("config key '" + path + "[" + std::to_string(idx) +
                        "].speed': pedestrian/cyclist speed must be <= 3 m/s");
    out.push_back(entry);
    ++idx;
  }
  return out;
}

ScenarioConfig parse_scenario(Section s) {
  ScenarioConfig sc;
  sc.kind = s.str("kind", sc.kind);
  if (sc.kind != "intersection" && sc.kind != "toy")
    throw ConfigError("config key '" + s.path() + ".kind': unknown kind '" + sc.kind + "'");
  sc.dt = s.num("dt", sc.dt);
  if (sc.dt <= 0.0 || sc.dt > 0.2)
    throw ConfigError("config key '" + s.path() + ".dt': must be in (0, 0.2]");
  sc.episode_steps = s.inum("episode_steps", sc.episode_steps);
  sc.task = s.str("task", sc.task);
  if (sc.task != "left" && sc.task != "straight" && sc.task != "right")
    throw ConfigError("config key '" + s.path() + ".task': unknown task '" + sc.task + "'");
  sc.path_select = s.str("path_select", sc.path_select);
  if (sc.path_select != "cycle" && sc.path_select != "fixed0" && sc.path_select != "fixed1" &&
      sc.path_select != "fixed2")
    throw ConfigError("config key '" + s.path() + ".path_select': unknown mode '" +
                      sc.path_select + "'");
  if (s.has("geometry")) sc.geometry = parse_geometry(s.child("geometry"));
  if (s.has("vehicle")) sc.vehicle = parse_vehicle(s.child("vehicle"));
  sc.action_low = s.nums("action_low", sc.action_low);
  sc.action_high = s.nums("action_high", sc.action_high);
  if (sc.action_low.size() != sc.action_high.size())
    throw ConfigError("config key '" + s.path() +
                      ".action_low': length differs from action_high");
  for (size_t i = 0; i < sc.action_low.size(); ++i)
    if (!(sc.action_low[i] < sc.action_high[i]))
      throw ConfigError("config key '" + s.path() + ".action_low': bound " + std::to_string(i) +
                        " must be below action_high");
  sc.collision_margin = s.num("collision_margin", sc.collision_margin);
  sc.perception_radius = s.num("perception_radius", sc.perception_radius);
  sc.perception_noise_std = s.num("perception_noise_std", sc.perception_noise_std);
  sc.v_cruise = s.num("v_cruise", sc.v_cruise);
  sc.lat_accel_limit = s.num("lat_accel_limit", sc.lat_accel_limit);
  if (s.has("ego_start")) {
    Section e = s.child("ego_start");
    sc.ego_start.s_lo = e.num("s_lo", sc.ego_start.s_lo);
    sc.ego_start.s_hi = e.num("s_hi", sc.ego_start.s_hi);
    sc.ego_start.v_lo = e.num("v_lo", sc.ego_start.v_lo);
    sc.ego_start.v_hi = e.num("v_hi", sc.ego_start.v_hi);
    e.finish();
  }
  if (s.has("signal")) sc.signal = parse_signal(s.child("signal"));
  if (s.has("traffic")) sc.traffic = parse_traffic(s.raw("traffic"), s.path() + ".traffic");
  sc.jitter_time_s = s.num("jitter_time_s", sc.jitter_time_s);
  sc.jitter_s = s.num("jitter_s", sc.jitter_s);
  sc.jitter_speed = s.num("jitter_speed", sc.jitter_speed);
  sc.toy_p_ref = s.num("toy_p_ref", sc.toy_p_ref);
  sc.toy_limit = s.num("toy_limit", sc.toy_limit);
  sc.toy_steps = s.inum("toy_steps", sc.toy_steps);
  s.finish();
  return sc;
}

EncoderConfig parse_encoder(Section s) {
  EncoderConfig e;
  e.kind = s.str("kind", e.kind);
  if (e.kind != "abe" && e.kind != "esc" && e.kind != "ordered")
    throw ConfigError("config key '" + s.path() + ".kind': unknown encoder '" + e.kind + "'");
  e.d3 = s.inum("d3", e.d3);
  e.h_hidden = s.inum("h_hidden", e.h_hidden);
  e.attn_hidden = s.inum("attn_hidden", e.attn_hidden);
  e.max_stps = s.inum("max_stps", e.max_stps);
  s.finish();
  if (e.d3 < 1) throw ConfigError("config key '" + s.path() + ".d3': must be >= 1");
  if (e.max_stps < 1) throw ConfigError("config key '" + s.path() + ".max_stps': must be >= 1");
  return e;
}

TrainerConfig parse_trainer(Section s) {
  TrainerConfig t;
  t.gamma = s.num("gamma", t.gamma);
  if (!(t.gamma > 0.0 && t.gamma < 1.0))
    throw ConfigError("config key '" + s.path() + ".gamma': must be in (0, 1)");
  t.horizon_n = s.inum("horizon_n", t.horizon_n);
  if (t.horizon_n < 1) throw ConfigError("config key '" + s.path() + ".horizon_n': must be >= 1");
  t.batch = s.inum("batch", t.batch);
  t.buffer_capacity = s.lnum("buffer_capacity", t.buffer_capacity);
  t.tau = s.num("tau", t.tau);
  t.lr_policy = s.num("lr_policy", t.lr_policy);
  t.lr_encoder = s.num("lr_encoder", t.lr_encoder);
  t.lr_critic = s.num("lr_critic", t.lr_critic);
  t.sigma0 = s.num("sigma0", t.sigma0);
  if (t.sigma0 <= 0.0) throw ConfigError("config key '" + s.path() + ".sigma0': must be positive");
  t.sigma_grow = s.num("sigma_grow", t.sigma_grow);
  if (t.sigma_grow <= 1.0)
    throw ConfigError("config key '" + s.path() + ".sigma_grow': must be > 1");
  t.max_outer = s.inum("max_outer", t.max_outer);
  t.max_inner = s.inum("max_inner", t.max_inner);
  t.min_inner = s.inum("min_inner", t.min_inner);
  t.inner_window = s.inum("inner_window", t.inner_window);
  t.inner_tol = s.num("inner_tol", t.inner_tol);
  t.episodes_per_iter = s.inum("episodes_per_iter", t.episodes_per_iter);
  t.updates_per_iter = s.inum("updates_per_iter", t.updates_per_iter);
  t.policy_every = s.inum("policy_every", t.policy_every);
  t.warmup_episodes = s.inum("warmup_episodes", t.warmup_episodes);
  t.model_batch = s.inum("model_batch", t.model_batch);
  t.mix_mode = s.str("mix_mode", t.mix_mode);
  if (t.mix_mode != "anneal" && t.mix_mode != "constant" && t.mix_mode != "inverse_variance")
    throw ConfigError("config key '" + s.path() + ".mix_mode': unknown mode '" + t.mix_mode + "'");
  t.mix_w_data = s.num("mix_w_data", t.mix_w_data);
  if (t.mix_w_data < 0.0 || t.mix_w_data > 1.0)
    throw ConfigError("config key '" + s.path() + ".mix_w_data': must be in [0, 1]");
  t.ema_beta = s.num("ema_beta", t.ema_beta);
  t.optimizer = s.str("optimizer", t.optimizer);
  if (t.optimizer != "adam" && t.optimizer != "sgd")
    throw ConfigError("config key '" + s.path() + ".optimizer': unknown optimizer '" +
                      t.optimizer + "'");
  t.explore_noise = s.num("explore_noise", t.explore_noise);
  t.smooth_noise_std = s.num("smooth_noise_std", t.smooth_noise_std);
  t.smooth_noise_clip = s.num("smooth_noise_clip", t.smooth_noise_clip);
  t.target_smoothing = s.flag("target_smoothing", t.target_smoothing);
  t.policy_widths = s.ints("policy_widths", t.policy_widths);
  t.critic_widths = s.ints("critic_widths", t.critic_widths);
  t.divergence_loss = s.num("divergence_loss", t.divergence_loss);
  t.divergence_iters = s.inum("divergence_iters", t.divergence_iters);
  t.checkpoint_every = s.inum("checkpoint_every", t.checkpoint_every);
  t.buffer_in_checkpoint = s.flag("buffer_in_checkpoint", t.buffer_in_checkpoint);
  t.timing = s.flag("timing", t.timing);
  s.finish();
  return t;
}

std::vector<BatteryEntry> parse_battery(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw ConfigError("config key '" + path + "': expected an array");
  std::vector<BatteryEntry> out;
  int idx = 0;
  for (const json& e : arr) {
    Section b(e, path + "[" + std::to_string(idx) + "]");
    BatteryEntry entry;
    entry.name = b.str("name", "scenario" + std::to_string(idx));
    entry.composition = b.str("composition", entry.composition);
    entry.task = b.str("task", entry.task);
    if (entry.task != "left" && entry.task != "straight" && entry.task != "right")
      throw ConfigError("config key '" + path + "[" + std::to_string(idx) + "].task': unknown task '" +
                        entry.task + "'");
    entry.path_select = b.str("path_select", entry.path_select);
    if (b.has("traffic")) {
      entry.traffic =
          parse_traffic(b.raw("traffic"), path + "[" + std::to_string(idx) + "].traffic");
      entry.traffic_overridden = true;
    }
    entry.episodes = b.inum("episodes", entry.episodes);
    if (entry.episodes < 1)
      throw ConfigError("config key '" + path + "[" + std::to_string(idx) +
                        "].episodes': must be >= 1");
    b.finish();
    out.push_back(entry);
    ++idx;
  }
  return out;
}

}  // namespace

FullConfig parse_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  Section top(root, "");
  FullConfig cfg;
  if (top.has("scenario")) cfg.scenario = parse_scenario(top.child("scenario"));
  if (top.has("encoder")) cfg.encoder = parse_encoder(top.child("encoder"));
  if (top.has("trainer")) cfg.trainer = parse_trainer(top.child("trainer"));
  if (top.has("battery")) cfg.battery = parse_battery(top.raw("battery"), "battery");
  top.finish();
  return cfg;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

}  // namespace cmpg
