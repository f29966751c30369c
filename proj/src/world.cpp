#include "cmpg/world.hpp"

#include <algorithm>
#include <cmath>

#include "cmpg/errors.hpp"

namespace cmpg {
namespace {

// Circle set for one obstacle: vehicles two circles at +/- L/4, others one
// circle covering the body.
struct Circle {
  double x, y, r;
};

int obstacle_circles(const ObstaclePose& o, Circle out[2]) {
  if (o.single_circle) {
    out[0] = {o.x, o.y, std::hypot(o.length / 2.0, o.width / 2.0)};
    return 1;
  }
  const double off = o.length / 4.0;
  const double r = std::hypot(off, o.width / 2.0);
  const double cx = std::cos(o.phi) * off, cy = std::sin(o.phi) * off;
  out[0] = {o.x + cx, o.y + cy, r};
  out[1] = {o.x - cx, o.y - cy, r};
  return 2;
}

double yield_speed(double script_speed, double stop_s, double s, double decel) {
  const double gap = std::max(0.0, stop_s - s);
  return std::min(script_speed, std::sqrt(2.0 * decel * gap));
}

constexpr double kYieldDecel = 2.5;
// Ego proximity that holds a yielding agent at its stop point: ego inside
// the box expanded by this padding.
constexpr double kYieldPad = 6.0;

}  // namespace

TrackErrors tracking_errors(const geo::Path& path, double px, double py, double phi,
                            double v_lon) {
  TrackErrors te;
  te.proj = path.project(px, py);
  te.delta_y = te.proj.delta_y;
  te.delta_phi = sm::wrap_angle(phi - te.proj.path_heading);
  te.delta_v = v_lon - te.proj.v_target;
  te.clamped = te.proj.clamped;
  return te;
}

double collision_cost(const EgoState& ego, const dyn::VehicleParams& ego_dims,
                      std::span<const ObstaclePose> obstacles, double margin) {
  ObstaclePose ego_pose{ego.px, ego.py, ego.phi, ego_dims.length, ego_dims.width, false};
  Circle ec[2];
  obstacle_circles(ego_pose, ec);
  double c = 0.0;
  for (const ObstaclePose& o : obstacles) {
    Circle oc[2];
    const int n = obstacle_circles(o, oc);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < n; ++j) {
        const double dist = std::hypot(ec[i].x - oc[j].x, ec[i].y - oc[j].y);
        c += std::max(0.0, ec[i].r + oc[j].r + margin - dist);
      }
    }
  }
  return c;
}

double ego_boundary_cost(const EgoState& ego, const dyn::VehicleParams& ego_dims,
                         const geo::CrossGeom& box, double margin) {
  ObstaclePose ego_pose{ego.px, ego.py, ego.phi, ego_dims.length, ego_dims.width, false};
  Circle ec[2];
  obstacle_circles(ego_pose, ec);
  double c = 0.0;
  for (int i = 0; i < 2; ++i)
    c += std::max(0.0, ec[i].r + margin - box.inside_distance(ec[i].x, ec[i].y));
  return c;
}

IntersectionEnv::IntersectionEnv(const ScenarioConfig& cfg, int max_stps, uint64_t seed)
    : cfg_(cfg), max_stps_(max_stps), seed_(seed) {
  if (cfg_.kind != "intersection")
    throw ConfigError("IntersectionEnv: scenario kind is '" + cfg_.kind + "'");
  if (cfg_.action_low.size() != 2)
    throw ConfigError("IntersectionEnv: expected 2 action dimensions");
  const double H = cfg_.geometry.half_width();
  box_ = {H, H};
  paths_ = static_path_set(cfg_.task, cfg_.geometry, cfg_.v_cruise, cfg_.lat_accel_limit);
  for (int i = 0; i < 3; ++i)
    stop_line_s_[size_t(i)] =
        route_stop_s(paths_.paths[size_t(i)], cfg_.geometry, 0.0, cfg_.geometry.stop_line_setback);
  routes_ = build_routes(cfg_.geometry, cfg_.v_cruise, cfg_.lat_accel_limit);
  for (const TrafficEntry& e : cfg_.traffic) {
    if (!routes_.count(e.route))
      throw ConfigError("config key 'scenario.traffic': unknown route '" + e.route + "'");
  }
  if (static_cast<int>(cfg_.traffic.size()) > max_stps_)
    throw ConfigError("IntersectionEnv: traffic entries exceed max_stps capacity");
  signal_.cfg = cfg_.signal;
  norm_ = norm_table_for(cfg_);
  ego_move_ = ego_movement(cfg_.task);
  reset(0);
}

void IntersectionEnv::reset(uint64_t episode_index) {
  rng_ = Rng::stream(seed_, episode_index);
  if (cfg_.path_select == "cycle")
    paths_.active = static_cast<int>(episode_index % 3);
  else
    paths_.active = cfg_.path_select.back() - '0';

  stps_.clear();
  for (const TrafficEntry& base : cfg_.traffic) {
    StpRuntime rt;
    rt.entry = base;
    if (cfg_.jitter_time_s > 0.0)
      rt.entry.spawn_time_s =
          std::max(0.0, base.spawn_time_s + rng_.uniform(-cfg_.jitter_time_s, cfg_.jitter_time_s));
    if (cfg_.jitter_s > 0.0)
      rt.entry.start_s = std::max(0.0, base.start_s + rng_.uniform(-cfg_.jitter_s, cfg_.jitter_s));
    if (cfg_.jitter_speed > 0.0) {
      rt.entry.speed = std::max(0.5, base.speed + rng_.uniform(-cfg_.jitter_speed, cfg_.jitter_speed));
      if (base.type != "vehicle") rt.entry.speed = std::min(rt.entry.speed, 3.0);
    }
    rt.route = &routes_.at(base.route);
    rt.stop_s = route_stop_s(*rt.route, cfg_.geometry,
                             0.0, cfg_.geometry.stop_line_setback + base.length / 2.0);
    rt.s = rt.entry.start_s;
    rt.speed_now = 0.0;
    rt.active = rt.entry.spawn_time_s <= 0.0 && rt.s <= rt.route->length();
    rt.phi_prev = rt.route->at_s(rt.s).heading;
    rt.yaw_rate = 0.0;
    rt.passed_stop = false;
    stps_.push_back(rt);
  }

  const geo::Path& path = paths_.active_path();
  const double s0 = rng_.uniform(cfg_.ego_start.s_lo, cfg_.ego_start.s_hi);
  const double v0 = rng_.uniform(cfg_.ego_start.v_lo, cfg_.ego_start.v_hi);
  const geo::PathPoint start = path.at_s(s0);
  ego_ = EgoState{};
  ego_.px = start.x;
  ego_.py = start.y;
  ego_.phi = start.heading;
  ego_.v = v0;
  ego_.v_lon = v0;
  time_ = 0.0;
  step_count_ = 0;
  was_in_box_ = box_.in_box(ego_.px, ego_.py);
  done_ = false;
}

bool IntersectionEnv::ego_light_green() const { return signal_.green_for(ego_move_, time_); }

std::vector<double> IntersectionEnv::assemble_x(const TrackErrors& te) const {
  std::vector<double> x(size_t(obs::kDim), 0.0);
  x[obs::kVLon] = ego_.v_lon;
  x[obs::kVLat] = ego_.v_lat;
  x[obs::kYawRate] = ego_.yaw_rate;
  x[obs::kPx] = ego_.px;
  x[obs::kPy] = ego_.py;
  x[obs::kPhi] = ego_.phi;
  x[obs::kPrevA] = ego_.prev_a;
  x[obs::kPrevSteer] = ego_.prev_steer;
  const std::array<double, 3> ref = paths_.ref_one_hot();
  for (int i = 0; i < 3; ++i) x[size_t(obs::kRefOneHot + i)] = ref[size_t(i)];
  x[obs::kDeltaY] = te.delta_y;
  x[obs::kDeltaPhi] = te.delta_phi;
  x[obs::kDeltaV] = te.delta_v;
  const int task_idx = cfg_.task == "left" ? 0 : (cfg_.task == "straight" ? 1 : 2);
  x[size_t(obs::kTaskOneHot + task_idx)] = 1.0;
  const bool green = ego_light_green();
  x[obs::kLight] = green ? 1.0 : 0.0;
  x[obs::kLight + 1] = green ? 0.0 : 1.0;
  return x;
}

Observation IntersectionEnv::observe() const {
  Observation o;
  const TrackErrors te =
      tracking_errors(paths_.active_path(), ego_.px, ego_.py, ego_.phi, ego_.v_lon);
  o.x = assemble_x(te);
  // Perception noise shares the episode stream; a const_cast keeps observe()
  // const for callers while documenting that noisy observation advances the
  // RNG deterministically.
  Rng& rng = const_cast<IntersectionEnv*>(this)->rng_;
  for (const StpRuntime& stp : stps_) {
    if (!stp.active) continue;
    const geo::PathPoint p = stp.route->at_s(stp.s);
    const double ddx = p.x - ego_.px, ddy = p.y - ego_.py;
    if (std::hypot(ddx, ddy) > cfg_.perception_radius) continue;
    const double c = std::cos(ego_.phi), s = std::sin(ego_.phi);
    std::vector<double> f(size_t(stpf::kDim), 0.0);
    f[stpf::kDx] = -s * ddx + c * ddy;
    f[stpf::kDy] = c * ddx + s * ddy;
    f[stpf::kSpeed] = stp.speed_now;
    f[stpf::kHeading] = sm::wrap_angle(p.heading - ego_.phi);
    f[stpf::kYawRate] = stp.yaw_rate;
    f[stpf::kLength] = stp.entry.length;
    f[stpf::kWidth] = stp.entry.width;
    const int type_idx =
        stp.entry.type == "vehicle" ? 0 : (stp.entry.type == "pedestrian" ? 1 : 2);
    f[size_t(stpf::kTypeOneHot + type_idx)] = 1.0;
    if (cfg_.perception_noise_std > 0.0) {
      f[stpf::kDx] += rng.normal(0.0, cfg_.perception_noise_std);
      f[stpf::kDy] += rng.normal(0.0, cfg_.perception_noise_std);
      f[stpf::kSpeed] = std::max(0.0, f[stpf::kSpeed] + rng.normal(0.0, cfg_.perception_noise_std));
      f[stpf::kHeading] =
          sm::wrap_angle(f[stpf::kHeading] + rng.normal(0.0, cfg_.perception_noise_std));
    }
    o.stps.push_back(std::move(f));
  }
  return o;
}

StepResult IntersectionEnv::step(std::span<const double> action) {
  if (action.size() != 2) throw UsageError("IntersectionEnv::step: expected 2 action values");
  if (!std::isfinite(action[0]) || !std::isfinite(action[1]))
    throw UsageError("IntersectionEnv::step: non-finite action");
  StepResult out;
  const double a = std::clamp(action[0], cfg_.action_low[0], cfg_.action_high[0]);
  const double steer = std::clamp(action[1], cfg_.action_low[1], cfg_.action_high[1]);
  out.clamped = a != action[0] || steer != action[1];

  const dyn::BikeStep<double> next =
      dyn::bicycle_step(ego_.px, ego_.py, ego_.phi, ego_.v, a, steer, cfg_.vehicle, cfg_.dt);
  const double prev_a = ego_.prev_a, prev_steer = ego_.prev_steer;
  ego_.px = next.px;
  ego_.py = next.py;
  ego_.phi = next.phi;
  ego_.v = next.v;
  ego_.v_lon = next.v_lon;
  ego_.v_lat = next.v_lat;
  ego_.yaw_rate = next.yaw_rate;
  ego_.prev_a = a;
  ego_.prev_steer = steer;

  // Scripted traffic: spawn, yield against the ego's conflict presence,
  // advance along the route, retire past the route end.
  const bool ego_in_conflict = box_.in_box_expanded(ego_.px, ego_.py, kYieldPad);
  for (StpRuntime& stp : stps_) {
    if (!stp.active) {
      if (time_ + cfg_.dt >= stp.entry.spawn_time_s && stp.s <= stp.route->length()) {
        stp.active = true;
        stp.phi_prev = stp.route->at_s(stp.s).heading;
      } else {
        continue;
      }
    }
    double v_cmd = std::min(stp.entry.speed, stp.route->at_s(stp.s).v_target);
    if (stp.entry.yields && !stp.passed_stop && ego_in_conflict)
      v_cmd = std::min(v_cmd, yield_speed(stp.entry.speed, stp.stop_s, stp.s, kYieldDecel));
    stp.s += v_cmd * cfg_.dt;
    stp.speed_now = v_cmd;
    if (stp.s > stp.stop_s + 2.0) stp.passed_stop = true;
    if (stp.s > stp.route->length()) {
      stp.active = false;
      continue;
    }
    const double phi_now = stp.route->at_s(stp.s).heading;
    stp.yaw_rate = sm::wrap_angle(phi_now - stp.phi_prev) / cfg_.dt;
    stp.phi_prev = phi_now;
  }

  time_ += cfg_.dt;
  ++step_count_;

  const TrackErrors te =
      tracking_errors(paths_.active_path(), ego_.px, ego_.py, ego_.phi, ego_.v_lon);
  out.offpath = te.clamped;
  out.r = dyn::reward_value(te.delta_y, te.delta_phi, te.delta_v, a, steer, ego_.yaw_rate,
                            ego_.v_lat, prev_a, prev_steer, cfg_.dt);

  std::vector<ObstaclePose> obstacles;
  for (const StpRuntime& stp : stps_) {
    if (!stp.active) continue;
    const geo::PathPoint p = stp.route->at_s(stp.s);
    obstacles.push_back({p.x, p.y, p.heading, stp.entry.length, stp.entry.width,
                         stp.entry.type != "vehicle"});
  }
  out.c_collision = collision_cost(ego_, cfg_.vehicle, obstacles, cfg_.collision_margin);
  out.c_boundary = ego_boundary_cost(ego_, cfg_.vehicle, box_, cfg_.collision_margin);
  const bool green = ego_light_green();
  if (!green) {
    const double front_s = te.proj.s + cfg_.vehicle.length / 2.0;
    out.c_redwall = std::max(0.0, front_s - stop_line_s_[size_t(paths_.active)]);
  }
  out.c = out.c_collision + out.c_boundary + out.c_redwall;
  out.d = out.c > 0.0 ? 1 : 0;

  const bool in_box = box_.in_box(ego_.px, ego_.py);
  out.red_entry = in_box && !was_in_box_ && !green;
  was_in_box_ = in_box;

  out.completed = te.proj.s >= paths_.active_path().length() - 1.0;
  out.done = out.d == 1 || out.completed || step_count_ >= cfg_.episode_steps;
  done_ = out.done;
  out.obs = observe();
  return out;
}

std::vector<double> IntersectionEnv::model_state() const {
  std::vector<double> msv(size_t(ms::dim(max_stps_)), 0.0);
  msv[ms::kEgoPx] = ego_.px;
  msv[ms::kEgoPy] = ego_.py;
  msv[ms::kEgoPhi] = ego_.phi;
  msv[ms::kEgoV] = ego_.v;
  msv[ms::kEgoVLon] = ego_.v_lon;
  msv[ms::kEgoVLat] = ego_.v_lat;
  msv[ms::kEgoYawRate] = ego_.yaw_rate;
  msv[ms::kPrevA] = ego_.prev_a;
  msv[ms::kPrevSteer] = ego_.prev_steer;
  msv[ms::kPathId] = paths_.active;
  msv[ms::kGreen] = ego_light_green() ? 1.0 : 0.0;
  int count = 0;
  for (const StpRuntime& stp : stps_) {
    if (!stp.active || count >= max_stps_) continue;
    double* slot = msv.data() + ms::kStpBase + ms::kStpStride * count;
    const geo::PathPoint p = stp.route->at_s(stp.s);
    slot[ms::kStpActive] = 1.0;
    slot[ms::kStpX] = p.x;
    slot[ms::kStpY] = p.y;
    slot[ms::kStpPhi] = p.heading;
    slot[ms::kStpSpeed] = stp.speed_now;
    slot[ms::kStpYawRate] = stp.yaw_rate;
    slot[ms::kStpType] = stp.entry.type == "vehicle" ? 0.0 : (stp.entry.type == "pedestrian" ? 1.0 : 2.0);
    slot[ms::kStpLength] = stp.entry.length;
    slot[ms::kStpWidth] = stp.entry.width;
    ++count;
  }
  msv[ms::kStpCount] = count;
  return msv;
}

int IntersectionEnv::model_state_dim() const { return ms::dim(max_stps_); }

}  // namespace cmpg
