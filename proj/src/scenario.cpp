#include "cmpg/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "cmpg/errors.hpp"

namespace cmpg {
namespace {

constexpr double kSpacing = 0.5;
constexpr double kPedCrosswalkOffset = 1.5;  // beyond the box edge, on the leg
constexpr double kCycCrosswalkOffset = 2.8;
constexpr double kCrossingOverhang = 3.0;    // spawn/exit beyond the road edge

struct Frame {
  double theta;  // direction of travel
  geo::Vec2 u() const { return {std::cos(theta), std::sin(theta)}; }
  geo::Vec2 r() const { return {std::sin(theta), -std::cos(theta)}; }  // right of travel
};

geo::Vec2 lincomb(geo::Vec2 a, double ca, geo::Vec2 b, double cb) {
  return {a.x * ca + b.x * cb, a.y * ca + b.y * cb};
}

double lane_offset(const GeometryConfig& geom, int lane) {
  return (0.5 + lane) * geom.lane_width;
}

// One turning or through movement from an entrance lane to an exit lane,
// including the approach and exit extensions. Turning movements bow through
// a mid pose on the corner-centered circle; `radius_mult` scales that
// circle to produce the path variants.
geo::Path build_movement(const GeometryConfig& geom, double theta_in, int lane_in, int turn,
                         int lane_out, double radius_mult, double lateral_mid_offset,
                         double v_cruise, double lat_accel_limit) {
  const double H = geom.half_width();
  const Frame in{theta_in};
  const double off_in = lane_offset(geom, lane_in);
  const geo::Vec2 approach_start =
      lincomb(in.r(), off_in, in.u(), -(H + geom.approach_length));
  const geo::Vec2 entrance = lincomb(in.r(), off_in, in.u(), -H);

  std::vector<geo::Vec2> dense;
  if (turn == 0) {
    const geo::Vec2 exit_edge = lincomb(in.r(), off_in, in.u(), H);
    const geo::Vec2 exit_end = lincomb(in.r(), off_in, in.u(), H + geom.exit_length);
    geo::append_straight(dense, approach_start, entrance);
    if (lateral_mid_offset != 0.0) {
      const geo::Vec2 mid = lincomb(in.r(), off_in + lateral_mid_offset, in.u(), 0.0);
      const double chord = geo::hypot2(mid.x - entrance.x, mid.y - entrance.y);
      geo::append_hermite(dense, entrance, theta_in, mid, theta_in, chord, chord);
      geo::append_hermite(dense, mid, theta_in, exit_edge, theta_in, chord, chord);
    } else {
      geo::append_straight(dense, entrance, exit_edge);
    }
    geo::append_straight(dense, exit_edge, exit_end);
    return geo::finalize_polyline(dense, kSpacing, v_cruise, lat_accel_limit);
  }

  // turn = +1 left (counterclockwise), -1 right (clockwise).
  const double theta_out = sm::wrap_angle(theta_in + turn * M_PI / 2.0);
  const Frame out{theta_out};
  const double off_out = lane_offset(geom, lane_out);
  const geo::Vec2 exit_edge = lincomb(out.r(), off_out, out.u(), H);
  const geo::Vec2 exit_end = lincomb(out.r(), off_out, out.u(), H + geom.exit_length);
  // Circle center sits on the turn side; entrance and exit radii agree when
  // the two lane offsets match, and the Hermite blend absorbs any mismatch.
  const double radius = turn > 0 ? H + off_in : H - off_in;
  const geo::Vec2 center = lincomb(in.r(), off_in - turn * radius, in.u(), -H);
  const double alpha0 = std::atan2(entrance.y - center.y, entrance.x - center.x);
  double alpha1 = std::atan2(exit_edge.y - center.y, exit_edge.x - center.x);
  double sweep = sm::wrap_angle(alpha1 - alpha0);
  const double alpha_mid = alpha0 + sweep / 2.0;
  const geo::Vec2 mid{center.x + radius_mult * radius * std::cos(alpha_mid),
                      center.y + radius_mult * radius * std::sin(alpha_mid)};
  const double mid_heading = sm::wrap_angle(alpha_mid + turn * M_PI / 2.0);
  const double chord0 = geo::hypot2(mid.x - entrance.x, mid.y - entrance.y);
  const double chord1 = geo::hypot2(exit_edge.x - mid.x, exit_edge.y - mid.y);

  geo::append_straight(dense, approach_start, entrance);
  geo::append_hermite(dense, entrance, theta_in, mid, mid_heading, chord0 * 1.2, chord0 * 1.2);
  geo::append_hermite(dense, mid, mid_heading, exit_edge, theta_out, chord1 * 1.2, chord1 * 1.2);
  geo::append_straight(dense, exit_edge, exit_end);
  return geo::finalize_polyline(dense, kSpacing, v_cruise, lat_accel_limit);
}

// Straight crossing route (pedestrian or cyclist) over one leg.
geo::Path build_crossing(const GeometryConfig& geom, double leg_theta, double outward_offset,
                         int sign, double v_cruise) {
  const double H = geom.half_width();
  const Frame leg{leg_theta};
  // Crosswalk line: perpendicular to the leg, outward_offset beyond the box.
  const geo::Vec2 walk_dir{-leg.u().y * sign, leg.u().x * sign};
  const geo::Vec2 center = lincomb(leg.u(), H + outward_offset, walk_dir, 0.0);
  const double span = H + kCrossingOverhang;
  const geo::Vec2 from{center.x - walk_dir.x * span, center.y - walk_dir.y * span};
  const geo::Vec2 to{center.x + walk_dir.x * span, center.y + walk_dir.y * span};
  std::vector<geo::Vec2> dense;
  geo::append_straight(dense, from, to);
  return geo::finalize_polyline(dense, kSpacing, v_cruise, 0.0);
}

}  // namespace

PathSet static_path_set(const std::string& task, const GeometryConfig& geom, double v_cruise,
                        double lat_accel_limit) {
  int turn = 0, lane_in = 0, lane_out = 0;
  if (task == "left") {
    turn = 1;
    lane_in = 0;
    lane_out = 0;
  } else if (task == "straight") {
    turn = 0;
    lane_in = 0;
    lane_out = 0;
  } else if (task == "right") {
    turn = -1;
    lane_in = geom.lanes_per_direction - 1;
    lane_out = geom.lanes_per_direction - 1;
  } else {
    throw ConfigError("static_path_set: unknown task '" + task + "'");
  }
  PathSet set;
  const double kRadiusMults[3] = {0.85, 1.0, 1.15};
  const double kStraightOffsets[3] = {-0.9, 0.0, 0.9};
  for (int v = 0; v < 3; ++v) {
    set.paths.push_back(build_movement(geom, M_PI / 2.0, lane_in, turn, lane_out,
                                       kRadiusMults[v], turn == 0 ? kStraightOffsets[v] : 0.0,
                                       v_cruise, lat_accel_limit));
  }
  set.active = 1;
  return set;
}

std::map<std::string, geo::Path> build_routes(const GeometryConfig& geom, double v_cruise,
                                              double lat_accel_limit) {
  std::map<std::string, geo::Path> routes;
  const struct {
    const char* name;
    double theta;
  } dirs[4] = {{"nb", M_PI / 2.0}, {"sb", -M_PI / 2.0}, {"eb", 0.0}, {"wb", M_PI}};
  for (const auto& d : dirs) {
    for (int lane = 0; lane < geom.lanes_per_direction; ++lane) {
      routes[std::string(d.name) + "_through_" + std::to_string(lane)] =
          build_movement(geom, d.theta, lane, 0, lane, 1.0, 0.0, v_cruise, lat_accel_limit);
    }
    routes[std::string(d.name) + "_left_0"] =
        build_movement(geom, d.theta, 0, 1, 0, 1.0, 0.0, v_cruise, lat_accel_limit);
    const int outer = geom.lanes_per_direction - 1;
    routes[std::string(d.name) + "_right_" + std::to_string(outer)] =
        build_movement(geom, d.theta, outer, -1, outer, 1.0, 0.0, v_cruise, lat_accel_limit);
  }
  const struct {
    const char* name;
    double theta;
  } legs[4] = {{"n", M_PI / 2.0}, {"s", -M_PI / 2.0}, {"e", 0.0}, {"w", M_PI}};
  for (const auto& leg : legs) {
    for (int sign : {1, -1}) {
      const std::string suffix = std::string("_") + leg.name + (sign > 0 ? "_pos" : "_neg");
      routes["ped" + suffix] = build_crossing(geom, leg.theta, kPedCrosswalkOffset, sign, 2.0);
      routes["cyc" + suffix] = build_crossing(geom, leg.theta, kCycCrosswalkOffset, sign, 3.0);
    }
  }
  return routes;
}

double route_stop_s(const geo::Path& route, const GeometryConfig& geom, double pad,
                    double setback) {
  const double H = geom.half_width();
  for (const geo::PathPoint& p : route.pts) {
    if (std::fabs(p.x) < H + pad && std::fabs(p.y) < H + pad)
      return std::max(0.0, p.s - setback);
  }
  return route.length();
}

double SignalPlan::cycle_s() const {
  double total = 0.0;
  for (const SignalPhaseConfig& p : cfg.phases) total += p.duration_s;
  return total;
}

std::string SignalPlan::active_movement(double t) const {
  if (cfg.phases.empty()) return "";
  const double cycle = cycle_s();
  double u = std::fmod(t + cfg.offset_s, cycle);
  if (u < 0.0) u += cycle;
  for (const SignalPhaseConfig& p : cfg.phases) {
    if (u < p.duration_s) return p.movement;
    u -= p.duration_s;
  }
  return cfg.phases.back().movement;
}

bool SignalPlan::green_for(const std::string& movement, double t) const {
  if (cfg.phases.empty()) return true;
  return active_movement(t) == movement;
}

std::string ego_movement(const std::string& task) {
  return task == "left" ? "ns_left" : "ns_through";
}

std::vector<double> NormTable::normalize_x(std::span<const double> raw) const {
  if (raw.size() != x_lo.size())
    throw UsageError("NormTable::normalize_x: dimension mismatch");
  std::vector<double> out(raw.size(), 0.0);
  for (size_t i = 0; i < raw.size(); ++i)
    out[i] = dyn::normalize_clamped(raw[i], x_lo[i], x_hi[i]);
  return out;
}

std::vector<double> NormTable::normalize_stp(std::span<const double> raw) const {
  if (raw.size() != stp_lo.size())
    throw UsageError("NormTable::normalize_stp: dimension mismatch");
  std::vector<double> out(raw.size(), 0.0);
  for (size_t i = 0; i < raw.size(); ++i)
    out[i] = dyn::normalize_clamped(raw[i], stp_lo[i], stp_hi[i]);
  return out;
}

NormTable norm_table_for(const ScenarioConfig& sc) {
  const GeometryConfig& g = sc.geometry;
  const double R = g.half_width() + std::max(g.approach_length, g.exit_length) + 10.0;
  NormTable t;
  t.x_lo.assign(size_t(obs::kDim), 0.0);
  t.x_hi.assign(size_t(obs::kDim), 1.0);
  auto set = [&t](int i, double lo, double hi) {
    t.x_lo[size_t(i)] = lo;
    t.x_hi[size_t(i)] = hi;
  };
  set(obs::kVLon, -1.0, 15.0);
  set(obs::kVLat, -4.0, 4.0);
  set(obs::kYawRate, -1.5, 1.5);
  set(obs::kPx, -R, R);
  set(obs::kPy, -R, R);
  set(obs::kPhi, -M_PI, M_PI);
  set(obs::kPrevA, sc.action_low[0], sc.action_high[0]);
  set(obs::kPrevSteer, sc.action_low[1], sc.action_high[1]);
  set(obs::kDeltaY, -6.0, 6.0);
  set(obs::kDeltaPhi, -M_PI, M_PI);
  set(obs::kDeltaV, -12.0, 12.0);
  // One-hot and light entries keep [0, 1].
  t.stp_lo.assign(size_t(stpf::kDim), 0.0);
  t.stp_hi.assign(size_t(stpf::kDim), 1.0);
  auto sets = [&t](int i, double lo, double hi) {
    t.stp_lo[size_t(i)] = lo;
    t.stp_hi[size_t(i)] = hi;
  };
  sets(stpf::kDx, -sc.perception_radius, sc.perception_radius);
  sets(stpf::kDy, -sc.perception_radius, sc.perception_radius);
  sets(stpf::kSpeed, 0.0, 15.0);
  sets(stpf::kHeading, -M_PI, M_PI);
  sets(stpf::kYawRate, -1.5, 1.5);
  sets(stpf::kLength, 0.0, 12.0);
  sets(stpf::kWidth, 0.0, 3.5);
  return t;
}

NormTable toy_norm_table(const ScenarioConfig&) {
  NormTable t;
  t.x_lo = {-0.5};
  t.x_hi = {1.5};
  t.stp_lo = {0.0, 0.0};
  t.stp_hi = {1.0, 1.0};
  return t;
}

}  // namespace cmpg
