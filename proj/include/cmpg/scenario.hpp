#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/geometry.hpp"

namespace cmpg {

// Candidate reference paths for the ego task plus the active selection.
// refID one-hot convention: path 0 -> [0,0,1], path 1 -> [0,1,0],
// path 2 -> [1,0,0].
struct PathSet {
  std::vector<geo::Path> paths;  // exactly 3
  int active = 1;

  const geo::Path& active_path() const { return paths[size_t(active)]; }
  std::array<double, 3> ref_one_hot() const {
    std::array<double, 3> oh{0.0, 0.0, 0.0};
    oh[size_t(2 - active)] = 1.0;
    return oh;
  }
};

// Three paths from the task's entrance lane center to its exit lane center.
// Turning tasks vary the mid-arc radius; the straight task offsets the
// mid-block control point laterally.
PathSet static_path_set(const std::string& task, const GeometryConfig& geom, double v_cruise,
                        double lat_accel_limit);

// Scripted traffic routes, keyed by "<dir>_<movement>_<lane>" for vehicles
// (nb/sb/eb/wb x through/left/right) and "<ped|cyc>_<leg>_<pos|neg>" for
// crossing pedestrians/cyclists (legs n/s/e/w, walking direction along the
// crosswalk's positive or negative axis).
std::map<std::string, geo::Path> build_routes(const GeometryConfig& geom, double v_cruise,
                                              double lat_accel_limit);

// Arc length at which a route first touches the intersection box (expanded
// by `pad`), minus `setback`; yielding agents stop here. Returns the route
// length when the route never enters the box.
double route_stop_s(const geo::Path& route, const GeometryConfig& geom, double pad,
                    double setback);

// Signal phase plan. Phase index advances with sim time; ego's light is
// green iff the active phase movement matches the ego task's movement.
struct SignalPlan {
  SignalConfig cfg;
  double cycle_s() const;
  // Movement currently green at time t (empty plan -> everything green).
  std::string active_movement(double t) const;
  bool green_for(const std::string& movement, double t) const;
};

// Movement served by the ego's task, northbound approach.
std::string ego_movement(const std::string& task);

// Per-dimension [lo, hi] bounds used to squash observations and STP
// features into [-1, 1] for the networks.
struct NormTable {
  std::vector<double> x_lo, x_hi;      // d1
  std::vector<double> stp_lo, stp_hi;  // d2

  int d1() const { return static_cast<int>(x_lo.size()); }
  int d2() const { return static_cast<int>(stp_lo.size()); }
  std::vector<double> normalize_x(std::span<const double> raw) const;
  std::vector<double> normalize_stp(std::span<const double> raw) const;
};

// Bounds derived from the scenario geometry and action limits.
NormTable norm_table_for(const ScenarioConfig& sc);
NormTable toy_norm_table(const ScenarioConfig& sc);

// Interpretation helpers for the observation layout (documented in
// world.hpp): index constants shared by env, model, and tests.
namespace obs {
inline constexpr int kVLon = 0;
inline constexpr int kVLat = 1;
inline constexpr int kYawRate = 2;
inline constexpr int kPx = 3;
inline constexpr int kPy = 4;
inline constexpr int kPhi = 5;
inline constexpr int kPrevA = 6;
inline constexpr int kPrevSteer = 7;
inline constexpr int kRefOneHot = 8;   // 3 entries
inline constexpr int kDeltaY = 11;
inline constexpr int kDeltaPhi = 12;
inline constexpr int kDeltaV = 13;
inline constexpr int kTaskOneHot = 14;  // 3 entries
inline constexpr int kLight = 17;       // 2 entries
inline constexpr int kDim = 19;
}  // namespace obs

namespace stpf {
inline constexpr int kDx = 0;  // lateral offset in the ego frame (left +)
inline constexpr int kDy = 1;  // longitudinal offset in the ego frame (ahead +)
inline constexpr int kSpeed = 2;
inline constexpr int kHeading = 3;  // relative to ego heading, wrapped
inline constexpr int kYawRate = 4;
inline constexpr int kLength = 5;
inline constexpr int kWidth = 6;
inline constexpr int kTypeOneHot = 7;  // vehicle, pedestrian, cyclist
inline constexpr int kDim = 10;
}  // namespace stpf

}  // namespace cmpg
