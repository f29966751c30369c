#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/rng.hpp"
#include "cmpg/scenario.hpp"

namespace cmpg {

// Raw (unnormalized) observation: the flat vector x plus the variable-size
// set of STP feature rows. Layouts are documented by the index constants in
// scenario.hpp (obs:: and stpf::).
struct Observation {
  std::vector<double> x;
  std::vector<std::vector<double>> stps;
};

struct StepResult {
  double r = 0.0;
  double c = 0.0;
  int d = 0;
  bool done = false;
  bool completed = false;   // reached the path end
  bool clamped = false;     // action hit the bounds
  bool offpath = false;     // projection clamped to a path endpoint
  bool red_entry = false;   // entered the intersection box on a non-green light
  double c_collision = 0.0;  // STP-circle share of c
  double c_boundary = 0.0;   // road-edge share of c
  double c_redwall = 0.0;    // red-light stop-line share of c
  Observation obs;           // observation after the step
};

struct EgoState {
  double px = 0.0, py = 0.0, phi = 0.0, v = 0.0;
  double v_lon = 0.0, v_lat = 0.0, yaw_rate = 0.0;
  double prev_a = 0.0, prev_steer = 0.0;
};

// Tracking errors against a reference path at a given pose.
struct TrackErrors {
  double delta_y = 0.0;
  double delta_phi = 0.0;
  double delta_v = 0.0;
  bool clamped = false;
  geo::Path::Projection proj;
};
TrackErrors tracking_errors(const geo::Path& path, double px, double py, double phi,
                            double v_lon);

// Obstacle pose for the collision cost. Vehicles use two circles along the
// body axis; pedestrians/cyclists one circle covering the body.
struct ObstaclePose {
  double x = 0.0, y = 0.0, phi = 0.0;
  double length = 0.0, width = 0.0;
  bool single_circle = false;
};

// Sum of hinge costs between the ego's two body circles and every obstacle
// circle: max(0, r_sum + margin - center distance) per pair.
double collision_cost(const EgoState& ego, const dyn::VehicleParams& ego_dims,
                      std::span<const ObstaclePose> obstacles, double margin);

// Hinge cost of the ego circles against the drivable-area boundary.
double ego_boundary_cost(const EgoState& ego, const dyn::VehicleParams& ego_dims,
                         const geo::CrossGeom& box, double margin);

// Environment interface shared by the intersection and the toy task. All
// methods are deterministic given the construction seed and episode index.
class Env {
 public:
  virtual ~Env() = default;
  virtual int obs_dim() const = 0;
  virtual int stp_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int max_stps() const = 0;
  virtual std::span<const double> action_low() const = 0;
  virtual std::span<const double> action_high() const = 0;
  virtual const NormTable& norm() const = 0;

  virtual void reset(uint64_t episode_index) = 0;
  virtual Observation observe() const = 0;
  virtual StepResult step(std::span<const double> action) = 0;

  // Snapshot consumed by the paired differentiable model (layout in
  // diff_model.hpp). Fixed dimension per env instance.
  virtual std::vector<double> model_state() const = 0;
  virtual int model_state_dim() const = 0;

  virtual int steps_done() const = 0;
  virtual double time() const = 0;
  virtual int episode_cap() const = 0;
};

// Scripted STP instance state within an episode.
struct StpRuntime {
  TrafficEntry entry;         // per-episode jittered copy
  const geo::Path* route = nullptr;
  double stop_s = 0.0;        // yield point, valid when entry.yields
  double s = 0.0;
  double speed_now = 0.0;
  double phi_prev = 0.0;
  double yaw_rate = 0.0;
  bool active = false;
  bool passed_stop = false;
};

class IntersectionEnv final : public Env {
 public:
  IntersectionEnv(const ScenarioConfig& cfg, int max_stps, uint64_t seed);

  int obs_dim() const override { return obs::kDim; }
  int stp_dim() const override { return stpf::kDim; }
  int action_dim() const override { return 2; }
  int max_stps() const override { return max_stps_; }
  std::span<const double> action_low() const override { return cfg_.action_low; }
  std::span<const double> action_high() const override { return cfg_.action_high; }
  const NormTable& norm() const override { return norm_; }

  void reset(uint64_t episode_index) override;
  Observation observe() const override;
  StepResult step(std::span<const double> action) override;

  std::vector<double> model_state() const override;
  int model_state_dim() const override;

  int steps_done() const override { return step_count_; }
  double time() const override { return time_; }
  int episode_cap() const override { return cfg_.episode_steps; }

  // Introspection for logging and tests.
  const EgoState& ego() const { return ego_; }
  const PathSet& paths() const { return paths_; }
  const std::vector<StpRuntime>& stps() const { return stps_; }
  bool ego_light_green() const;
  const ScenarioConfig& config() const { return cfg_; }
  const geo::CrossGeom& box() const { return box_; }
  double stop_line_s() const { return stop_line_s_[size_t(paths_.active)]; }

 private:
  void apply_tracking(TrackErrors* te) const;
  std::vector<double> assemble_x(const TrackErrors& te) const;

  ScenarioConfig cfg_;
  int max_stps_;
  uint64_t seed_;
  geo::CrossGeom box_;
  PathSet paths_;
  std::array<double, 3> stop_line_s_{};  // per candidate path
  std::map<std::string, geo::Path> routes_;
  SignalPlan signal_;
  NormTable norm_;
  std::string ego_move_;

  Rng rng_;
  EgoState ego_;
  std::vector<StpRuntime> stps_;
  double time_ = 0.0;
  int step_count_ = 0;
  bool was_in_box_ = false;
  bool done_ = false;
};

// Model-state snapshot layout (dimension 12 + 9 * max_stps):
//   [0..8] ego px, py, phi, v, v_lon, v_lat, yaw_rate, prev_a, prev_steer
//   [9] active path id, [10] ego light green flag, [11] active STP count
//   then per STP slot: active, x, y, phi, speed, yaw_rate, type code
//   (0 vehicle, 1 pedestrian, 2 cyclist), length, width.
namespace ms {
inline constexpr int kEgoPx = 0;
inline constexpr int kEgoPy = 1;
inline constexpr int kEgoPhi = 2;
inline constexpr int kEgoV = 3;
inline constexpr int kEgoVLon = 4;
inline constexpr int kEgoVLat = 5;
inline constexpr int kEgoYawRate = 6;
inline constexpr int kPrevA = 7;
inline constexpr int kPrevSteer = 8;
inline constexpr int kPathId = 9;
inline constexpr int kGreen = 10;
inline constexpr int kStpCount = 11;
inline constexpr int kStpBase = 12;
inline constexpr int kStpStride = 9;
inline constexpr int kStpActive = 0;
inline constexpr int kStpX = 1;
inline constexpr int kStpY = 2;
inline constexpr int kStpPhi = 3;
inline constexpr int kStpSpeed = 4;
inline constexpr int kStpYawRate = 5;
inline constexpr int kStpType = 6;
inline constexpr int kStpLength = 7;
inline constexpr int kStpWidth = 8;
inline int dim(int max_stps) { return kStpBase + kStpStride * max_stps; }
}  // namespace ms

}  // namespace cmpg
