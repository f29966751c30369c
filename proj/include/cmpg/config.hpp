#pragma once

#include <string>
#include <vector>

#include "cmpg/dynamics.hpp"

namespace cmpg {

struct GeometryConfig {
  double lane_width = 3.75;
  double bike_lane_width = 2.0;
  int lanes_per_direction = 2;
  double approach_length = 40.0;
  double exit_length = 40.0;
  double stop_line_setback = 3.0;  // behind the crosswalk band at the box edge

  // Half width of each road strip, bike lane outermost.
  double half_width() const { return lanes_per_direction * lane_width + bike_lane_width; }
};

struct SignalPhaseConfig {
  std::string movement;  // ns_through | ns_left | ew_through | ew_left
  double duration_s = 20.0;
};

struct SignalConfig {
  double offset_s = 0.0;
  std::vector<SignalPhaseConfig> phases;  // empty -> ego movement always green
};

struct TrafficEntry {
  std::string route;  // key into the scenario route table
  std::string type = "vehicle";  // vehicle | pedestrian | cyclist
  double spawn_time_s = 0.0;
  double start_s = 0.0;
  double speed = 7.0;
  bool yields = false;  // gap-acceptance stop before the crossing box
  double length = 4.8;
  double width = 2.0;
};

struct EgoStartConfig {
  double s_lo = 2.0, s_hi = 6.0;  // initial arc position on the active path
  double v_lo = 4.0, v_hi = 7.0;  // initial speed range
};

struct ScenarioConfig {
  std::string kind = "intersection";  // intersection | toy
  double dt = 0.1;
  int episode_steps = 200;
  std::string task = "left";          // left | straight | right
  std::string path_select = "cycle";  // cycle | fixed0 | fixed1 | fixed2
  GeometryConfig geometry;
  dyn::VehicleParams vehicle;
  std::vector<double> action_low{-3.0, -0.4};
  std::vector<double> action_high{1.5, 0.4};
  double collision_margin = 0.2;
  double perception_radius = 40.0;
  double perception_noise_std = 0.0;
  double v_cruise = 8.0;
  double lat_accel_limit = 2.5;
  EgoStartConfig ego_start;
  SignalConfig signal;
  std::vector<TrafficEntry> traffic;
  double jitter_time_s = 0.0;  // per-episode uniform spawn-time jitter
  double jitter_s = 0.0;       // per-episode uniform start-offset jitter
  double jitter_speed = 0.0;   // per-episode uniform speed jitter

  // Toy point-mass task fields (kind == "toy").
  double toy_p_ref = 0.8;
  double toy_limit = 0.6;
  int toy_steps = 100;
};

struct EncoderConfig {
  std::string kind = "abe";  // abe | esc | ordered
  int d3 = 32;
  int h_hidden = 32;
  int attn_hidden = 16;
  int max_stps = 16;  // capacity for the ordered baseline and replay storage
};

struct TrainerConfig {
  double gamma = 0.98;
  int horizon_n = 25;
  int batch = 256;
  long buffer_capacity = 500000;
  double tau = 0.005;
  double lr_policy = 3e-4;
  double lr_encoder = 3e-4;
  double lr_critic = 8e-4;
  double sigma0 = 5.0;
  double sigma_grow = 1.5;
  int max_outer = 8;
  int max_inner = 200;     // inner-iteration budget per outer step
  int min_inner = 20;      // convergence not tested before this many
  int inner_window = 10;   // smoothing window for the J_p convergence test
  double inner_tol = 1e-3;
  int episodes_per_iter = 1;
  int updates_per_iter = 50;
  int policy_every = 2;    // critic updates per policy/encoder step
  int warmup_episodes = 5;
  int model_batch = 16;    // BPTT start states per policy step
  std::string mix_mode = "anneal";  // anneal | constant | inverse_variance
  double mix_w_data = 0.5;          // constants mode / degenerate fallback
  double ema_beta = 0.9;            // inverse-variance statistics decay
  std::string optimizer = "adam";   // adam | sgd
  double explore_noise = 0.1;       // std as a fraction of the action range
  double smooth_noise_std = 0.05;   // target-policy smoothing, fraction of range
  double smooth_noise_clip = 0.1;
  bool target_smoothing = true;
  std::vector<int> policy_widths{64, 64};
  std::vector<int> critic_widths{96, 96};
  double divergence_loss = 1e6;
  int divergence_iters = 25;
  int checkpoint_every = 0;  // inner iterations between periodic checkpoints, 0 = final only
  bool buffer_in_checkpoint = true;
  bool timing = false;  // wall-time fields in logs; off keeps logs byte-stable
};

// One battery row: the base scenario with task/traffic overridden, run
// `episodes` times under per-episode seeds.
struct BatteryEntry {
  std::string name;
  std::string composition = "default";  // group_stats tag
  std::string task = "left";
  std::string path_select = "cycle";
  std::vector<TrafficEntry> traffic;
  bool traffic_overridden = false;  // distinguishes [] from "inherit base"
  int episodes = 1;
};

struct FullConfig {
  ScenarioConfig scenario;
  EncoderConfig encoder;
  TrainerConfig trainer;
  std::vector<BatteryEntry> battery;
};

// Parses the run config JSON. Unknown keys are rejected and every error
// names the offending key path.
FullConfig load_config(const std::string& path);
FullConfig parse_config(const std::string& text, const std::string& origin);

}  // namespace cmpg
