#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "cmpg/config.hpp"
#include "cmpg/diff_model.hpp"
#include "cmpg/dynamics.hpp"
#include "cmpg/errors.hpp"
#include "cmpg/fdcheck.hpp"
#include "cmpg/geometry.hpp"
#include "cmpg/scenario.hpp"
#include "cmpg/world.hpp"

using namespace cmpg;
using ad::Tape;
using ad::Var;

namespace {

ScenarioConfig left_scenario() {
  ScenarioConfig sc;
  sc.task = "left";
  sc.path_select = "fixed1";
  return sc;
}

}  // namespace

TEST_CASE("bicycle step: straight coast and zero-speed clamp") {
  dyn::VehicleParams vp;
  auto out = dyn::bicycle_step<double>(0.0, 0.0, 0.0, 10.0, 0.0, 0.0, vp, 0.1);
  CHECK(out.px == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.py == doctest::Approx(0.0));
  CHECK(out.phi == doctest::Approx(0.0));
  CHECK(out.v == doctest::Approx(10.0));
  CHECK(out.v_lat == doctest::Approx(0.0));
  CHECK(out.yaw_rate == doctest::Approx(0.0));

  auto stopped = dyn::bicycle_step<double>(0.0, 0.0, 0.0, 0.0, -1.0, 0.0, vp, 0.1);
  CHECK(stopped.v == 0.0);
  CHECK(stopped.px == 0.0);
}

TEST_CASE("bicycle step: 5-step lateral position gradient matches finite differences") {
  const dyn::VehicleParams vp;
  const double dt = 0.1;
  auto rollout_py = [&](double delta) {
    double px = 0.0, py = 0.0, phi = 0.0, v = 8.0;
    for (int i = 0; i < 5; ++i) {
      auto s = dyn::bicycle_step<double>(px, py, phi, v, 0.3, delta, vp, dt);
      px = s.px;
      py = s.py;
      phi = s.phi;
      v = s.v;
    }
    return py;
  };

  Tape t;
  std::vector<double> params = {0.17};
  Var d = t.leaf_scalar(params[0], 0);
  Var px = t.constant_scalar(0.0), py = t.constant_scalar(0.0);
  Var phi = t.constant_scalar(0.0), v = t.constant_scalar(8.0);
  Var a = t.constant_scalar(0.3);
  for (int i = 0; i < 5; ++i) {
    auto s = dyn::bicycle_step<Var>(px, py, phi, v, a, d, vp, dt);
    px = s.px;
    py = s.py;
    phi = s.phi;
    v = s.v;
  }
  std::vector<double> grad(1, 0.0);
  t.backward_scalar(py, grad);

  FdReport rep = finite_diff_check(
      [&](std::span<const double> p) { return rollout_py(p[0]); }, params, grad, 1e-5);
  CHECK(rep.ok(1e-4));
}

TEST_CASE("arc prediction: straight limit, stationary, full-circle closure") {
  double px = 3.0, py = -2.0, phi = 0.7;
  dyn::arc_predict(px, py, phi, 5.0, 0.0, 1.0);
  CHECK(px == doctest::Approx(3.0 + 5.0 * std::cos(0.7)).epsilon(1e-12));
  CHECK(py == doctest::Approx(-2.0 + 5.0 * std::sin(0.7)).epsilon(1e-12));
  CHECK(phi == doctest::Approx(0.7));

  px = 1.0, py = 2.0, phi = 0.3;
  dyn::arc_predict(px, py, phi, 0.0, 0.5, 0.1);
  CHECK(px == 1.0);
  CHECK(py == 2.0);

  const double omega = 0.8;
  px = 4.0, py = 1.0, phi = 1.1;
  dyn::arc_predict(px, py, phi, 6.0, omega, 2.0 * M_PI / omega);
  CHECK(px == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(py == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::fabs(sm::wrap_angle(phi - 1.1)) < 1e-6);
}

TEST_CASE("tracking reward: zero point, single terms, rate term") {
  const double z = 0.0;
  CHECK(dyn::reward_value<double>(z, z, z, z, z, z, z, z, z, 0.1) == 0.0);
  CHECK(dyn::reward_value<double>(1.0, z, z, z, z, z, z, z, z, 0.1) ==
        doctest::Approx(-0.02).epsilon(1e-12));
  // Acceleration of 1 after 0 also pays the backward-difference rate term.
  CHECK(dyn::reward_value<double>(z, z, z, 1.0, z, z, z, 0.0, z, 0.1) ==
        doctest::Approx(-3.03).epsilon(1e-12));
}

TEST_CASE("collision hinge: separation, touching pair, symmetry under rigid motion") {
  CHECK(dyn::circle_pair_cost<double>(0.0, 0.0, 1.5, 0.0, 2.0) ==
        doctest::Approx(0.5).epsilon(1e-8));
  CHECK(dyn::circle_pair_cost<double>(0.0, 0.0, 50.0, 0.0, 2.0) == 0.0);

  EgoState ego;
  ego.px = 1.0;
  ego.py = 2.0;
  ego.phi = 0.4;
  dyn::VehicleParams dims;
  ObstaclePose obs;
  obs.x = 4.0;
  obs.y = 2.5;
  obs.phi = -0.2;
  obs.length = 4.8;
  obs.width = 2.0;
  const double base = collision_cost(ego, dims, std::span(&obs, 1), 0.2);
  CHECK(base > 0.0);

  // Rotate both bodies around the origin and translate them together.
  const double rot = 1.3, tx = -7.0, ty = 11.0;
  auto move = [&](double x, double y, double* ox, double* oy) {
    *ox = std::cos(rot) * x - std::sin(rot) * y + tx;
    *oy = std::sin(rot) * x + std::cos(rot) * y + ty;
  };
  EgoState ego2 = ego;
  move(ego.px, ego.py, &ego2.px, &ego2.py);
  ego2.phi = sm::wrap_angle(ego.phi + rot);
  ObstaclePose obs2 = obs;
  move(obs.x, obs.y, &obs2.x, &obs2.y);
  obs2.phi = sm::wrap_angle(obs.phi + rot);
  CHECK(collision_cost(ego2, dims, std::span(&obs2, 1), 0.2) ==
        doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("boundary cost: zero mid-lane, positive against the road edge") {
  GeometryConfig geom;
  geo::CrossGeom box{geom.half_width(), geom.half_width()};
  dyn::VehicleParams dims;
  EgoState ego;
  ego.px = geom.lane_width / 2.0;  // center of the inner northbound lane
  ego.py = -20.0;
  ego.phi = M_PI / 2.0;
  CHECK(ego_boundary_cost(ego, dims, box, 0.2) == 0.0);

  ego.px = geom.half_width();  // straddling the road edge
  CHECK(ego_boundary_cost(ego, dims, box, 0.2) > 0.0);
}

TEST_CASE("tracking errors: on-path zero, left-offset sign, heading wrap") {
  GeometryConfig geom;
  PathSet set = static_path_set("straight", geom, 8.0, 2.5);
  const geo::Path& path = set.paths[1];  // centerline variant
  const geo::PathPoint mid = path.at_s(path.length() / 2.0);

  TrackErrors te = tracking_errors(path, mid.x, mid.y, mid.heading, mid.v_target);
  CHECK(std::fabs(te.delta_y) < 1e-6);
  CHECK(std::fabs(te.delta_phi) < 1e-6);
  CHECK(std::fabs(te.delta_v) < 1e-9);
  CHECK_FALSE(te.clamped);

  // Path heads north; one meter left of it is one meter west.
  TrackErrors left = tracking_errors(path, mid.x - 1.0, mid.y, mid.heading, mid.v_target);
  CHECK(left.delta_y == doctest::Approx(1.0).epsilon(1e-6));

  // A westbound straight line exercises the pi / -pi seam.
  std::vector<geo::Vec2> dense;
  geo::append_straight(dense, {20.0, 0.0}, {-20.0, 0.0});
  geo::Path west = geo::finalize_polyline(dense, 0.5, 5.0, 2.5);
  TrackErrors seam = tracking_errors(west, 0.0, 0.0, -M_PI, 5.0);
  CHECK(std::fabs(seam.delta_phi) < 1e-9);
}

TEST_CASE("static path set: left-turn geometry, monotone arc length, unknown task") {
  GeometryConfig geom;
  PathSet left = static_path_set("left", geom, 8.0, 2.5);
  REQUIRE(left.paths.size() == 3);
  for (const geo::Path& p : left.paths) {
    const double h0 = p.pts.front().heading;
    const double h1 = p.pts.back().heading;
    CHECK(std::fabs(sm::wrap_angle(h1 - h0 - M_PI / 2.0)) < 0.05);
    for (size_t i = 1; i < p.pts.size(); ++i) CHECK(p.pts[i].s > p.pts[i - 1].s);
  }

  PathSet straight = static_path_set("straight", geom, 8.0, 2.5);
  for (const geo::Path& p : straight.paths)
    CHECK(std::fabs(sm::wrap_angle(p.pts.back().heading - p.pts.front().heading)) < 0.05);
  // The variants share endpoints but separate laterally in between.
  const double mid0 = straight.paths[0].at_s(straight.paths[0].length() / 2.0).x;
  const double mid1 = straight.paths[1].at_s(straight.paths[1].length() / 2.0).x;
  const double mid2 = straight.paths[2].at_s(straight.paths[2].length() / 2.0).x;
  CHECK(std::fabs(mid0 - mid1) > 0.3);
  CHECK(std::fabs(mid2 - mid1) > 0.3);

  CHECK_THROWS_AS(static_path_set("chicane", geom, 8.0, 2.5), ConfigError);
}

TEST_CASE("observation: dimensions, task and light encodings") {
  ScenarioConfig sc = left_scenario();
  auto env = make_env(sc, 8, 1);
  env->reset(0);
  CHECK(env->obs_dim() == obs::kDim);
  CHECK(env->stp_dim() == stpf::kDim);
  Observation o = env->observe();
  REQUIRE(int(o.x.size()) == obs::kDim);
  CHECK(o.stps.empty());  // no traffic configured
  CHECK(o.x[obs::kTaskOneHot] == 1.0);
  CHECK(o.x[obs::kTaskOneHot + 1] == 0.0);
  CHECK(o.x[obs::kTaskOneHot + 2] == 0.0);
  // No signal plan: always green, encoded [1, 0].
  CHECK(o.x[obs::kLight] == 1.0);
  CHECK(o.x[obs::kLight + 1] == 0.0);

  ScenarioConfig straight = sc;
  straight.task = "straight";
  auto env2 = make_env(straight, 8, 1);
  env2->reset(0);
  Observation o2 = env2->observe();
  CHECK(o2.x[obs::kTaskOneHot] == 0.0);
  CHECK(o2.x[obs::kTaskOneHot + 1] == 1.0);

  // Cross traffic holds the only green phase, so the ego's left movement
  // sees a non-green light (yellow is folded into this encoding).
  ScenarioConfig red = sc;
  SignalPhaseConfig ph;
  ph.movement = "ew_through";
  ph.duration_s = 50.0;
  red.signal.phases.push_back(ph);
  auto env3 = make_env(red, 8, 1);
  env3->reset(0);
  Observation o3 = env3->observe();
  CHECK(o3.x[obs::kLight] == 0.0);
  CHECK(o3.x[obs::kLight + 1] == 1.0);
}

TEST_CASE("environment: determinism, action clamp flag, collision ends the episode") {
  ScenarioConfig sc = left_scenario();
  sc.traffic.push_back(TrafficEntry{});
  sc.traffic.back().route = "sb_through_0";
  sc.traffic.back().spawn_time_s = 0.0;
  sc.traffic.back().start_s = 2.0;
  sc.traffic.back().speed = 6.0;

  auto env_a = make_env(sc, 8, 42);
  auto env_b = make_env(sc, 8, 42);
  env_a->reset(3);
  env_b->reset(3);
  std::vector<double> act = {0.4, 0.02};
  for (int i = 0; i < 30; ++i) {
    StepResult ra = env_a->step(act);
    StepResult rb = env_b->step(act);
    CHECK(ra.r == rb.r);
    CHECK(ra.c == rb.c);
    CHECK(ra.obs.x == rb.obs.x);
    CHECK(ra.obs.stps == rb.obs.stps);
    if (ra.done) break;
  }

  StepResult clamped = env_a->step(std::vector<double>{99.0, 0.0});
  CHECK(clamped.clamped);

  // A slow vehicle scripted onto the ego's own approach lane forces overlap.
  ScenarioConfig crash = left_scenario();
  crash.ego_start.s_lo = 4.0;
  crash.ego_start.s_hi = 4.0;
  crash.ego_start.v_lo = 6.0;
  crash.ego_start.v_hi = 6.0;
  crash.traffic.push_back(TrafficEntry{});
  crash.traffic.back().route = "nb_left_0";
  crash.traffic.back().spawn_time_s = 0.0;
  crash.traffic.back().start_s = 6.0;
  crash.traffic.back().speed = 0.5;
  auto env_c = make_env(crash, 8, 7);
  env_c->reset(0);
  bool collided = false;
  for (int i = 0; i < 40 && !collided; ++i) {
    StepResult r = env_c->step(std::vector<double>{1.0, 0.0});
    if (r.c_collision > 0.0) {
      collided = true;
      CHECK(r.d == 1);
      CHECK(r.c > 0.0);
      CHECK(r.done);  // collision terminates the episode
    }
  }
  CHECK(collided);
}

TEST_CASE("differentiable model mirrors the live env when no traffic moves") {
  ScenarioConfig sc = left_scenario();
  auto env = make_env(sc, 8, 11);
  env->reset(2);
  auto model = make_model(sc, 8);

  std::vector<double> state = env->model_state();
  Tape t;
  auto roll = model->begin(t, state, 10);

  std::vector<std::vector<double>> acts;
  for (int i = 0; i < 10; ++i) acts.push_back({0.5 - 0.05 * i, 0.03});

  for (int i = 0; i < 10; ++i) {
    Var a = t.constant(acts[size_t(i)]);
    auto [r_m, c_m] = roll->step(t, a);
    StepResult er = env->step(acts[size_t(i)]);
    CHECK(t.scalar(r_m) == doctest::Approx(er.r).epsilon(1e-9));
    CHECK(t.scalar(c_m) == doctest::Approx(er.c).epsilon(1e-9));
  }
}

TEST_CASE("config: defaults, unknown keys named, actor speed rule") {
  FullConfig cfg = parse_config("{}", "inline");
  CHECK(cfg.scenario.geometry.lane_width == 3.75);
  CHECK(cfg.scenario.geometry.bike_lane_width == 2.0);

  CHECK_THROWS_WITH_AS(
      parse_config(R"({"scenario":{"geometry":{"lane_widht":1.0}}})", "inline"),
      "config key 'scenario.geometry.lane_widht': unknown key", ConfigError);

  CHECK_THROWS_AS(parse_config(
                      R"({"scenario":{"traffic":[{"route":"ped_n_pos","type":"pedestrian","speed":4.0}]}})",
                      "inline"),
                  ConfigError);
}
