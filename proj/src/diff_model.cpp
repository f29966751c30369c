#include "cmpg/diff_model.hpp"

#include <algorithm>
#include <cmath>

#include "cmpg/dynamics.hpp"
#include "cmpg/errors.hpp"
#include "cmpg/geometry.hpp"
#include "cmpg/toy_env.hpp"

namespace cmpg {
namespace {

using ad::Tape;
using ad::Var;

// Differentiable projection onto a fixed path. The nearest segment is picked
// from the current forward values (a piecewise-constant choice), then the
// within-segment math is rebuilt on tape so gradients flow through the
// clamped segment parameter.
struct TapeTrack {
  Var delta_y, delta_phi, delta_v, proj_s;
};

TapeTrack tape_tracking(Tape& t, const geo::Path& path, Var px, Var py, Var phi, Var v_lon) {
  const geo::Path::Projection pv = path.project(t.value(px)[0], t.value(py)[0]);
  const geo::PathPoint& a = path.pts[size_t(pv.seg)];
  const geo::PathPoint& b = path.pts[size_t(pv.seg) + 1];
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  const double elen = geo::hypot2(ex, ey);

  Var tp = t.div((px - a.x) * ex + (py - a.y) * ey, t.constant_scalar(len2));
  tp = tp - ad::relu(tp - 1.0) + ad::relu(-tp);  // clamp to [0, 1]
  const Var qx = tp * ex + a.x;
  const Var qy = tp * ey + a.y;
  TapeTrack out;
  out.delta_y = t.div((py - qy) * ex - (px - qx) * ey, t.constant_scalar(elen));
  const double dh = std::remainder(b.heading - a.heading, 2.0 * M_PI);
  const Var path_heading = ad::wrap_angle(tp * dh + a.heading);
  out.delta_phi = ad::wrap_angle(phi - path_heading);
  out.delta_v = v_lon - (tp * (b.v_target - a.v_target) + a.v_target);
  out.proj_s = tp * (b.s - a.s) + a.s;
  return out;
}

// One STP's predicted track: constant speed and yaw rate from the snapshot,
// poses precomputed for every rollout step. Plain doubles; the prediction
// does not depend on the actions, so nothing here needs a gradient.
struct StpTrack {
  std::vector<double> x, y, phi;  // horizon + 1 poses
  double speed = 0.0, omega = 0.0, length = 0.0, width = 0.0;
  int type = 0;  // 0 vehicle, 1 pedestrian, 2 cyclist
  bool single_circle = false;
};

class IntersectionRollout final : public ModelRollout {
 public:
  IntersectionRollout(const ScenarioConfig& cfg, const geo::Path& path, double stop_s, bool green,
                      const std::array<double, 3>& ref_oh, Tape& t, std::span<const double> msv,
                      int max_stps, int horizon)
      : cfg_(cfg), path_(path), stop_s_(stop_s), green_(green), ref_oh_(ref_oh),
        horizon_(horizon) {
    px_ = t.constant_scalar(msv[ms::kEgoPx]);
    py_ = t.constant_scalar(msv[ms::kEgoPy]);
    phi_ = t.constant_scalar(msv[ms::kEgoPhi]);
    v_ = t.constant_scalar(msv[ms::kEgoV]);
    v_lon_ = t.constant_scalar(msv[ms::kEgoVLon]);
    v_lat_ = t.constant_scalar(msv[ms::kEgoVLat]);
    yaw_ = t.constant_scalar(msv[ms::kEgoYawRate]);
    prev_a_ = t.constant_scalar(msv[ms::kPrevA]);
    prev_steer_ = t.constant_scalar(msv[ms::kPrevSteer]);

    const int count = std::min(static_cast<int>(msv[ms::kStpCount]), max_stps);
    for (int k = 0; k < count; ++k) {
      const double* slot = msv.data() + ms::kStpBase + ms::kStpStride * k;
      if (slot[ms::kStpActive] < 0.5) continue;
      StpTrack tr;
      tr.speed = slot[ms::kStpSpeed];
      tr.omega = slot[ms::kStpYawRate];
      tr.length = slot[ms::kStpLength];
      tr.width = slot[ms::kStpWidth];
      tr.type = static_cast<int>(slot[ms::kStpType]);
      tr.single_circle = tr.type != 0;
      double x = slot[ms::kStpX], y = slot[ms::kStpY], ph = slot[ms::kStpPhi];
      tr.x.reserve(size_t(horizon) + 1);
      tr.y.reserve(size_t(horizon) + 1);
      tr.phi.reserve(size_t(horizon) + 1);
      for (int i = 0; i <= horizon; ++i) {
        tr.x.push_back(x);
        tr.y.push_back(y);
        tr.phi.push_back(ph);
        dyn::arc_predict(x, y, ph, tr.speed, tr.omega, cfg_.dt);
      }
      stps_.push_back(std::move(tr));
    }
  }

  ObsVars observe(Tape& t) override {
    std::vector<double> oh(8, 0.0);
    for (int i = 0; i < 3; ++i) oh[size_t(i)] = ref_oh_[size_t(i)];
    const int task_idx = cfg_.task == "left" ? 0 : (cfg_.task == "straight" ? 1 : 2);
    oh[size_t(3 + task_idx)] = 1.0;
    oh[6] = green_ ? 1.0 : 0.0;
    oh[7] = green_ ? 0.0 : 1.0;
    const Var ref_c = t.constant(std::span<const double>(oh.data(), 3));
    const Var task_light_c = t.constant(std::span<const double>(oh.data() + 3, 5));

    const TapeTrack te = tape_tracking(t, path_, px_, py_, phi_, v_lon_);
    std::vector<Var> parts{v_lon_,       v_lat_,     yaw_,        px_,   py_,
                           phi_,         prev_a_,    prev_steer_, ref_c, te.delta_y,
                           te.delta_phi, te.delta_v, task_light_c};
    ObsVars o;
    o.x = t.concat(parts);

    const double epx = t.value(px_)[0], epy = t.value(py_)[0];
    const Var cphi = ad::cos(phi_);
    const Var sphi = ad::sin(phi_);
    for (const StpTrack& tr : stps_) {
      const double sx = tr.x[size_t(i_)], sy = tr.y[size_t(i_)], sph = tr.phi[size_t(i_)];
      if (std::hypot(sx - epx, sy - epy) > cfg_.perception_radius) continue;
      const Var ddx = sx - px_;
      const Var ddy = sy - py_;
      const Var lat = cphi * ddy - sphi * ddx;
      const Var lon = cphi * ddx + sphi * ddy;
      const Var rel_heading = ad::wrap_angle(sph - phi_);
      const Var speed_c = t.constant_scalar(tr.speed);
      const Var yaw_c = t.constant_scalar(tr.omega);
      std::vector<double> rest(5, 0.0);
      rest[0] = tr.length;
      rest[1] = tr.width;
      rest[size_t(2 + tr.type)] = 1.0;
      const Var rest_c = t.constant(rest);
      std::vector<Var> fparts{lat, lon, speed_c, rel_heading, yaw_c, rest_c};
      o.members.push_back(t.concat(fparts));
    }
    return o;
  }

  std::pair<Var, Var> step(Tape& t, Var action) override {
    if (i_ >= horizon_) throw UsageError("ModelRollout::step: past the rollout horizon");
    const Var a = t.slice(action, 0, 1);
    const Var steer = t.slice(action, 1, 1);
    const dyn::BikeStep<Var> next =
        dyn::bicycle_step(px_, py_, phi_, v_, a, steer, cfg_.vehicle, cfg_.dt);
    ++i_;

    const TapeTrack te = tape_tracking(t, path_, next.px, next.py, next.phi, next.v_lon);
    const Var r = dyn::reward_value(te.delta_y, te.delta_phi, te.delta_v, a, steer, next.yaw_rate,
                                    next.v_lat, prev_a_, prev_steer_, cfg_.dt);

    const double ego_r = std::hypot(cfg_.vehicle.length / 4.0, cfg_.vehicle.width / 2.0);
    const dyn::BodyCircles<Var> bc =
        dyn::body_circles(next.px, next.py, next.phi, cfg_.vehicle.length, cfg_.vehicle.width);
    const Var ecx[2] = {bc.fx, bc.rx};
    const Var ecy[2] = {bc.fy, bc.ry};

    Var coll = t.constant_scalar(0.0);
    for (const StpTrack& tr : stps_) {
      const double sx = tr.x[size_t(i_)], sy = tr.y[size_t(i_)], sph = tr.phi[size_t(i_)];
      double ocx[2], ocy[2], ocr;
      int n;
      if (tr.single_circle) {
        ocx[0] = sx;
        ocy[0] = sy;
        ocr = std::hypot(tr.length / 2.0, tr.width / 2.0);
        n = 1;
      } else {
        const double off = tr.length / 4.0;
        const double cx = std::cos(sph) * off, cy = std::sin(sph) * off;
        ocx[0] = sx + cx;
        ocy[0] = sy + cy;
        ocx[1] = sx - cx;
        ocy[1] = sy - cy;
        ocr = std::hypot(off, tr.width / 2.0);
        n = 2;
      }
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < n; ++j) {
          coll = coll + dyn::circle_pair_cost(ecx[i], ecy[i], t.constant_scalar(ocx[j]),
                                              t.constant_scalar(ocy[j]),
                                              ego_r + ocr + cfg_.collision_margin);
        }
      }
    }

    const double H = cfg_.geometry.half_width();
    const Var bound = dyn::boundary_cost(ecx[0], ecy[0], ego_r, cfg_.collision_margin, H, H) +
                      dyn::boundary_cost(ecx[1], ecy[1], ego_r, cfg_.collision_margin, H, H);
    Var c = coll + bound;
    if (!green_) {
      const Var front_s = te.proj_s + cfg_.vehicle.length / 2.0;
      c = c + ad::relu(front_s - stop_s_);
    }

    px_ = next.px;
    py_ = next.py;
    phi_ = next.phi;
    v_ = next.v;
    v_lon_ = next.v_lon;
    v_lat_ = next.v_lat;
    yaw_ = next.yaw_rate;
    prev_a_ = a;
    prev_steer_ = steer;
    return {r, c};
  }

 private:
  const ScenarioConfig& cfg_;
  const geo::Path& path_;
  double stop_s_;
  bool green_;
  std::array<double, 3> ref_oh_;
  int horizon_;
  int i_ = 0;
  Var px_, py_, phi_, v_, v_lon_, v_lat_, yaw_, prev_a_, prev_steer_;
  std::vector<StpTrack> stps_;
};

class IntersectionModel final : public DiffModel {
 public:
  IntersectionModel(const ScenarioConfig& cfg, int max_stps) : cfg_(cfg), max_stps_(max_stps) {
    paths_ = static_path_set(cfg_.task, cfg_.geometry, cfg_.v_cruise, cfg_.lat_accel_limit);
    for (int i = 0; i < 3; ++i)
      stop_line_s_[size_t(i)] = route_stop_s(paths_.paths[size_t(i)], cfg_.geometry, 0.0,
                                             cfg_.geometry.stop_line_setback);
  }

  std::unique_ptr<ModelRollout> begin(Tape& t, std::span<const double> msv,
                                      int horizon) const override {
    if (static_cast<int>(msv.size()) != ms::dim(max_stps_))
      throw UsageError("IntersectionModel::begin: model-state size mismatch");
    if (horizon < 1) throw UsageError("IntersectionModel::begin: horizon must be at least 1");
    const int path_id = static_cast<int>(msv[ms::kPathId]);
    if (path_id < 0 || path_id > 2)
      throw UsageError("IntersectionModel::begin: bad path id in model state");
    PathSet ref_only;
    ref_only.active = path_id;
    return std::make_unique<IntersectionRollout>(
        cfg_, paths_.paths[size_t(path_id)], stop_line_s_[size_t(path_id)], msv[ms::kGreen] > 0.5,
        ref_only.ref_one_hot(), t, msv, max_stps_, horizon);
  }

 private:
  ScenarioConfig cfg_;
  int max_stps_;
  PathSet paths_;
  std::array<double, 3> stop_line_s_{};
};

class ToyRollout final : public ModelRollout {
 public:
  ToyRollout(const ScenarioConfig& cfg, Tape& t, double p0, int horizon)
      : cfg_(cfg), horizon_(horizon) {
    p_ = t.constant_scalar(p0);
  }

  ObsVars observe(Tape&) override {
    ObsVars o;
    o.x = p_;
    return o;
  }

  std::pair<Var, Var> step(Tape&, Var action) override {
    if (i_ >= horizon_) throw UsageError("ModelRollout::step: past the rollout horizon");
    ++i_;
    p_ = p_ + action * cfg_.dt;
    const Var err = p_ - cfg_.toy_p_ref;
    const Var r = -(err * err);
    const Var c = ad::relu(p_ - cfg_.toy_limit);
    return {r, c};
  }

 private:
  const ScenarioConfig& cfg_;
  int horizon_;
  int i_ = 0;
  Var p_;
};

class ToyModel final : public DiffModel {
 public:
  explicit ToyModel(const ScenarioConfig& cfg) : cfg_(cfg) {}

  std::unique_ptr<ModelRollout> begin(Tape& t, std::span<const double> msv,
                                      int horizon) const override {
    if (msv.size() != 1) throw UsageError("ToyModel::begin: model-state size mismatch");
    if (horizon < 1) throw UsageError("ToyModel::begin: horizon must be at least 1");
    return std::make_unique<ToyRollout>(cfg_, t, msv[0], horizon);
  }

 private:
  ScenarioConfig cfg_;
};

}  // namespace

std::unique_ptr<DiffModel> make_intersection_model(const ScenarioConfig& cfg, int max_stps) {
  return std::make_unique<IntersectionModel>(cfg, max_stps);
}

std::unique_ptr<DiffModel> make_toy_model(const ScenarioConfig& cfg) {
  return std::make_unique<ToyModel>(cfg);
}

std::unique_ptr<Env> make_env(const ScenarioConfig& cfg, int max_stps, uint64_t seed) {
  if (cfg.kind == "toy") return std::make_unique<ToyEnv>(cfg, seed);
  return std::make_unique<IntersectionEnv>(cfg, max_stps, seed);
}

std::unique_ptr<DiffModel> make_model(const ScenarioConfig& cfg, int max_stps) {
  if (cfg.kind == "toy") return make_toy_model(cfg);
  return make_intersection_model(cfg, max_stps);
}

}  // namespace cmpg
