#pragma once

#include "cmpg/smath.hpp"
#include "cmpg/tape.hpp"

// Simulator kernels shared by the environment (S = double) and the
// differentiable rollout model (S = ad::Var). Constants stay double and mix
// in through the scalar operator overloads.
namespace cmpg::dyn {

using sm::abs2;
using sm::atan;
using sm::cos;
using sm::max2;
using sm::min2;
using sm::relu;
using sm::sin;
using sm::sqrt;
using sm::square;
using sm::tan;
using sm::wrap_angle;
using ad::abs2;
using ad::atan;
using ad::cos;
using ad::max2;
using ad::min2;
using ad::relu;
using ad::sin;
using ad::sqrt;
using ad::square;
using ad::tan;
using ad::wrap_angle;

struct VehicleParams {
  double lf = 1.4;      // front axle to CG (m)
  double lr = 1.6;      // rear axle to CG (m)
  double length = 4.8;  // body length (m)
  double width = 2.0;   // body width (m)
};

template <class S>
struct BikeStep {
  S px, py, phi, v;        // pose and speed after the step
  S v_lon, v_lat, yaw_rate;  // body-frame speeds realized over the step
};

// Kinematic bicycle, forward Euler at the current speed, speed clamped at 0.
// Reported lateral speed and yaw rate are the values realized over the step
// so that (phi' - phi)/dt == yaw_rate exactly.
template <class S>
BikeStep<S> bicycle_step(const S& px, const S& py, const S& phi, const S& v,
                         const S& a, const S& delta, const VehicleParams& vp, double dt) {
  const S beta = atan(tan(delta) * (vp.lr / (vp.lf + vp.lr)));
  const S heading = phi + beta;
  BikeStep<S> out;
  out.px = px + v * cos(heading) * dt;
  out.py = py + v * sin(heading) * dt;
  const S yaw_rate = v * sin(beta) * (1.0 / vp.lr);
  out.phi = wrap_angle(phi + yaw_rate * dt);
  out.v = relu(v + a * dt);
  out.v_lon = v * cos(beta);
  out.v_lat = v * sin(beta);
  out.yaw_rate = yaw_rate;
  return out;
}

// Constant speed + constant yaw rate arc, closed form. Exact for any dt; a
// full circle (dt = 2*pi/omega) returns to the start pose. Falls back to the
// straight-line limit below |omega| = 1e-6 rad/s.
inline void arc_predict(double& px, double& py, double& phi, double v, double omega, double dt) {
  if (std::fabs(omega) < 1e-6) {
    px += v * std::cos(phi) * dt;
    py += v * std::sin(phi) * dt;
    phi = sm::wrap_angle(phi + omega * dt);
    return;
  }
  const double phi1 = phi + omega * dt;
  px += v / omega * (std::sin(phi1) - std::sin(phi));
  py += v / omega * (-std::cos(phi1) + std::cos(phi));
  phi = sm::wrap_angle(phi1);
}

// Tracking-and-comfort reward. All rate terms are backward differences over
// dt; the error terms are evaluated at the post-step state.
template <class S>
S reward_value(const S& delta_y, const S& delta_phi, const S& delta_v, const S& a_des,
               const S& steer_des, const S& yaw_rate, const S& v_lat, const S& prev_a,
               const S& prev_steer, double dt) {
  const S a_rate = (a_des - prev_a) * (1.0 / dt);
  const S steer_rate = (steer_des - prev_steer) * (1.0 / dt);
  return -(square(delta_y) * 0.02 + square(delta_phi) * 0.03 + square(delta_v) * 0.03 +
           square(a_des) * 0.03 + square(steer_des) * 0.03 + square(yaw_rate) * 0.005 +
           square(v_lat) * 0.03 + square(a_rate) * 0.03 + square(steer_rate) * 0.05);
}

// One collision-cost term between two circles: hinge on center distance.
// sqrt is guarded away from 0 to keep the model gradient finite when circle
// centers coincide.
template <class S>
S circle_pair_cost(const S& ax, const S& ay, const S& bx, const S& by, double r_sum_margin) {
  const S dx = ax - bx;
  const S dy = ay - by;
  const S dist = sqrt(dx * dx + dy * dy + 1e-9);
  return relu(r_sum_margin - dist);
}

// Centers of the two body circles, at +/- length/4 along the heading.
template <class S>
struct BodyCircles {
  S fx, fy, rx, ry;
  double radius;
};

template <class S>
BodyCircles<S> body_circles(const S& px, const S& py, const S& phi, double length, double width) {
  const double off = length / 4.0;
  BodyCircles<S> c;
  const S cphi = cos(phi);
  const S sphi = sin(phi);
  c.fx = px + cphi * off;
  c.fy = py + sphi * off;
  c.rx = px - cphi * off;
  c.ry = py - sphi * off;
  c.radius = std::sqrt(off * off + (width / 2.0) * (width / 2.0));
  return c;
}

// Road-boundary cost for one circle against the crossing-strips drivable
// area: hinge on (radius + margin - inside_distance). inside_distance is
// max of the two strips' inside distances, so this is conservative in the
// concave corners.
template <class S>
S boundary_cost(const S& cx, const S& cy, double radius, double margin, double half_w_ns,
                double half_w_ew) {
  const S inside = max2(half_w_ns - abs2(cx), half_w_ew - abs2(cy));
  return relu(radius + margin - inside);
}

// Map a raw value into [-1, 1] given bounds, clamping. Used for both the
// observation vector and STP features; clamping is a relu pair so the same
// expression works on tape (saturation kills the gradient there, which is
// the intended behavior at the range edge).
template <class S>
S normalize_clamped(const S& x, double lo, double hi) {
  const S unit = (x - lo) * (2.0 / (hi - lo)) - 1.0;
  return unit - relu(unit - 1.0) + relu(-1.0 - unit);
}

}  // namespace cmpg::dyn
