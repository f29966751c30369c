#pragma once

#include <cmath>
#include <vector>

namespace cmpg::geo {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double hypot2(double dx, double dy) { return std::sqrt(dx * dx + dy * dy); }

// Polyline reference path, resampled to uniform arc-length spacing. Headings
// and target speeds are carried per point; target speed is the cruise speed
// capped by the lateral-acceleration limit in curves.
struct PathPoint {
  double x = 0.0, y = 0.0;
  double heading = 0.0;
  double s = 0.0;
  double v_target = 0.0;
  double curvature = 0.0;
};

struct Path {
  std::vector<PathPoint> pts;

  double length() const { return pts.empty() ? 0.0 : pts.back().s; }
  double spacing() const { return pts.size() > 1 ? pts[1].s - pts[0].s : 0.0; }

  struct Projection {
    int seg = 0;        // index of the segment's first point
    double t = 0.0;     // position within the segment, in [0, 1]
    double s = 0.0;     // arc length of the projected point
    double delta_y = 0.0;  // signed lateral offset, left of path positive
    double path_heading = 0.0;
    double v_target = 0.0;
    bool clamped = false;  // query fell beyond a path end
  };
  Projection project(double px, double py) const;
  PathPoint at_s(double s) const;
};

// Turns a dense point chain into a uniformly resampled Path with headings,
// curvature, and curvature-capped target speeds (with a braking ramp ahead
// of curvature peaks).
Path finalize_polyline(const std::vector<Vec2>& dense, double spacing, double v_cruise,
                       double lat_accel_limit);

// Appends a densely sampled cubic Hermite arc between two posed endpoints
// (the first point is skipped when `dense` already ends at p0).
void append_hermite(std::vector<Vec2>& dense, Vec2 p0, double heading0, Vec2 p1, double heading1,
                    double tangent0, double tangent1);

// Appends a straight segment from the chain's last point (or `from` when the
// chain is empty) to `to`.
void append_straight(std::vector<Vec2>& dense, Vec2 from, Vec2 to);

// Cubic Hermite arc between two posed endpoints, sampled densely and
// resampled to uniform spacing.
Path hermite_path(Vec2 p0, double heading0, Vec2 p1, double heading1,
                  double tangent0, double tangent1, double spacing,
                  double v_cruise, double lat_accel_limit);

// Two perpendicular road strips crossing at the origin. Drivable area is
// their union; inside_distance is positive inside it and is the exact
// clearance to the boundary except in the four concave corner pockets,
// where it under-reports (conservative for collision cost).
struct CrossGeom {
  double half_w_ns = 0.0;  // vertical road: |x| <= half_w_ns
  double half_w_ew = 0.0;  // horizontal road: |y| <= half_w_ew

  double inside_distance(double x, double y) const {
    return std::max(half_w_ns - std::fabs(x), half_w_ew - std::fabs(y));
  }
  bool in_box(double x, double y) const {
    return std::fabs(x) < half_w_ns && std::fabs(y) < half_w_ew;
  }
  bool in_box_expanded(double x, double y, double pad) const {
    return std::fabs(x) < half_w_ns + pad && std::fabs(y) < half_w_ew + pad;
  }
};

}  // namespace cmpg::geo
