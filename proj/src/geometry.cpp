#include "cmpg/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "cmpg/errors.hpp"

namespace cmpg::geo {

Path::Projection Path::project(double px, double py) const {
  if (pts.size() < 2) throw UsageError("Path::project: path has fewer than 2 points");
  Projection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i + 1 < static_cast<int>(pts.size()); ++i) {
    const PathPoint& a = pts[size_t(i)];
    const PathPoint& b = pts[size_t(i) + 1];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0.0 ? ((px - a.x) * ex + (py - a.y) * ey) / len2 : 0.0;
    const bool clamped_here =
        (t < 0.0 && i == 0) || (t > 1.0 && i + 2 == static_cast<int>(pts.size()));
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a.x + t * ex, qy = a.y + t * ey;
    const double d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.seg = i;
      best.t = t;
      best.clamped = clamped_here;
    }
  }
  const PathPoint& a = pts[size_t(best.seg)];
  const PathPoint& b = pts[size_t(best.seg) + 1];
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double elen = hypot2(ex, ey);
  const double qx = a.x + best.t * ex, qy = a.y + best.t * ey;
  best.s = a.s + best.t * (b.s - a.s);
  // Signed offset: positive when the query point lies to the left of the path
  // direction.
  best.delta_y = elen > 0.0 ? (ex * (py - qy) - ey * (px - qx)) / elen : 0.0;
  double dh = std::remainder(b.heading - a.heading, 2.0 * M_PI);
  best.path_heading = std::remainder(a.heading + best.t * dh, 2.0 * M_PI);
  best.v_target = a.v_target + best.t * (b.v_target - a.v_target);
  return best;
}

PathPoint Path::at_s(double s) const {
  if (pts.empty()) throw UsageError("Path::at_s: empty path");
  if (pts.size() == 1 || s <= pts.front().s) return pts.front();
  if (s >= pts.back().s) return pts.back();
  int lo = 0, hi = static_cast<int>(pts.size()) - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (pts[size_t(mid)].s <= s) lo = mid; else hi = mid;
  }
  const PathPoint& a = pts[size_t(lo)];
  const PathPoint& b = pts[size_t(hi)];
  const double t = (b.s - a.s) > 0.0 ? (s - a.s) / (b.s - a.s) : 0.0;
  PathPoint out;
  out.x = a.x + t * (b.x - a.x);
  out.y = a.y + t * (b.y - a.y);
  out.s = s;
  out.heading = std::remainder(a.heading + t * std::remainder(b.heading - a.heading, 2.0 * M_PI),
                               2.0 * M_PI);
  out.v_target = a.v_target + t * (b.v_target - a.v_target);
  out.curvature = a.curvature + t * (b.curvature - a.curvature);
  return out;
}

void append_hermite(std::vector<Vec2>& dense, Vec2 p0, double heading0, Vec2 p1, double heading1,
                    double tangent0, double tangent1) {
  const double m0x = tangent0 * std::cos(heading0), m0y = tangent0 * std::sin(heading0);
  const double m1x = tangent1 * std::cos(heading1), m1y = tangent1 * std::sin(heading1);
  const int kDense = 256;
  const bool skip_first =
      !dense.empty() && hypot2(dense.back().x - p0.x, dense.back().y - p0.y) < 1e-9;
  for (int i = skip_first ? 1 : 0; i <= kDense; ++i) {
    const double t = double(i) / kDense;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    dense.push_back({h00 * p0.x + h10 * m0x + h01 * p1.x + h11 * m1x,
                     h00 * p0.y + h10 * m0y + h01 * p1.y + h11 * m1y});
  }
}

void append_straight(std::vector<Vec2>& dense, Vec2 from, Vec2 to) {
  Vec2 start = dense.empty() ? from : dense.back();
  const double len = hypot2(to.x - start.x, to.y - start.y);
  const int n = std::max(2, static_cast<int>(std::ceil(len / 0.5)) + 1);
  const bool skip_first = !dense.empty();
  for (int i = skip_first ? 1 : 0; i < n; ++i) {
    const double t = double(i) / (n - 1);
    dense.push_back({start.x + t * (to.x - start.x), start.y + t * (to.y - start.y)});
  }
}

Path finalize_polyline(const std::vector<Vec2>& dense, double spacing, double v_cruise,
                       double lat_accel_limit) {
  if (spacing <= 0.0) throw ConfigError("finalize_polyline: spacing must be positive");
  if (v_cruise <= 0.0) throw ConfigError("finalize_polyline: v_cruise must be positive");
  if (dense.size() < 2) throw ConfigError("finalize_polyline: need at least 2 points");
  const int last = static_cast<int>(dense.size()) - 1;
  std::vector<double> ss(dense.size(), 0.0);
  for (int i = 1; i <= last; ++i)
    ss[size_t(i)] = ss[size_t(i) - 1] + hypot2(dense[size_t(i)].x - dense[size_t(i) - 1].x,
                                               dense[size_t(i)].y - dense[size_t(i) - 1].y);
  const double total = ss.back();
  const int n = std::max(2, static_cast<int>(std::round(total / spacing)) + 1);
  Path path;
  path.pts.resize(size_t(n));
  int j = 0;
  for (int i = 0; i < n; ++i) {
    const double s = total * double(i) / (n - 1);
    while (j + 1 < last && ss[size_t(j) + 1] < s) ++j;
    const double seg = ss[size_t(j) + 1] - ss[size_t(j)];
    const double t = seg > 0.0 ? (s - ss[size_t(j)]) / seg : 0.0;
    PathPoint& p = path.pts[size_t(i)];
    p.x = dense[size_t(j)].x + t * (dense[size_t(j) + 1].x - dense[size_t(j)].x);
    p.y = dense[size_t(j)].y + t * (dense[size_t(j) + 1].y - dense[size_t(j)].y);
    p.s = s;
  }
  // Headings from chords, curvature from heading rate, then the speed cap.
  const int m = static_cast<int>(path.pts.size());
  for (int i = 0; i < m; ++i) {
    const int a = std::max(0, i - 1), b = std::min(m - 1, i + 1);
    path.pts[size_t(i)].heading = std::atan2(path.pts[size_t(b)].y - path.pts[size_t(a)].y,
                                             path.pts[size_t(b)].x - path.pts[size_t(a)].x);
  }
  for (int i = 0; i < m; ++i) {
    const int a = std::max(0, i - 1), b = std::min(m - 1, i + 1);
    const double ds = path.pts[size_t(b)].s - path.pts[size_t(a)].s;
    const double dh =
        std::remainder(path.pts[size_t(b)].heading - path.pts[size_t(a)].heading, 2.0 * M_PI);
    path.pts[size_t(i)].curvature = ds > 0.0 ? dh / ds : 0.0;
  }
  for (int i = 0; i < m; ++i) {
    const double k = std::fabs(path.pts[size_t(i)].curvature);
    double v = v_cruise;
    if (k > 1e-6 && lat_accel_limit > 0.0) v = std::min(v, std::sqrt(lat_accel_limit / k));
    path.pts[size_t(i)].v_target = v;
  }
  // Smooth the curve-entry speed profile so targets ramp down ahead of the
  // curvature peak instead of stepping at it (backward pass, 1.5 m/s^2 ramp).
  for (int i = m - 2; i >= 0; --i) {
    const double ds = path.pts[size_t(i) + 1].s - path.pts[size_t(i)].s;
    const double vmax2 = path.pts[size_t(i) + 1].v_target * path.pts[size_t(i) + 1].v_target +
                         2.0 * 1.5 * ds;
    path.pts[size_t(i)].v_target = std::min(path.pts[size_t(i)].v_target, std::sqrt(vmax2));
  }
  return path;
}

Path hermite_path(Vec2 p0, double heading0, Vec2 p1, double heading1,
                  double tangent0, double tangent1, double spacing,
                  double v_cruise, double lat_accel_limit) {
  std::vector<Vec2> dense;
  append_hermite(dense, p0, heading0, p1, heading1, tangent0, tangent1);
  return finalize_polyline(dense, spacing, v_cruise, lat_accel_limit);
}

}  // namespace cmpg::geo
