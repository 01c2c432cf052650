#pragma once

/**
 * @file path.hpp
 * @brief Arc-plus-line contour geometry and a reference planner that emits
 *        a double-integrator trajectory reproducible bit-for-bit by the
 *        reference recursion used inside the controller.
 */

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cmpc/models.hpp"

namespace cmpc {

/// Full counter-clockwise circle entered at angle 0, followed by the
/// tangent line leaving the junction vertically.
struct PathGeometry {
  double radius = 0.08;
  Eigen::Vector2d center{0.0, 0.0};
  double line_length = 0.05;

  double circle_length() const { return 2.0 * std::numbers::pi * radius; }
  double total_length() const { return circle_length() + line_length; }

  Eigen::Vector2d pos(double s) const {
    if (s <= circle_length()) {
      const double phi = s / radius;
      return center + radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    }
    const double t = std::min(s - circle_length(), line_length);
    return center + Eigen::Vector2d(radius, t);
  }

  double curvature(double s) const {
    return s <= circle_length() ? 1.0 / radius : 0.0;
  }

  /// Distance from a point to the contour (circle arc union segment).
  double contour_distance(const Eigen::Vector2d& p) const {
    const double dc = std::abs((p - center).norm() - radius);
    const Eigen::Vector2d a = center + Eigen::Vector2d(radius, 0.0);
    const double t =
        std::clamp(p.y() - a.y(), 0.0, line_length);
    const double dl = (p - (a + Eigen::Vector2d(0.0, t))).norm();
    return std::min(dc, dl);
  }
};

/// Tool position from the axis coordinates (carriage x_h on the beam,
/// beam centre y_n, beam rotation theta, tool drop D below the beam).
inline Eigen::Vector2d end_effector(double x_h, double y_n, double theta,
                                    double D) {
  return {x_h * std::cos(theta) + D * std::sin(theta),
          y_n + x_h * std::sin(theta) - D * std::cos(theta)};
}

struct PlannerOptions {
  double Ts = 2e-3;
  double v_max = 0.1;
  double a_max = 1.0;
  double margin = 0.9;   ///< fraction of v/a the plan is allowed to use
  int dwell = 50;        ///< rest ticks appended at both ends
  double grid_ds = 5e-4; ///< arc-length grid for the speed-limit passes
};

/**
 * Per-axis reference trajectory in tool coordinates. rx/ry hold (position,
 * velocity) states generated by r(k+1) = A r(k) + B u(k) with the stored
 * inputs, so a consumer re-running the recursion reproduces the table
 * exactly. Past the last tick the plan holds position with zero input.
 */
struct ReferencePlan {
  std::vector<Eigen::Vector2d> rx, ry;
  std::vector<double> ux, uy;
  double Ts = 2e-3;
  int ticks() const { return static_cast<int>(ux.size()); }

  Eigen::Vector2d rx_at(int k) const { return rx[std::min(k, ticks())]; }
  Eigen::Vector2d ry_at(int k) const { return ry[std::min(k, ticks())]; }
  double ux_at(int k) const { return k < ticks() ? ux[k] : 0.0; }
  double uy_at(int k) const { return k < ticks() ? uy[k] : 0.0; }

  Eigen::Vector2d tool_ref(int k) const {
    return {rx_at(k)(0), ry_at(k)(0)};
  }
};

namespace detail {

/// Curvature- and endpoint-limited speed profile on an arc-length grid,
/// smoothed by forward/backward acceleration passes.
inline std::vector<double> speed_profile(const PathGeometry& g,
                                         const PlannerOptions& o,
                                         double* ds_out) {
  const int n = std::max(4, static_cast<int>(std::ceil(g.total_length() /
                                                       o.grid_ds))) + 1;
  const double ds = g.total_length() / (n - 1);
  const double vcap = o.margin * o.v_max;
  const double acap = o.margin * o.a_max;
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    const double k = g.curvature(ds * i);
    v[i] = k > 0 ? std::min(vcap, std::sqrt(acap / k)) : vcap;
  }
  v.front() = 0.0;
  v.back() = 0.0;
  for (int i = 1; i < n; ++i) {
    const double k = g.curvature(ds * i);
    const double an = v[i - 1] * v[i - 1] * k;
    const double at = std::sqrt(std::max(acap * acap - an * an, 1e-8));
    v[i] = std::min(v[i], std::sqrt(v[i - 1] * v[i - 1] + 2 * at * ds));
  }
  for (int i = n - 2; i >= 0; --i) {
    const double k = g.curvature(ds * i);
    const double an = v[i + 1] * v[i + 1] * k;
    const double at = std::sqrt(std::max(acap * acap - an * an, 1e-8));
    v[i] = std::min(v[i], std::sqrt(v[i + 1] * v[i + 1] + 2 * at * ds));
  }
  *ds_out = ds;
  return v;
}

}  // namespace detail

inline ReferencePlan plan_reference(const PathGeometry& g,
                                    const PlannerOptions& o) {
  if (o.Ts <= 0 || o.v_max <= 0 || o.a_max <= 0)
    throw std::invalid_argument("planner: Ts, v_max, a_max must be positive");
  if (o.margin <= 0 || o.margin > 1)
    throw std::invalid_argument("planner: margin must lie in (0, 1]");

  double ds = 0;
  const std::vector<double> vlim = detail::speed_profile(g, o, &ds);
  auto v_of_s = [&](double s) {
    const double t = std::clamp(s / ds, 0.0, vlim.size() - 1.0);
    const int i = std::min(static_cast<int>(t),
                           static_cast<int>(vlim.size()) - 2);
    const double a = t - i;
    return (1 - a) * vlim[i] + a * vlim[i + 1];
  };

  // March arc length at Ts using midpoint speeds; collect path samples.
  std::vector<Eigen::Vector2d> pts;
  pts.push_back(g.pos(0.0));
  double s = 0.0;
  const double send = g.total_length();
  const long cap = static_cast<long>(600.0 / o.Ts);
  while (s < send) {
    const double vm = v_of_s(s + 0.5 * o.Ts * v_of_s(s));
    s += o.Ts * std::max(vm, 1e-4 * o.v_max);
    pts.push_back(g.pos(std::min(s, send)));
    if (static_cast<long>(pts.size()) > cap)
      throw std::runtime_error("planner: march failed to reach path end");
  }
  for (int i = 0; i < o.dwell; ++i) pts.push_back(pts.back());
  pts.insert(pts.begin(), o.dwell, pts.front());

  const int K = static_cast<int>(pts.size()) - 1;
  std::vector<Eigen::Vector2d> vel(K + 1);
  for (int k = 0; k < K; ++k) vel[k] = (pts[k + 1] - pts[k]) / o.Ts;
  vel[K].setZero();

  ReferencePlan plan;
  plan.Ts = o.Ts;
  plan.ux.resize(K);
  plan.uy.resize(K);
  for (int k = 0; k < K; ++k) {
    const Eigen::Vector2d a = (vel[k + 1] - vel[k]) / o.Ts;
    plan.ux[k] = std::clamp(a.x(), -o.a_max, o.a_max);
    plan.uy[k] = std::clamp(a.y(), -o.a_max, o.a_max);
  }

  // Regenerate the state tables through the recursion itself so that the
  // published tables and the model rollout agree to the last bit.
  const RefModel rm = reference_model(o.Ts);
  plan.rx.resize(K + 1);
  plan.ry.resize(K + 1);
  plan.rx[0] = Eigen::Vector2d(pts[0].x(), vel[0].x());
  plan.ry[0] = Eigen::Vector2d(pts[0].y(), vel[0].y());
  for (int k = 0; k < K; ++k) {
    plan.rx[k + 1] = ref_step(rm, plan.rx[k], plan.ux[k]);
    plan.ry[k + 1] = ref_step(rm, plan.ry[k], plan.uy[k]);
  }
  return plan;
}

}  // namespace cmpc
