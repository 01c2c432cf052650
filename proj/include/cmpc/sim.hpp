#pragma once

/**
 * @file sim.hpp
 * @brief Closed-loop engine: controller tick, per-axis input delay lines,
 *        and three plant backends (full nonlinear, nominal LTI, load-rig
 *        emulation for the x axis).
 */

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "cmpc/controller.hpp"
#include "cmpc/gantry.hpp"
#include "cmpc/metrics.hpp"
#include "cmpc/models.hpp"
#include "cmpc/path.hpp"
#include "cmpc/polytope.hpp"
#include "cmpc/trace.hpp"

namespace cmpc {

enum class PlantMode { kNonlinear, kLinear, kHil };

/// Fixed-depth input FIFO; push returns the input the plant must apply
/// this tick (the one commanded depth ticks ago). Depth 0 passes through.
class DelayLine {
 public:
  DelayLine(int depth, int nu) {
    if (depth < 0) throw std::invalid_argument("DelayLine: negative depth");
    for (int i = 0; i < depth; ++i) buf_.emplace_back(Eigen::VectorXd::Zero(nu));
  }

  Eigen::VectorXd push(const Eigen::VectorXd& u) {
    if (buf_.empty()) return u;
    Eigen::VectorXd out = buf_.front();
    buf_.pop_front();
    buf_.push_back(u);
    return out;
  }

  /// Register image (u(k-1), ..., u(k-depth)): newest first.
  Eigen::VectorXd snapshot() const {
    if (buf_.empty()) return Eigen::VectorXd(0);
    const int nu = static_cast<int>(buf_.front().size());
    Eigen::VectorXd out(static_cast<int>(buf_.size()) * nu);
    int at = 0;
    for (auto it = buf_.rbegin(); it != buf_.rend(); ++it, at += nu)
      out.segment(at, nu) = *it;
    return out;
  }

 private:
  std::deque<Eigen::VectorXd> buf_;
};

/// Load torque that bends the rig dynamics into the machine-axis shape:
/// the rig then accelerates exactly as the machine model plus d_x would.
inline double hil_torque(double i_x, double xd, double d_x,
                         const GantryParams& p, const RigParams& r) {
  return r.M_A * ((r.k_A / r.M_A - p.kx / p.Me) * i_x -
                  (r.b_A / r.M_A - p.bx / p.Me) * xd - d_x);
}

/// Discrete rig-axis update with the already-delayed current and the
/// residual velocity disturbance. Routed through the shared stepper so it
/// is bit-identical to the delay-augmented model's rollout.
inline Eigen::Vector2d hil_x_step(const GantryParams& p, const RigParams& r,
                                  double Ts, const Eigen::Vector2d& x,
                                  double i_delayed, double F_N) {
  const DiscreteLTI m = x_axis_rig_lti(p, r, Ts);
  Eigen::VectorXd u(1), d(1);
  u << i_delayed;
  d << F_N;
  return lti_step(m, x, u, d);
}

/// RK4 over (y_n, theta) with the carriage trajectory prescribed: the
/// carriage coordinate integrates the given acceleration, and the crossbeam
/// pair follows the full coupled equations around it.
inline GantryState rk4_step_prescribed_x(const GantryParams& p,
                                         const GantryState& s, double xh_ddot,
                                         const Currents& i, double dt) {
  auto deriv = [&](const GantryState& x) {
    const Eigen::Vector2d acc = y_theta_accel(p, x, xh_ddot, i);
    GantryState d;
    d << x(1), xh_ddot, x(3), acc(0), x(5), acc(1);
    return d;
  };
  const GantryState k1 = deriv(s);
  const GantryState k2 = deriv(s + 0.5 * dt * k1);
  const GantryState k3 = deriv(s + 0.5 * dt * k2);
  const GantryState k4 = deriv(s + dt * k3);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct SimSetup {
  GantryParams plant;
  RigParams rig;
  PlantMode mode = PlantMode::kNonlinear;
  double Ts = 2e-3;
  int Tdx = 1;
  int Tdy = 1;

  DiscreteLTI x_base;             ///< machine or rig model per mode
  ModelBank bank;                 ///< y models per linearization point
  MpcProblem mpc_x;
  std::vector<MpcProblem> mpc_y;  ///< one per bank point

  ErrorBudget budget;
  PathGeometry geom;
  ReferencePlan plan;
  Polytope ref_ci{Polytope::universe(2)};

  std::uint64_t seed = 1;
  double hil_noise = 1e-4;    ///< uniform F_N bound [m/s]
  double hil_coulomb = 5e-5;  ///< Coulomb-like term magnitude [m/s]
  double quantize = 0;        ///< feedback quantum, 0 disables

  std::string config_hash = "unconfigured";
};

struct RunResult {
  Trace trace;
  Metrics metrics;
  int fallback_x = 0, fallback_y = 0;
  int membership_miss_x = 0, membership_miss_y = 0;
  int slice_miss_x = 0, slice_miss_y = 0;
  int switches = 0, switch_misses = 0;
  double max_ctrl_seconds = 0, total_ctrl_seconds = 0;

  int incidents() const {
    return fallback_x + fallback_y + membership_miss_x + membership_miss_y +
           slice_miss_x + slice_miss_y + switch_misses;
  }
};

namespace detail {

inline double quantized(double v, double q) {
  return q > 0 ? std::nearbyint(v / q) * q : v;
}

inline int worst_row(const Polytope& p, const Eigen::VectorXd& z,
                     double* margin) {
  int idx = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.num_rows(); ++i) {
    const double v = p.A().row(i).dot(z) - p.b()(i);
    if (v > worst) {
      worst = v;
      idx = i;
    }
  }
  *margin = worst;
  return idx;
}

}  // namespace detail

/**
 * Runs the contour. Per tick: measure, pick the linearization cell, solve
 * both axis problems, log, push the inputs through the delay lines, step
 * the plant with the delayed inputs, and audit that the realized next
 * state still sits in the invariant-set slice of the realized reference.
 *
 * Refuses to start when the rest state on the contour start point is not
 * inside both invariant sets, or when the plan leaves the reference class.
 */
inline RunResult run_closed_loop(const SimSetup& cfg) {
  cfg.budget.validate();
  cfg.mpc_x.cfg.validate();
  if (cfg.mpc_y.size() != cfg.bank.points.size())
    throw std::invalid_argument("sim: one y problem per bank point required");
  if (cfg.plan.ticks() <= 0) throw std::invalid_argument("sim: empty plan");
  const int K = cfg.plan.ticks();
  const int N = cfg.mpc_x.cfg.N;

  for (int k = 0; k <= K; ++k) {
    if (!cfg.ref_ci.contains_point(cfg.plan.rx_at(k), 1e-7) ||
        !cfg.ref_ci.contains_point(cfg.plan.ry_at(k), 1e-7))
      throw std::domain_error(
          "sim: reference plan leaves the certified reference class at tick " +
          std::to_string(k));
  }

  // Rest on the contour start: tool on the path, beam level.
  const Eigen::Vector2d start = cfg.plan.tool_ref(0);
  GantryState s = GantryState::Zero();
  s(0) = start.x();
  s(2) = start.y() + cfg.plant.D;
  Eigen::Vector2d xs(start.x(), 0.0);
  Eigen::Vector4d ys(start.y() + cfg.plant.D, 0.0, 0.0, 0.0);

  DelayLine dlx(cfg.Tdx, 1), dly(cfg.Tdy, 2);
  Eigen::VectorXd warm_x, warm_y;
  std::mt19937_64 rng(cfg.seed);
  auto noise = [&rng](double bound) {
    return bound * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
  };

  RunResult out;
  out.trace.Ts = cfg.Ts;
  out.trace.config_hash = cfg.config_hash;
  out.trace.rows.reserve(K);

  auto measure = [&](double* xh, double* xd, double* y, double* yd,
                     double* th, double* thd) {
    switch (cfg.mode) {
      case PlantMode::kNonlinear:
        *xh = s(0); *xd = s(1); *y = s(2); *yd = s(3); *th = s(4); *thd = s(5);
        break;
      case PlantMode::kLinear:
        *xh = xs(0); *xd = xs(1); *y = ys(0); *yd = ys(1); *th = ys(2);
        *thd = ys(3);
        break;
      case PlantMode::kHil:
        *xh = xs(0); *xd = xs(1); *y = s(2); *yd = s(3); *th = s(4);
        *thd = s(5);
        break;
    }
    if (cfg.quantize > 0) {
      *xh = detail::quantized(*xh, cfg.quantize);
      *xd = detail::quantized(*xd, cfg.quantize);
      *y = detail::quantized(*y, cfg.quantize);
      *yd = detail::quantized(*yd, cfg.quantize);
      *th = detail::quantized(*th, cfg.quantize);
      *thd = detail::quantized(*thd, cfg.quantize);
    }
  };

  auto joint_point = [](const Eigen::VectorXd& xi, const Eigen::Vector2d& r) {
    Eigen::VectorXd z(xi.size() + 2);
    z << xi, r;
    return z;
  };

  int j_prev = -1;
  for (int k = 0; k < K; ++k) {
    double xh, xd, y, yd, th, thd;
    measure(&xh, &xd, &y, &yd, &th, &thd);

    Eigen::VectorXd xi_x(2 + dlx.snapshot().size());
    xi_x << xh, xd, dlx.snapshot();
    Eigen::VectorXd xi_y(4 + dly.snapshot().size());
    xi_y << y, yd, th, thd, dly.snapshot();

    const int j = select_model(cfg.bank, xh);
    if (j_prev >= 0 && j != j_prev) {
      ++out.switches;
      const Eigen::VectorXd zy = joint_point(xi_y, cfg.plan.ry_at(k));
      if (!cfg.mpc_y[j].rci.contains_point(zy, 1e-7) &&
          cfg.mpc_y[j_prev].rci.contains_point(zy, 1e-7))
        ++out.switch_misses;
    }

    if (k == 0) {
      double mx, my;
      const Eigen::VectorXd zx = joint_point(xi_x, cfg.plan.rx_at(0));
      const Eigen::VectorXd zy = joint_point(xi_y, cfg.plan.ry_at(0));
      const int rx = detail::worst_row(cfg.mpc_x.rci, zx, &mx);
      const int ry = detail::worst_row(cfg.mpc_y[j].rci, zy, &my);
      if (mx > 1e-9)
        throw std::domain_error("sim: initial state outside x set, row " +
                                std::to_string(rx) + " by " +
                                std::to_string(mx));
      if (my > 1e-9)
        throw std::domain_error("sim: initial state outside y set, row " +
                                std::to_string(ry) + " by " +
                                std::to_string(my));
    }

    std::vector<Eigen::Vector2d> rwx, rwy;
    for (int i = 0; i <= N; ++i) {
      rwx.push_back(cfg.plan.rx_at(k + i));
      rwy.push_back(cfg.plan.ry_at(k + i));
    }

    const auto t0 = std::chrono::steady_clock::now();
    const MpcStepResult resx = mpc_step(cfg.mpc_x, xi_x, rwx, warm_x);
    const MpcStepResult resy = mpc_step(cfg.mpc_y[j], xi_y, rwy, warm_y);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.total_ctrl_seconds += elapsed;
    out.max_ctrl_seconds = std::max(out.max_ctrl_seconds, elapsed);

    warm_x = resx.useq;
    warm_y = resy.useq;
    if (resx.status == MpcStatus::kSlack) ++out.fallback_x;
    if (resy.status == MpcStatus::kSlack) ++out.fallback_y;
    if (k > 0 && !resx.in_set) ++out.membership_miss_x;
    if (k > 0 && !resy.in_set) ++out.membership_miss_y;

    const Eigen::Vector2d tool = end_effector(xh, y, th, cfg.plant.D);
    const Eigen::Vector2d ref = cfg.plan.tool_ref(k);
    const double e_x = ref.x() - tool.x();
    const double e_y = ref.y() - tool.y();
    const double eps = std::min(cfg.geom.contour_distance(tool),
                                std::hypot(e_x, e_y));

    const Eigen::VectorXd ux_del = dlx.push(resx.u0);
    const Eigen::VectorXd uy_del = dly.push(resy.u0);

    TraceRow row;
    row.tick = k;
    row.t = k * cfg.Ts;
    row.x_h = xh; row.xd_h = xd;
    row.y_n = y; row.yd_n = yd;
    row.theta = th; row.thetad = thd;
    row.i_x = resx.u0(0);
    row.i_1 = resy.u0(0);
    row.i_2 = resy.u0(1);
    row.i_x_del = ux_del(0);
    row.i_1_del = uy_del(0);
    row.i_2_del = uy_del(1);
    row.x_ref = ref.x();
    row.y_ref = ref.y();
    row.e_x = e_x;
    row.e_y = e_y;
    row.eps = eps;
    row.j = j;
    row.qp_status_x = static_cast<int>(resx.status);
    row.qp_status_y = static_cast<int>(resy.status);
    row.kkt_x = resx.kkt_residual;
    row.kkt_y = resy.kkt_residual;
    out.trace.rows.push_back(row);

    // Plant update with the delayed inputs.
    switch (cfg.mode) {
      case PlantMode::kNonlinear: {
        const Currents cur(ux_del(0), uy_del(0), uy_del(1));
        s = rk4_step(cfg.plant, s, cur, cfg.Ts);
        break;
      }
      case PlantMode::kLinear: {
        xs = lti_step(cfg.x_base, xs, ux_del);
        ys = lti_step(cfg.bank.base[j], ys, uy_del);
        break;
      }
      case PlantMode::kHil: {
        const double fn =
            noise(cfg.hil_noise) -
            cfg.hil_coulomb * ((xs(1) > 0.0) - (xs(1) < 0.0));
        const Eigen::Vector2d xn =
            hil_x_step(cfg.plant, cfg.rig, cfg.Ts, xs, ux_del(0), fn);
        const double xdd = (xn(1) - xs(1)) / cfg.Ts;
        s(0) = xs(0);
        s(1) = xs(1);
        const Currents cur(0.0, uy_del(0), uy_del(1));
        s = rk4_step_prescribed_x(cfg.plant, s, xdd, cur, cfg.Ts);
        xs = xn;
        s(0) = xs(0);
        s(1) = xs(1);
        break;
      }
    }

    // Invariance audit: realized next state against the sets used at k.
    double nxh, nxd, ny, nyd, nth, nthd;
    measure(&nxh, &nxd, &ny, &nyd, &nth, &nthd);
    Eigen::VectorXd nxi_x(2 + dlx.snapshot().size());
    nxi_x << nxh, nxd, dlx.snapshot();
    Eigen::VectorXd nxi_y(4 + dly.snapshot().size());
    nxi_y << ny, nyd, nth, nthd, dly.snapshot();
    if (!cfg.mpc_x.rci.contains_point(
            joint_point(nxi_x, cfg.plan.rx_at(k + 1)), 1e-7))
      ++out.slice_miss_x;
    if (!cfg.mpc_y[j].rci.contains_point(
            joint_point(nxi_y, cfg.plan.ry_at(k + 1)), 1e-7))
      ++out.slice_miss_y;

    j_prev = j;
  }

  out.metrics = evaluate_trace(out.trace, cfg.budget);
  return out;
}

}  // namespace cmpc
