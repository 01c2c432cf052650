#pragma once

/**
 * @file models.hpp
 * @brief Control-oriented discrete models: per-axis LTI plants, input-delay
 *        augmentation, the reference double integrator, and interval bounds
 *        for the lumped nonlinear-coupling disturbances.
 *
 * All discretization is forward Euler at the controller period. The X axis
 * is a damped double integrator; the Y axis is a 4-state model (y_n, y_n',
 * theta, theta') linearized at a carriage abscissa x_bar, with both drive
 * currents as inputs and two lumped disturbances.
 */

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cmpc/gantry.hpp"
#include "cmpc/polytope.hpp"

namespace cmpc {

/// x(k+1) = A x(k) + B u(k) + E d(k)
struct DiscreteLTI {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd E;
  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int nd() const { return static_cast<int>(E.cols()); }
};

/// Steps a discrete model with a fixed accumulation order (A terms by
/// ascending column, then B, then E) so that structurally equivalent
/// realizations produce identical floating-point trajectories.
inline Eigen::VectorXd lti_step(const DiscreteLTI& s, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u,
                                const Eigen::VectorXd& d = Eigen::VectorXd()) {
  const int n = s.nx();
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < s.A.cols(); ++j) acc += s.A(i, j) * x(j);
    for (int j = 0; j < s.B.cols(); ++j) acc += s.B(i, j) * u(j);
    if (d.size() > 0)
      for (int j = 0; j < s.E.cols(); ++j) acc += s.E(i, j) * d(j);
    out(i) = acc;
  }
  return out;
}

/// X-axis model: state (x_h, x_h'), input i_x, disturbance d_x.
inline DiscreteLTI x_axis_lti(const GantryParams& p, double Ts) {
  DiscreteLTI s;
  s.A = Eigen::MatrixXd(2, 2);
  s.A << 1.0, Ts, 0.0, 1.0 - Ts * p.bx / p.Me;
  s.B = Eigen::MatrixXd(2, 1);
  s.B << 0.0, Ts * p.kx / p.Me;
  s.E = Eigen::MatrixXd(2, 1);
  s.E << 0.0, Ts;
  return s;
}

/// Y-axis model linearized at x_bar: state (y_n, y_n', theta, theta'),
/// inputs (i_1, i_2), disturbances (d_1, d_2).
inline DiscreteLTI y_axis_lti(const GantryParams& p, double x_bar, double Ts) {
  Eigen::Matrix2d K;
  K << p.Mt(), p.Me * x_bar, p.Me * x_bar, p.Lambda(x_bar);
  Eigen::Matrix2d Ki = K.inverse();

  Eigen::Matrix4d Ac = Eigen::Matrix4d::Zero();
  Ac(0, 1) = 1.0;
  Ac(2, 3) = 1.0;
  // rows of K^{-1} * [ -2 by y' ; -2 kr th - 2 by L^2 th' ]
  Ac(1, 1) = -2.0 * p.by * Ki(0, 0);
  Ac(1, 2) = -2.0 * p.kr * Ki(0, 1);
  Ac(1, 3) = -2.0 * p.by * p.L * p.L * Ki(0, 1);
  Ac(3, 1) = -2.0 * p.by * Ki(1, 0);
  Ac(3, 2) = -2.0 * p.kr * Ki(1, 1);
  Ac(3, 3) = -2.0 * p.by * p.L * p.L * Ki(1, 1);

  Eigen::Matrix<double, 4, 2> Bc = Eigen::Matrix<double, 4, 2>::Zero();
  Bc(1, 0) = p.ky * Ki(0, 0) - p.ky * p.L * Ki(0, 1);
  Bc(1, 1) = p.ky * Ki(0, 0) + p.ky * p.L * Ki(0, 1);
  Bc(3, 0) = p.ky * Ki(1, 0) - p.ky * p.L * Ki(1, 1);
  Bc(3, 1) = p.ky * Ki(1, 0) + p.ky * p.L * Ki(1, 1);

  Eigen::Matrix<double, 4, 2> Ec = Eigen::Matrix<double, 4, 2>::Zero();
  Ec(1, 0) = Ki(0, 0);
  Ec(1, 1) = Ki(0, 1);
  Ec(3, 0) = Ki(1, 0);
  Ec(3, 1) = Ki(1, 1);

  DiscreteLTI s;
  s.A = Eigen::Matrix4d::Identity() + Ts * Ac;
  s.B = Ts * Bc;
  s.E = Ts * Ec;
  return s;
}

/// X-axis model when the axis runs on the load-emulation rig: the rig's
/// friction shapes the velocity decay, the machine's gain drives it, and
/// the residual mismatch enters as a direct velocity disturbance.
struct RigParams {
  double M_A = 15.0;  ///< rig inertia [kg]
  double k_A = 25.0;  ///< rig motor constant [N/A]
  double b_A = 30.0;  ///< rig friction [N s/m]
};

inline DiscreteLTI x_axis_rig_lti(const GantryParams& p, const RigParams& r,
                                  double Ts) {
  DiscreteLTI s;
  s.A = Eigen::MatrixXd(2, 2);
  s.A << 1.0, Ts, 0.0, 1.0 - Ts * r.b_A / r.M_A;
  s.B = Eigen::MatrixXd(2, 1);
  s.B << 0.0, Ts * p.kx / p.Me;
  s.E = Eigen::MatrixXd(2, 1);
  s.E << 0.0, 1.0;
  return s;
}

/// Appends Td input registers (u(k-1), ..., u(k-Td)) to the state. The
/// plant block reads the oldest register; Td = 0 returns the model as is.
inline DiscreteLTI augment_delay(const DiscreteLTI& base, int Td) {
  if (Td < 0) throw std::invalid_argument("augment_delay: negative delay");
  if (Td == 0) return base;
  const int nx = base.nx(), nu = base.nu(), nd = base.nd();
  const int n = nx + Td * nu;
  DiscreteLTI s;
  s.A = Eigen::MatrixXd::Zero(n, n);
  s.B = Eigen::MatrixXd::Zero(n, nu);
  s.E = Eigen::MatrixXd::Zero(n, nd);
  s.A.topLeftCorner(nx, nx) = base.A;
  s.A.block(0, nx + (Td - 1) * nu, nx, nu) = base.B;
  for (int j = 1; j < Td; ++j)
    s.A.block(nx + j * nu, nx + (j - 1) * nu, nu, nu) =
        Eigen::MatrixXd::Identity(nu, nu);
  s.B.block(nx, 0, nu, nu) = Eigen::MatrixXd::Identity(nu, nu);
  s.E.topRows(nx) = base.E;
  return s;
}

/// Per-axis reference generator r(k+1) = A r(k) + B a(k): a sampled double
/// integrator over (position, velocity) driven by a bounded acceleration.
struct RefModel {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

inline RefModel reference_model(double Ts) {
  RefModel r;
  r.A << 1.0, Ts, 0.0, 1.0;
  r.B << 0.0, Ts;
  return r;
}

/// Same accumulation order as lti_step, so tables generated here can be
/// replayed through an equivalent model without drifting a single bit.
inline Eigen::Vector2d ref_step(const RefModel& m, const Eigen::Vector2d& r,
                                double a) {
  Eigen::Vector2d out;
  for (int i = 0; i < 2; ++i) {
    double acc = 0.0;
    for (int j = 0; j < 2; ++j) acc += m.A(i, j) * r(j);
    acc += m.B(i) * a;
    out(i) = acc;
  }
  return out;
}

/// Interval bounds of the lumped disturbances (d_x, d_1, d_2), evaluated on
/// a grid over the operating region and inflated by a safety margin.
struct DisturbanceBounds {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
  Polytope box() const {
    return Polytope::from_box(lo, hi);
  }
  Polytope x_box() const {
    return Polytope::from_box(lo.head<1>(), hi.head<1>());
  }
  Polytope y_box() const {
    return Polytope::from_box(lo.tail<2>(), hi.tail<2>());
  }
};

/// state_box: (x_h, x_h', theta, theta') ranges; accel_box: (x_h'', y_n'',
/// theta'') ranges. The carriage abscissa doubles as the linearization
/// abscissa in the coupling terms, so one evaluation covers the whole bank.
inline DisturbanceBounds disturbance_bounds(
    const GantryParams& p, const Eigen::Vector4d& state_lo,
    const Eigen::Vector4d& state_hi, const Eigen::Vector3d& accel_lo,
    const Eigen::Vector3d& accel_hi, int grid = 5, double margin_frac = 0.1,
    double margin_abs = 1e-6) {
  if (grid < 3) throw std::invalid_argument("disturbance_bounds: grid < 3");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(
      std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;

  auto axis = [&](double a, double b, int t) {
    return a + (b - a) * static_cast<double>(t) / (grid - 1);
  };
  for (int t0 = 0; t0 < grid; ++t0)
  for (int t1 = 0; t1 < grid; ++t1)
  for (int t2 = 0; t2 < grid; ++t2)
  for (int t3 = 0; t3 < grid; ++t3)
  for (int t4 = 0; t4 < grid; ++t4)
  for (int t5 = 0; t5 < grid; ++t5)
  for (int t6 = 0; t6 < grid; ++t6) {
    const double xh = axis(state_lo(0), state_hi(0), t0);
    const double xd = axis(state_lo(1), state_hi(1), t1);
    const double th = axis(state_lo(2), state_hi(2), t2);
    const double thd = axis(state_lo(3), state_hi(3), t3);
    const double xdd = axis(accel_lo(0), accel_hi(0), t4);
    const double ydd = axis(accel_lo(1), accel_hi(1), t5);
    const double thdd = axis(accel_lo(2), accel_hi(2), t6);

    const double dx = xh * thd * thd - p.D * thdd - ydd * std::sin(th);
    const double d1 = p.Me * (xh * th * thd * thd - th * xdd -
                              p.D * th * thdd - 2.0 * xd * thd -
                              p.D * thd * thd);
    const double d2 = -p.Me * (2.0 * thd * xd * xh + p.D * th * ydd +
                               p.D * xdd);
    const Eigen::Vector3d v(dx, d1, d2);
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }

  DisturbanceBounds out;
  for (int i = 0; i < 3; ++i) {
    const double c = 0.5 * (lo(i) + hi(i));
    const double h = 0.5 * (hi(i) - lo(i)) * (1.0 + margin_frac) + margin_abs;
    out.lo(i) = c - h;
    out.hi(i) = c + h;
  }
  return out;
}

inline Polytope disturbance_box(const GantryParams& p,
                                const Eigen::Vector4d& state_lo,
                                const Eigen::Vector4d& state_hi,
                                const Eigen::Vector3d& accel_lo,
                                const Eigen::Vector3d& accel_hi, int grid = 5,
                                double margin_frac = 0.1,
                                double margin_abs = 1e-6) {
  return disturbance_bounds(p, state_lo, state_hi, accel_lo, accel_hi, grid,
                            margin_frac, margin_abs)
      .box();
}

/// Family of Y-axis models over a list of linearization abscissas, plus the
/// delay-augmented forms used by the predictive controller.
struct ModelBank {
  std::vector<double> points;
  double spacing = 0.0;
  std::vector<DiscreteLTI> base;
  std::vector<DiscreteLTI> aug;
  int Td = 0;
};

inline ModelBank make_model_bank(const GantryParams& p,
                                 const std::vector<double>& points,
                                 double spacing, double Ts, int Td) {
  if (points.empty())
    throw std::invalid_argument("make_model_bank: no linearization points");
  for (size_t i = 1; i < points.size(); ++i)
    if (points[i] <= points[i - 1])
      throw std::invalid_argument("make_model_bank: points must ascend");
  ModelBank bank;
  bank.points = points;
  bank.spacing = spacing;
  bank.Td = Td;
  for (double xb : points) {
    bank.base.push_back(y_axis_lti(p, xb, Ts));
    bank.aug.push_back(augment_delay(bank.base.back(), Td));
  }
  return bank;
}

}  // namespace cmpc
