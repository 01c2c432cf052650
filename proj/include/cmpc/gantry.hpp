#pragma once

/**
 * @file gantry.hpp
 * @brief Rigid-body model of a dual-drive gantry with an elastic cross-beam
 *        and a moving end-effector carriage.
 *
 * Generalized coordinates s = (x_h, y_n, theta): carriage travel along the
 * beam, beam midpoint travel, and beam yaw. The two Y drives sit at +-L from
 * the midpoint; theta is defined through the drive position difference. The
 * carriage center of mass rides at offset D ahead of the beam axis.
 */

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace cmpc {

struct GantryParams {
  double Me = 20.0;   ///< carriage mass [kg]
  double M1 = 50.0;   ///< drive 1 mass [kg]
  double M2 = 50.0;   ///< drive 2 mass [kg]
  double Mn = 120.0;  ///< beam mass [kg]
  double L = 1.5;     ///< drive half-spacing [m]
  double W = 0.1;     ///< beam half-width [m]
  double D = 0.2;     ///< end-effector offset [m]
  double kx = 30.0;   ///< X motor constant [N/A]
  double ky = 30.0;   ///< Y motor constant [N/A]
  double bx = 50.0;   ///< X viscous friction [N s/m]
  double by = 50.0;   ///< Y viscous friction [N s/m]
  double kr = 8000.0; ///< yaw stiffness [N m/rad]
  double ks = 1e6;    ///< rack stiffness [N/m]

  double Mt() const { return M1 + M2 + Me + Mn; }
  double Md() const { return M1 - M2; }
  double Lambda(double xh) const {
    return (M1 + M2) * L * L + Mn * (L * L + W * W) / 3.0 +
           Me * (D * D + xh * xh);
  }
  double Gamma(double xh, double th) const {
    return Me * D * std::sin(th) - Md() * L * std::cos(th) +
           Me * xh * std::cos(th);
  }
};

/// Full plant state (x_h, x_h', y_n, y_n', theta, theta').
using GantryState = Eigen::Matrix<double, 6, 1>;

/// Motor currents (i_x, i_1, i_2).
using Currents = Eigen::Vector3d;

/// Configuration-dependent inertia matrix for s = (x_h, y_n, theta).
inline Eigen::Matrix3d mass_matrix(const GantryParams& p,
                                   const GantryState& s) {
  const double xh = s(0), th = s(4);
  Eigen::Matrix3d M;
  const double g = p.Gamma(xh, th);
  M << p.Me, p.Me * std::sin(th), p.Me * p.D,
       p.Me * std::sin(th), p.Mt(), g,
       p.Me * p.D, g, p.Lambda(xh);
  return M;
}

/// Accelerations (x_h'', y_n'', theta'') from the coupled equations of
/// motion. Throws when the inertia matrix loses positive definiteness.
inline Eigen::Vector3d nonlinear_accel(const GantryParams& p,
                                       const GantryState& s,
                                       const Currents& i) {
  const double xh = s(0), xd = s(1), yd = s(3), th = s(4), thd = s(5);
  const double sth = std::sin(th), cth = std::cos(th);

  Eigen::Vector3d rhs;
  rhs(0) = p.kx * i(0) - p.bx * xd + p.Me * xh * thd * thd;
  rhs(1) = p.ky * (i(1) + i(2)) - p.by * (2.0 * yd) -
           p.Me * (-xh * sth * thd * thd + 2.0 * xd * cth * thd +
                   p.D * thd * thd * cth) -
           p.Md() * p.L * thd * thd * sth;
  rhs(2) = (p.ky * (i(2) - i(1)) - p.by * (2.0 * p.L * thd)) * p.L * cth -
           2.0 * p.kr * th - 2.0 * p.L * p.L * p.ks * sth * (1.0 - cth) -
           2.0 * p.Me * thd * xd * xh;

  Eigen::Matrix3d M = mass_matrix(p, s);
  Eigen::LLT<Eigen::Matrix3d> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("nonlinear_accel: inertia matrix not PD");
  return llt.solve(rhs);
}

/// Y/yaw accelerations when the carriage acceleration is prescribed
/// externally (the X axis may evolve under its own discrete law).
inline Eigen::Vector2d y_theta_accel(const GantryParams& p,
                                     const GantryState& s, double xh_ddot,
                                     const Currents& i) {
  const double xh = s(0), xd = s(1), yd = s(3), th = s(4), thd = s(5);
  const double sth = std::sin(th), cth = std::cos(th);

  Eigen::Vector2d rhs;
  rhs(0) = p.ky * (i(1) + i(2)) - p.by * (2.0 * yd) -
           p.Me * (-xh * sth * thd * thd + 2.0 * xd * cth * thd +
                   p.D * thd * thd * cth) -
           p.Md() * p.L * thd * thd * sth - p.Me * sth * xh_ddot;
  rhs(1) = (p.ky * (i(2) - i(1)) - p.by * (2.0 * p.L * thd)) * p.L * cth -
           2.0 * p.kr * th - 2.0 * p.L * p.L * p.ks * sth * (1.0 - cth) -
           2.0 * p.Me * thd * xd * xh - p.Me * p.D * xh_ddot;

  Eigen::Matrix2d M;
  const double g = p.Gamma(xh, th);
  M << p.Mt(), g, g, p.Lambda(xh);
  Eigen::LLT<Eigen::Matrix2d> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("y_theta_accel: inertia block not PD");
  return llt.solve(rhs);
}

/// Total mechanical energy: kinetic in the configuration metric plus the
/// yaw spring and rack spring potentials.
inline double total_energy(const GantryParams& p, const GantryState& s) {
  Eigen::Vector3d v(s(1), s(3), s(5));
  const double th = s(4);
  const double kin = 0.5 * v.dot(mass_matrix(p, s) * v);
  const double pot = p.kr * th * th +
                     p.ks * p.L * p.L * (1.0 - std::cos(th)) *
                         (1.0 - std::cos(th));
  return kin + pot;
}

/// One RK4 step of the full plant under zero-order-hold currents.
inline GantryState rk4_step(const GantryParams& p, const GantryState& s,
                            const Currents& i, double dt) {
  auto deriv = [&](const GantryState& x) {
    Eigen::Vector3d acc = nonlinear_accel(p, x, i);
    GantryState d;
    d << x(1), acc(0), x(3), acc(1), x(5), acc(2);
    return d;
  };
  const GantryState k1 = deriv(s);
  const GantryState k2 = deriv(s + 0.5 * dt * k1);
  const GantryState k3 = deriv(s + 0.5 * dt * k2);
  const GantryState k4 = deriv(s + dt * k3);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace cmpc
