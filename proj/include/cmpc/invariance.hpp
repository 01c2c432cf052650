#pragma once

/**
 * @file invariance.hpp
 * @brief Robust control invariant sets over the joint (plant, reference)
 *        state by iterated robust controllable-predecessor intersection,
 *        with a shrink-ball termination test.
 *
 * Joint coordinates are z = (xi, r) where xi is the delay-augmented axis
 * state and r = (position, velocity) is the per-axis reference state, kept
 * as the last two coordinates. The iteration runs in coordinates scaled by
 * per-coordinate half-widths so the shrink radius rho is dimensionless.
 */

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "cmpc/models.hpp"
#include "cmpc/polytope.hpp"

namespace cmpc {

/// z(k+1) = F z(k) + G u(k) + Ed d(k) + Hr a(k); u chosen, d and a adverse.
struct JointModel {
  Eigen::MatrixXd F;
  Eigen::MatrixXd G;
  Eigen::MatrixXd Ed;
  Eigen::MatrixXd Hr;
  Polytope U;   ///< admissible inputs
  Polytope W;   ///< disturbance set (0-dim when absent)
  Polytope Ur;  ///< reference-input set (0-dim when absent)
  int nz() const { return static_cast<int>(F.rows()); }
  int nu() const { return static_cast<int>(G.cols()); }
};

/// Couples a delay-augmented axis model with the reference integrator.
inline JointModel make_joint(const DiscreteLTI& aug, const RefModel& ref,
                             Polytope U, Polytope W, Polytope Ur) {
  const int nxi = aug.nx();
  const int nz = nxi + 2;
  JointModel m;
  m.F = Eigen::MatrixXd::Zero(nz, nz);
  m.F.topLeftCorner(nxi, nxi) = aug.A;
  m.F.bottomRightCorner(2, 2) = ref.A;
  m.G = Eigen::MatrixXd::Zero(nz, aug.nu());
  m.G.topRows(nxi) = aug.B;
  m.Ed = Eigen::MatrixXd::Zero(nz, aug.nd());
  m.Ed.topRows(nxi) = aug.E;
  m.Hr = Eigen::MatrixXd::Zero(nz, 1);
  m.Hr.bottomRows(2) = ref.B;
  m.U = std::move(U);
  m.W = std::move(W);
  m.Ur = std::move(Ur);
  return m;
}

/// Embeds the rows of a k-dim polytope into nz columns at a column offset.
inline Polytope embed(const Polytope& p, int nz, int col_offset) {
  if (col_offset < 0 || col_offset + p.dim() > nz)
    throw std::invalid_argument("embed: offset out of range");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p.num_rows(), nz);
  A.middleCols(col_offset, p.dim()) = p.A();
  return Polytope(std::move(A), p.b());
}

/// Two rows expressing |r_pos - pos - xbar*theta + offset| <= eps.
inline Polytope make_band(int nz, int idx_pos, int idx_theta, int idx_ref_pos,
                          double xbar, double eps, double offset) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, nz);
  Eigen::VectorXd b(2);
  A(0, idx_ref_pos) = 1.0;
  A(0, idx_pos) = -1.0;
  if (idx_theta >= 0) A(0, idx_theta) = -xbar;
  b(0) = eps - offset;
  A.row(1) = -A.row(0);
  b(1) = eps + offset;
  return Polytope(std::move(A), std::move(b));
}

/// Initial row systems for the invariance iteration, split into the rows
/// the one-step map must hold robustly (R0bar) and the rows the reference
/// generator keeps on its own (Rs).
struct InitialSets {
  Polytope R0bar;
  Polytope Rs;
};

/// X axis, joint dimension (2 + Tdx) + 2: state box, register boxes, and
/// the carriage tracking band |r_pos - x_h| <= eps_x_bar.
inline InitialSets build_R0_x(double eps_x_bar, const Polytope& Xx,
                              const Polytope& Ux, const Polytope& ref_ci,
                              int Tdx) {
  if (eps_x_bar <= 0) throw std::invalid_argument("build_R0_x: band <= 0");
  if (Xx.dim() != 2 || Ux.dim() != 1 || ref_ci.dim() != 2)
    throw std::invalid_argument("build_R0_x: dimension mismatch");
  const int nz = 2 + Tdx + 2;
  Polytope r0 = embed(Xx, nz, 0);
  for (int t = 0; t < Tdx; ++t) r0 = r0.intersect(embed(Ux, nz, 2 + t));
  r0 = r0.intersect(make_band(nz, 0, -1, nz - 2, 0.0, eps_x_bar, 0.0));
  return {std::move(r0), embed(ref_ci, nz, nz - 2)};
}

/// Y axis at linearization point x_bar, joint dimension (4 + 2 Tdy) + 2:
/// state box, rotation bound, register boxes, and the tracking band
/// |r_pos - y_n - x_bar theta + D| <= eps_y.
inline InitialSets build_R0_y(double x_bar, double eps_y, double theta_max,
                              double D, const Polytope& Xy,
                              const Polytope& Uy, const Polytope& ref_ci,
                              int Tdy) {
  if (eps_y <= 0 || theta_max <= 0)
    throw std::invalid_argument("build_R0_y: bounds must be positive");
  if (Xy.dim() != 4 || Uy.dim() != 2 || ref_ci.dim() != 2)
    throw std::invalid_argument("build_R0_y: dimension mismatch");
  const int nz = 4 + 2 * Tdy + 2;
  Polytope r0 = embed(Xy, nz, 0);
  Eigen::VectorXd tl(1), th(1);
  tl << -theta_max;
  th << theta_max;
  r0 = r0.intersect(embed(Polytope::from_box(tl, th), nz, 2));
  for (int t = 0; t < Tdy; ++t)
    r0 = r0.intersect(embed(Uy, nz, 4 + 2 * t));
  r0 = r0.intersect(make_band(nz, 0, 2, nz - 2, x_bar, eps_y, D));
  return {std::move(r0), embed(ref_ci, nz, nz - 2)};
}

/// Robust controllable predecessor of `target` under the joint model:
/// { z : exists u in U such that for all d in W and all a in Ur,
///       F z + G u + Ed d + Hr a lies in target shrunk by the rho-ball }.
///
/// The reference input ranges over all of Ur here. Rows the iteration
/// derives that merely restate what the reference class already promises
/// are the caller's business: rci_iterate prunes them against the class
/// rows each pass, which is what keeps their erosion from compounding.
inline Polytope pre_robust(const Polytope& target, const JointModel& m,
                           double rho, double tol = lp::kFeasTol) {
  const int nz = m.nz();
  const int nu = m.nu();
  if (target.dim() != nz)
    throw std::invalid_argument("pre_robust: target dimension mismatch");

  Polytope t = target.erode_ball(rho);
  if (m.W.dim() > 0) t = t.erode_set(m.W, m.Ed);
  if (m.Ur.dim() > 0) t = t.erode_set(m.Ur, m.Hr);

  Eigen::MatrixXd FG(nz, nz + nu);
  FG.leftCols(nz) = m.F;
  FG.rightCols(nu) = m.G;
  Polytope lifted = embed(m.U, nz + nu, nz);
  const int np = lifted.num_rows();
  lifted = lifted.intersect(t.affine_preimage(FG, Eigen::VectorXd::Zero(nz)));

  std::vector<int> keep(nz);
  for (int i = 0; i < nz; ++i) keep[i] = i;
  return lifted.project(keep, tol, np);
}

struct RciOptions {
  double rho = 1e-4;
  int max_iter = 200;
  double tol = lp::kFeasTol;
  /// Invoked after every iteration; useful for long builds.
  std::function<void(const struct RciIterRecord&)> progress;
};

struct RciIterRecord {
  int iter = 0;
  int rows_robust = 0;
  int rows_total = 0;
};

struct RciResult {
  Polytope set;     ///< robust rows intersected with the reference-class rows
  Polytope robust;  ///< rows that the one-step map must re-enter robustly
  std::vector<RciIterRecord> log;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Polytope scale_cols(const Polytope& p, const Eigen::VectorXd& s) {
  Eigen::MatrixXd A = p.A();
  for (int j = 0; j < A.cols(); ++j) A.col(j) *= s(j);
  return Polytope(std::move(A), p.b());
}

}  // namespace detail

/// Shrink-ball invariance iteration. R0bar carries the robustly-held rows
/// (state, register, tracking band); Rs carries the reference-class rows,
/// which the reference generator maintains on its own. z_scale and u_scale
/// are per-coordinate half-widths used to normalize the geometry.
inline RciResult rci_iterate(const JointModel& m, const Polytope& R0bar,
                             const Polytope& Rs,
                             const Eigen::VectorXd& z_scale,
                             const Eigen::VectorXd& u_scale,
                             const RciOptions& opt = {}) {
  const int nz = m.nz();
  const int nu = m.nu();
  if (z_scale.size() != nz || u_scale.size() != nu)
    throw std::invalid_argument("rci_iterate: scale length mismatch");
  if ((z_scale.array() <= 0).any() || (u_scale.array() <= 0).any())
    throw std::invalid_argument("rci_iterate: scales must be positive");
  if (opt.rho <= 0) throw std::invalid_argument("rci_iterate: rho <= 0");

  const Eigen::VectorXd zi = z_scale.cwiseInverse();
  JointModel ms;
  ms.F = zi.asDiagonal() * m.F * z_scale.asDiagonal();
  ms.G = zi.asDiagonal() * m.G * u_scale.asDiagonal();
  ms.Ed = zi.asDiagonal() * m.Ed;
  ms.Hr = zi.asDiagonal() * m.Hr;
  ms.U = detail::scale_cols(m.U, u_scale);
  ms.W = m.W;
  ms.Ur = m.Ur;

  Polytope rbar = detail::scale_cols(R0bar, z_scale).reduce(opt.tol);
  const Polytope rs = detail::scale_cols(Rs, z_scale);

  RciResult out;
  for (int it = 0; it < opt.max_iter; ++it) {
    Polytope pre = pre_robust(rbar, ms, opt.rho, opt.tol);
    // Prune candidate rows modulo the class rows: requirements the
    // reference keeps by itself must not stay in rbar, where the next
    // pass would erode them again and the loss would compound.
    Polytope rbar_next = rbar.intersect(pre).reduce_given(rs, opt.tol);
    out.log.push_back({it + 1, rbar_next.num_rows(),
                       rbar_next.num_rows() + rs.num_rows()});
    out.iterations = it + 1;
    if (opt.progress) opt.progress(out.log.back());

    if (rs.intersect(rbar_next).is_empty(opt.tol))
      throw std::domain_error(
          "rci_iterate: iteration emptied the candidate set (constraints "
          "and disturbances admit no invariant set)");

    // Stop once the previous robust iterate, eroded by the ball and cut to
    // the class, fits in the new one. One-step successors of set points
    // land in that eroded intersection: the predecessor step guarantees
    // the rbar part, the reference generator guarantees the class part.
    const bool done = rbar_next.contains_set(
        rbar.erode_ball(opt.rho).intersect(rs), opt.tol);
    rbar = rbar_next;
    if (done) {
      out.converged = true;
      break;
    }
  }

  out.robust = detail::scale_cols(rbar, zi);
  out.set = detail::scale_cols(rs.intersect(rbar).reduce(opt.tol), zi);
  return out;
}

/// Controlled-invariant set for the reference integrator alone: the same
/// iteration with the acceleration as the control and no disturbances.
inline RciResult reference_ci(const RefModel& ref, const Polytope& Xr,
                              const Polytope& Ur, const RciOptions& opt = {}) {
  JointModel m;
  m.F = ref.A;
  m.G = ref.B;
  m.Ed = Eigen::MatrixXd(2, 0);
  m.Hr = Eigen::MatrixXd(2, 0);
  m.U = Ur;
  m.W = Polytope::universe(0);
  m.Ur = Polytope::universe(0);
  auto [lo, hi] = Xr.bounding_box();
  Eigen::VectorXd z_scale = 0.5 * (hi - lo);
  auto [ulo, uhi] = Ur.bounding_box();
  Eigen::VectorXd u_scale = 0.5 * (uhi - ulo);
  return rci_iterate(m, Xr, Polytope::universe(2), z_scale, u_scale, opt);
}

struct VerifyReport {
  int samples = 0;
  int passed = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  bool pass() const { return samples > 0 && passed == samples; }
};

/// Samples points of `set` and certifies, per point, that one admissible
/// input re-enters the robust rows for every disturbance/reference-input
/// vertex. Margins are in normalized row units (row normals scaled to 1).
///
/// When `ref_class` is given (rows over the trailing two reference
/// coordinates, unscaled frame), reference inputs are restricted to those
/// keeping the reference state inside that class, which is the regime the
/// set is built for; the worst cases are then the per-sample endpoints of
/// the admissible acceleration interval.
inline VerifyReport verify_invariance(const Polytope& set,
                                      const Polytope& robust,
                                      const JointModel& m, int n_samples,
                                      std::uint64_t seed,
                                      const Polytope* ref_class = nullptr,
                                      double tol = lp::kFeasTol) {
  const int nz = m.nz();
  const int nu = m.nu();
  VerifyReport rep;

  const int ndw = m.W.dim(), na = m.Ur.dim();
  const bool cond_ref = ref_class != nullptr && na == 1;
  if (cond_ref && ref_class->dim() != 2)
    throw std::invalid_argument("verify_invariance: ref_class must be 2-d");

  // Vertex list of W x Ur; with a reference class the Ur factor is filled
  // per sample with the admissible interval endpoints instead.
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> verts;
  if (cond_ref) {
    std::vector<Eigen::VectorXd> wlist;
    if (ndw == 0) {
      wlist.push_back(Eigen::VectorXd(0));
    } else {
      for (const auto& v : enumerate_vertices(m.W)) wlist.push_back(v);
      if (wlist.empty())
        throw std::runtime_error("verify_invariance: no disturbance vertices");
    }
    for (const auto& w : wlist) {
      verts.push_back({w, Eigen::VectorXd::Zero(1)});
      verts.push_back({w, Eigen::VectorXd::Zero(1)});
    }
  } else if (ndw + na == 0) {
    verts.push_back({Eigen::VectorXd(0), Eigen::VectorXd(0)});
  } else {
    Polytope prod = ndw == 0 ? m.Ur
                  : na == 0  ? m.W
                             : Polytope::cartesian(m.W, m.Ur);
    for (const auto& v : enumerate_vertices(prod)) {
      if (ndw == 0)
        verts.push_back({Eigen::VectorXd(0), v});
      else if (na == 0)
        verts.push_back({v, Eigen::VectorXd(0)});
      else
        verts.push_back({v.head(ndw), v.tail(na)});
    }
    if (verts.empty())
      throw std::runtime_error("verify_invariance: no disturbance vertices");
  }

  Eigen::MatrixXd Arr, Brr, Hc;
  double a_min0 = 0.0, a_max0 = 0.0;
  if (cond_ref) {
    Arr = m.F.bottomRightCorner(2, 2);
    Brr = m.Hr.bottomRows(2);
    Hc = ref_class->A() * Brr;
    auto [alo, ahi] = m.Ur.bounding_box();
    a_min0 = alo(0);
    a_max0 = ahi(0);
  }

  // Normalized robust rows.
  Eigen::MatrixXd Ar = robust.A();
  Eigen::VectorXd br = robust.b();
  for (int i = 0; i < Ar.rows(); ++i) {
    const double s = Ar.row(i).norm();
    if (s > 1e-300) {
      Ar.row(i) /= s;
      br(i) /= s;
    }
  }
  const int mr = static_cast<int>(Ar.rows());
  const int nv = static_cast<int>(verts.size());

  // LP over (u, t): maximize t subject to slack t on every successor row.
  Eigen::MatrixXd A(nv * mr + m.U.num_rows(), nu + 1);
  Eigen::VectorXd b(nv * mr + m.U.num_rows());
  for (int v = 0; v < nv; ++v) {
    A.block(v * mr, 0, mr, nu) = Ar * m.G;
    A.block(v * mr, nu, mr, 1).setOnes();
  }
  A.bottomRows(m.U.num_rows()).leftCols(nu) = m.U.A();
  A.bottomRows(m.U.num_rows()).col(nu).setZero();
  b.tail(m.U.num_rows()) = m.U.b();
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(nu + 1);
  cost(nu) = 1.0;

  std::mt19937_64 rng(seed);
  auto runif = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  auto [lo, hi] = set.bounding_box();

  int accepted = 0;
  long attempts = 0;
  const long budget = 400L * n_samples;
  Eigen::VectorXd walk;  // hit-and-run state once rejection gets starved
  bool walking = false;

  while (accepted < n_samples) {
    Eigen::VectorXd z(nz);
    if (!walking) {
      ++attempts;
      for (int i = 0; i < nz; ++i) z(i) = lo(i) + (hi(i) - lo(i)) * runif();
      if (!set.contains_point(z, tol)) {
        if (attempts >= budget) {
          lp::PointResult p = lp::find_point(set.A(), set.b(), tol);
          if (!p.feasible)
            throw std::runtime_error("verify_invariance: set has no point");
          walk = p.x;
          walking = true;
        }
        continue;
      }
    } else {
      // Hit-and-run: uniform point on the chord through a random direction.
      for (int step = 0; step < 8; ++step) {
        Eigen::VectorXd dir(nz);
        for (int i = 0; i < nz; ++i) dir(i) = runif() - 0.5;
        dir.normalize();
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        for (int r = 0; r < set.num_rows(); ++r) {
          const double ad = set.A().row(r).dot(dir);
          const double gap = set.b()(r) - set.A().row(r).dot(walk);
          if (ad > 1e-12) tmax = std::min(tmax, gap / ad);
          else if (ad < -1e-12) tmin = std::max(tmin, gap / ad);
        }
        if (tmin > tmax) continue;
        walk += dir * (tmin + (tmax - tmin) * runif());
      }
      z = walk;
      if (!set.contains_point(z, 1e-6)) continue;
    }

    // Successor margin LP for this sample.
    if (cond_ref) {
      const Eigen::Vector2d rn = Arr * z.tail(2);
      double alo = a_min0, ahi = a_max0;
      const Eigen::VectorXd rhs = ref_class->b() - ref_class->A() * rn;
      for (int i = 0; i < Hc.rows(); ++i) {
        const double c = Hc(i, 0);
        if (c > 1e-12) ahi = std::min(ahi, rhs(i) / c);
        else if (c < -1e-12) alo = std::max(alo, rhs(i) / c);
      }
      if (alo > ahi) {
        const double mid =
            std::min(a_max0, std::max(a_min0, 0.5 * (alo + ahi)));
        alo = ahi = mid;
      }
      for (std::size_t v = 0; v + 1 < verts.size(); v += 2) {
        verts[v].second(0) = alo;
        verts[v + 1].second(0) = ahi;
      }
    }
    Eigen::VectorXd fz = m.F * z;
    for (int v = 0; v < nv; ++v) {
      Eigen::VectorXd shift = fz;
      if (ndw > 0) shift += m.Ed * verts[v].first;
      if (na > 0) shift += m.Hr * verts[v].second;
      b.segment(v * mr, mr) = br - Ar * shift;
    }
    lp::Result r = lp::solve_max(A, b, cost, tol);
    if (r.status != lp::Status::kOptimal)
      throw std::runtime_error("verify_invariance: margin LP failed");
    ++rep.samples;
    rep.worst_margin = std::min(rep.worst_margin, r.value);
    if (r.value >= -tol) ++rep.passed;
    ++accepted;
  }
  return rep;
}

}  // namespace cmpc
