#pragma once

/**
 * @file lp.hpp
 * @brief Dense linear programming kernel for halfspace-polytope predicates.
 *
 * Solves  max c'x  s.t.  A x <= b  with free x by running a two-phase
 * revised simplex on the dual (min b'y, A'y = c, y >= 0). The dual basis is
 * n x n where n is the ambient dimension, which stays tiny for the set
 * operations built on top of this kernel. The optimal primal point is
 * recovered from the simplex multipliers of the dual.
 */

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cmpc::lp {

/// Feasibility tolerance shared by every set predicate in the library.
constexpr double kFeasTol = 1e-9;

enum class Status {
  kOptimal,
  kInfeasible,
  kUnbounded,
  kNumFail,
};

struct Result {
  Status status = Status::kNumFail;
  double value = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd x;  ///< maximizer, valid only when status == kOptimal
};

/// Cumulative solver counters, for diagnostics and test reporting.
/// Thread-local so concurrent set builds do not race on the tallies.
struct Stats {
  long solves = 0;
  long pivots = 0;
  long escalations = 0;  ///< retries with a stricter pivoting rule
  long failures = 0;     ///< solves that exhausted every rule
};

inline Stats& stats() {
  thread_local Stats s;
  return s;
}

namespace detail {

struct EqResult {
  Status status = Status::kNumFail;
  double value = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd pi;  ///< row multipliers, B' pi = g_B at the final basis
};

/// One pass of the revised simplex over a fixed column pool.
/// Minimizes g'y subject to C y = d, y >= 0 starting from the given basis.
/// The basis must index an invertible submatrix with B^{-1} d >= 0.
///
/// The ratio test runs in two passes: the first finds the minimal ratio,
/// the second picks the numerically largest pivot among near-minimal rows,
/// which keeps the basis well conditioned on degenerate inputs. From
/// `bland_after` on (immediately when `bland_from_start`), entering and
/// leaving choices follow Bland's smallest-index rule so stalls terminate.
inline Status simplex_core(const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                           const Eigen::VectorXd& g, std::vector<int>& basis,
                           Eigen::VectorXd& pi_out, double& value_out,
                           double tol, bool bland_from_start = false) {
  const int n = static_cast<int>(C.rows());
  const int m = static_cast<int>(C.cols());
  const int max_iter = 400 + 40 * m;
  const int bland_after = bland_from_start ? 0 : 150 + 10 * m;

  Eigen::MatrixXd B(n, n);
  for (int iter = 0; iter < max_iter; ++iter) {
    ++stats().pivots;
    for (int i = 0; i < n; ++i) B.col(i) = C.col(basis[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    // Partial pivoting needs an explicit conditioning guard.
    double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double v = std::abs(lu.matrixLU()(i, i));
      dmax = std::max(dmax, v);
      dmin = std::min(dmin, v);
    }
    if (!(dmin > dmax * 1e-14) || dmax == 0.0) {
#ifdef CMPC_LP_TRACE
      std::fprintf(stderr, "[lp] singular basis at iter %d (n=%d m=%d)\n",
                   iter, n, m);
#endif
      return Status::kNumFail;
    }

    Eigen::VectorXd yB = lu.solve(d);
    Eigen::VectorXd gB(n);
    for (int i = 0; i < n; ++i) gB(i) = g(basis[i]);
    Eigen::VectorXd pi = lu.transpose().solve(gB);

    const bool bland = iter >= bland_after;
    int enter = -1;
    double best = -tol;
    for (int j = 0; j < m; ++j) {
      bool is_basic = false;
      for (int i = 0; i < n; ++i)
        if (basis[i] == j) { is_basic = true; break; }
      if (is_basic) continue;
      const double rj = g(j) - pi.dot(C.col(j));
      if (bland) {
        if (rj < -tol) { enter = j; break; }
      } else if (rj < best) {
        best = rj;
        enter = j;
      }
    }
    if (enter < 0) {
      pi_out = pi;
      double v = 0.0;
      for (int i = 0; i < n; ++i) v += gB(i) * yB(i);
      value_out = v;
      return Status::kOptimal;
    }

    Eigen::VectorXd w = lu.solve(C.col(enter));
    const double piv_tol = 1e-11;
    double theta = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (w(i) > piv_tol)
        theta = std::min(theta, std::max(yB(i), 0.0) / w(i));
    }
    if (theta == std::numeric_limits<double>::infinity())
      return Status::kUnbounded;

    const double slack = 1e-9 * (1.0 + theta);
    int leave = -1;
    if (bland) {
      int best_var = m + n;
      for (int i = 0; i < n; ++i) {
        if (w(i) <= piv_tol) continue;
        if (std::max(yB(i), 0.0) / w(i) <= theta + slack &&
            basis[i] < best_var) {
          best_var = basis[i];
          leave = i;
        }
      }
    } else {
      double best_piv = 0.0;
      for (int i = 0; i < n; ++i) {
        if (w(i) <= piv_tol) continue;
        if (std::max(yB(i), 0.0) / w(i) <= theta + slack && w(i) > best_piv) {
          best_piv = w(i);
          leave = i;
        }
      }
    }
    if (leave < 0) return Status::kNumFail;
    basis[leave] = enter;
  }
#ifdef CMPC_LP_TRACE
  std::fprintf(stderr, "[lp] iteration cap %d hit (n=%d m=%d)\n", max_iter, n,
               m);
#endif
  return Status::kNumFail;
}

/// Two-phase simplex for min g'y s.t. C y = d, y >= 0.
///
/// Both phases run on a copy of d carrying a tiny deterministic
/// perturbation, which breaks the ties behind degenerate stalling; the
/// unperturbed problem is then re-optimized from the final basis, which
/// normally takes zero pivots and restores exact values. `mode` selects the
/// pivoting discipline: 0 uses steepest reduced cost with a Harris-style
/// ratio test (Bland's rule after a stall budget), 1 applies Bland's rule
/// from the first iteration.
inline EqResult simplex_eq(Eigen::MatrixXd C, Eigen::VectorXd d,
                           Eigen::VectorXd g, double tol, int mode = 0) {
  int n = static_cast<int>(C.rows());
  const int n_orig = n;
  const int m = static_cast<int>(C.cols());
  const bool bland_from_start = mode >= 1;
  EqResult out;

  std::vector<char> flipped(n, 0);
  for (int i = 0; i < n; ++i) {
    if (d(i) < 0) {
      C.row(i) *= -1.0;
      d(i) *= -1.0;
      flipped[i] = 1;
    }
  }

  Eigen::VectorXd d_clean = d;
  {
    const double scale = 1e-10 * (1.0 + d.lpNorm<Eigen::Infinity>());
    std::uint64_t s = 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(mode);
    for (int i = 0; i < n; ++i) {
      s = s * 6364136223846793005ull + 1442695040888963407ull;
      d(i) += scale * (0.5 + static_cast<double>(s >> 11) * 0x1.0p-53);
    }
  }

  // Phase 1: artificial columns form the starting identity basis.
  Eigen::MatrixXd C1(n, m + n);
  C1.leftCols(m) = C;
  C1.rightCols(n) = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(m + n);
  g1.tail(n).setOnes();
  std::vector<int> basis(n);
  for (int i = 0; i < n; ++i) basis[i] = m + i;

  Eigen::VectorXd pi;
  double v1 = 0.0;
  Status s1 = simplex_core(C1, d, g1, basis, pi, v1, tol, bland_from_start);
  if (s1 == Status::kUnbounded) s1 = Status::kNumFail;  // phase 1 is bounded
  if (s1 != Status::kOptimal) {
    out.status = s1;
    return out;
  }
  if (v1 > tol * (1.0 + d.lpNorm<Eigen::Infinity>())) {
    out.status = Status::kInfeasible;
    return out;
  }

  // Drive remaining artificials out of the basis; rows that cannot pivot
  // are linearly dependent and get dropped.
  std::vector<int> keep_rows;
  {
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i) B.col(i) = C1.col(basis[i]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    std::vector<int> drop;
    for (int i = 0; i < n; ++i) {
      if (basis[i] < m) continue;
      int pivot = -1;
      for (int j = 0; j < m && pivot < 0; ++j) {
        bool is_basic = false;
        for (int t = 0; t < n; ++t)
          if (basis[t] == j) { is_basic = true; break; }
        if (is_basic) continue;
        Eigen::VectorXd w = lu.solve(C.col(j));
        if (std::abs(w(i)) > 1e-8) pivot = j;
      }
      if (pivot >= 0) {
        basis[i] = pivot;
        for (int t = 0; t < n; ++t) B.col(t) = C1.col(basis[t]);
        lu.compute(B);
      } else {
        drop.push_back(i);
      }
    }
    if (!drop.empty()) {
      std::vector<int> new_basis;
      keep_rows.clear();
      for (int i = 0; i < n; ++i) {
        bool dropped = false;
        for (int r : drop)
          if (r == i) { dropped = true; break; }
        if (!dropped) keep_rows.push_back(i);
      }
      Eigen::MatrixXd C2(static_cast<int>(keep_rows.size()), m);
      Eigen::VectorXd d2(static_cast<int>(keep_rows.size()));
      Eigen::VectorXd dc2(static_cast<int>(keep_rows.size()));
      for (size_t i = 0; i < keep_rows.size(); ++i) {
        C2.row(static_cast<int>(i)) = C.row(keep_rows[i]);
        d2(static_cast<int>(i)) = d(keep_rows[i]);
        dc2(static_cast<int>(i)) = d_clean(keep_rows[i]);
        new_basis.push_back(basis[keep_rows[i]]);
      }
      C = C2;
      d = d2;
      d_clean = dc2;
      basis = new_basis;
      n = static_cast<int>(C.rows());
    }
  }

  double v2 = 0.0;
  Status s2 = simplex_core(C, d, g, basis, pi, v2, tol, bland_from_start);
  if (s2 == Status::kOptimal) {
    // Re-optimize the unperturbed problem from the perturbed optimum. An
    // unbounded ray is independent of d, so one appearing only now is noise.
    s2 = simplex_core(C, d_clean, g, basis, pi, v2, tol, bland_from_start);
    if (s2 == Status::kUnbounded) s2 = Status::kNumFail;
  }
  if (s2 != Status::kOptimal) {
    out.status = s2;
    return out;
  }
  out.status = Status::kOptimal;
  out.value = v2;
  // Multipliers in the original row space. A dropped row is a linear
  // combination of kept rows, so zero-filling its multiplier leaves every
  // reduced cost unchanged and dual optimality intact.
  if (n != n_orig) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n_orig);
    for (size_t i = 0; i < keep_rows.size(); ++i)
      full(keep_rows[i]) = pi(static_cast<int>(i));
    out.pi = full;
  } else {
    out.pi = pi;
  }
  // Sign-flipped rows carry sign-flipped multipliers.
  for (int i = 0; i < n_orig; ++i)
    if (flipped[i]) out.pi(i) = -out.pi(i);
  return out;
}

}  // namespace detail

// Forward declaration; find_point and solve_max call each other on
// disjoint inputs (find_point always passes a feasible, value-bounded LP).
struct PointResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double violation = std::numeric_limits<double>::infinity();
};

Result solve_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                 const Eigen::VectorXd& c, double tol = kFeasTol);

/// Finds a point with A x <= b (within tol) or reports infeasibility.
/// Implemented as max -t s.t. A x - t 1 <= b, t >= -1.
inline PointResult find_point(const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& b,
                              double tol = kFeasTol) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  Eigen::MatrixXd A2(m + 1, n + 1);
  A2.setZero();
  if (m > 0) A2.topLeftCorner(m, n) = A;
  A2.col(n).head(m).setConstant(-1.0);
  A2(m, n) = -1.0;
  Eigen::VectorXd b2(m + 1);
  b2.head(m) = b;
  b2(m) = 1.0;
  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(n + 1);
  c2(n) = -1.0;

  Result r = solve_max(A2, b2, c2, tol);
  PointResult out;
  if (r.status != Status::kOptimal) return out;  // numerical failure
  const double t = -r.value;
  out.violation = t;
  out.feasible = t <= tol;
  out.x = r.x.head(n);
  return out;
}

/// max c'x s.t. A x <= b. Distinguishes optimal / infeasible / unbounded.
inline Result solve_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& c, double tol) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m || c.size() != n)
    throw std::invalid_argument("lp::solve_max: dimension mismatch");

  Result out;
  const double cnorm = c.lpNorm<Eigen::Infinity>();
  if (cnorm < 1e-300) {
    PointResult p = find_point(A, b, tol);
    if (p.violation == std::numeric_limits<double>::infinity()) return out;
    if (!p.feasible) {
      out.status = Status::kInfeasible;
      return out;
    }
    out.status = Status::kOptimal;
    out.value = 0.0;
    out.x = p.x;
    return out;
  }

  // Row equilibration keeps the dual well scaled; the primal point is
  // unchanged by positive row scaling.
  Eigen::MatrixXd As = A;
  Eigen::VectorXd bs = b;
  for (int i = 0; i < m; ++i) {
    const double s = As.row(i).lpNorm<Eigen::Infinity>();
    if (s > 1e-300) {
      As.row(i) /= s;
      bs(i) /= s;
    }
  }
  const Eigen::VectorXd cs = c / cnorm;

  // Feasibility probe, evaluated lazily at most once. It arbitrates the
  // dual-side claims below: dual infeasibility means the primal is
  // unbounded or empty, dual unboundedness means the primal is empty, and
  // a probe that contradicts the latter exposes it as numerical noise.
  int probed = 0;  // 0 unknown, +1 feasible, -1 infeasible, 2 probe failed
  PointResult fp;
  auto probe = [&]() {
    if (probed == 0) {
      fp = find_point(A, b, tol);
      if (fp.violation == std::numeric_limits<double>::infinity())
        probed = 2;
      else
        probed = fp.feasible ? 1 : -1;
    }
    return probed;
  };

  ++stats().solves;
  detail::EqResult er = detail::simplex_eq(As.transpose(), cs, bs, tol, 0);
  for (int mode = 1; mode <= 2; ++mode) {
    const bool stuck =
        er.status == Status::kNumFail ||
        (er.status == Status::kUnbounded && probe() == 1);
    if (!stuck) break;
    ++stats().escalations;
    er = detail::simplex_eq(As.transpose(), cs, bs, tol, mode);
  }

  if (er.status == Status::kInfeasible) {
    // Dual infeasible: primal is unbounded if nonempty.
    if (probe() == 2) {
      ++stats().failures;
      return out;
    }
    out.status = probed == 1 ? Status::kUnbounded : Status::kInfeasible;
    if (probed == 1) out.x = fp.x;
    return out;
  }
  if (er.status == Status::kUnbounded) {
    // Dual unbounded: primal empty. Honor it only when the probe agrees.
    if (probe() == -1) out.status = Status::kInfeasible;
    else ++stats().failures;
    return out;
  }
  if (er.status != Status::kOptimal) {
    ++stats().failures;
    return out;
  }

  out.status = Status::kOptimal;
  out.value = er.value * cnorm;
  out.x = er.pi;
  return out;
}

}  // namespace cmpc::lp
