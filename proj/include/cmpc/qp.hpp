#pragma once

/**
 * @file qp.hpp
 * @brief Dense strictly convex QP solver: min 1/2 z'Hz + f'z s.t. A z <= b.
 *
 * Primal active-set method. The iterate stays feasible throughout, so an
 * iteration-limited return is still usable as a control input. Tie-breaking
 * is deterministic (lowest row index), which makes solves reproducible
 * bit-for-bit for identical inputs.
 */

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cmpc/lp.hpp"

namespace cmpc::qp {

enum class Status {
  kOptimal,
  kIterLimit,   ///< feasible but multiplier test not finished
  kInfeasible,  ///< no point satisfies A z <= b
  kNumFail,
};

struct Problem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct Options {
  int max_iter = 25;
  double opt_tol = 1e-4;   ///< multiplier / stationarity tolerance
  double feas_tol = 1e-6;  ///< constraint satisfaction tolerance
};

struct Solution {
  Status status = Status::kNumFail;
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  ///< one entry per row, zero when inactive
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::vector<int> active_set;
};

namespace detail {

inline double objective_of(const Problem& p, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(p.H * z) + p.f.dot(z);
}

/// Stationarity residual with the given working-set multipliers.
inline double kkt_stationarity(const Problem& p, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& lambda) {
  Eigen::VectorXd g = p.H * z + p.f;
  if (p.A.rows() > 0) g += p.A.transpose() * lambda;
  return g.lpNorm<Eigen::Infinity>();
}

}  // namespace detail

inline Solution solve(const Problem& prob, const Options& opt = {},
                      const Eigen::VectorXd* warm_start = nullptr) {
  const int n = static_cast<int>(prob.H.rows());
  const int m = static_cast<int>(prob.A.rows());
  if (prob.H.cols() != n || prob.f.size() != n ||
      (m > 0 && prob.A.cols() != n) || prob.b.size() != m)
    throw std::invalid_argument("qp::solve: dimension mismatch");

  Solution sol;
  Eigen::LLT<Eigen::MatrixXd> llt(
      0.5 * (prob.H + prob.H.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("qp::solve: H is not positive definite");

  // Feasible starting point: warm start when it already satisfies the
  // constraints, otherwise a phase-1 LP.
  Eigen::VectorXd z;
  bool have_start = false;
  if (warm_start && warm_start->size() == n) {
    bool ok = true;
    for (int i = 0; i < m && ok; ++i)
      if (prob.A.row(i).dot(*warm_start) - prob.b(i) > opt.feas_tol) ok = false;
    if (ok) {
      z = *warm_start;
      have_start = true;
    }
  }
  if (!have_start) {
    if (m == 0) {
      z = Eigen::VectorXd::Zero(n);
    } else {
      lp::PointResult p = lp::find_point(prob.A, prob.b, opt.feas_tol);
      if (p.violation == std::numeric_limits<double>::infinity()) {
        sol.status = Status::kNumFail;
        return sol;
      }
      if (!p.feasible) {
        sol.status = Status::kInfeasible;
        return sol;
      }
      z = p.x;
    }
  }

  // Working set: independent subset of rows active at the start.
  std::vector<int> work;
  auto independent_with = [&](int row) {
    if (work.empty()) return prob.A.row(row).norm() > 1e-12;
    Eigen::MatrixXd M(static_cast<int>(work.size()) + 1, n);
    for (size_t i = 0; i < work.size(); ++i) M.row(static_cast<int>(i)) = prob.A.row(work[i]);
    M.row(static_cast<int>(work.size())) = prob.A.row(row);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    return lu.rank() == M.rows();
  };
  for (int i = 0; i < m && static_cast<int>(work.size()) < n; ++i) {
    const double s = std::max(1.0, prob.A.row(i).norm());
    if (std::abs(prob.A.row(i).dot(z) - prob.b(i)) <= opt.feas_tol * s &&
        independent_with(i))
      work.push_back(i);
  }

  Eigen::VectorXd lambda_w;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const int nw = static_cast<int>(work.size());
    Eigen::MatrixXd K(n + nw, n + nw);
    K.setZero();
    K.topLeftCorner(n, n) = prob.H;
    for (int i = 0; i < nw; ++i) {
      K.block(0, n + i, n, 1) = prob.A.row(work[i]).transpose();
      K.block(n + i, 0, 1, n) = prob.A.row(work[i]);
    }
    Eigen::VectorXd rhs(n + nw);
    rhs.head(n) = -(prob.H * z + prob.f);
    rhs.tail(nw).setZero();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) {
      sol.status = Status::kNumFail;
      break;
    }
    Eigen::VectorXd step = lu.solve(rhs);
    Eigen::VectorXd p = step.head(n);
    lambda_w = step.tail(nw);

    const double pscale = 1.0 + z.lpNorm<Eigen::Infinity>();
    if (p.lpNorm<Eigen::Infinity>() <= 1e-11 * pscale) {
      // Stationary on the working set; check multiplier signs.
      int drop = -1;
      double most_neg = -opt.opt_tol;
      for (int i = 0; i < nw; ++i) {
        if (lambda_w(i) < most_neg) {
          most_neg = lambda_w(i);
          drop = i;
        }
      }
      if (drop < 0) {
        sol.status = Status::kOptimal;
        break;
      }
      work.erase(work.begin() + drop);
      continue;
    }

    // Ratio test against rows outside the working set.
    double alpha = 1.0;
    int block = -1;
    for (int i = 0; i < m; ++i) {
      bool in_w = false;
      for (int w : work)
        if (w == i) { in_w = true; break; }
      if (in_w) continue;
      const double ap = prob.A.row(i).dot(p);
      if (ap > 1e-12) {
        const double gap = std::max(0.0, prob.b(i) - prob.A.row(i).dot(z));
        const double a = gap / ap;
        if (a < alpha - 1e-12) {
          alpha = a;
          block = i;
        }
      }
    }
    z += alpha * p;
    if (block >= 0) work.push_back(block);
  }

  if (sol.status != Status::kOptimal && sol.status != Status::kNumFail)
    sol.status = Status::kIterLimit;

  sol.z = z;
  sol.iterations = iter;
  sol.active_set = work;
  sol.lambda = Eigen::VectorXd::Zero(m);
  const int nw = static_cast<int>(work.size());
  if (nw > 0) {
    if (sol.status == Status::kOptimal && lambda_w.size() == nw) {
      for (int i = 0; i < nw; ++i) sol.lambda(work[i]) = lambda_w(i);
    } else {
      // Informational multipliers for a truncated solve.
      Eigen::MatrixXd At(n, nw);
      for (int i = 0; i < nw; ++i) At.col(i) = prob.A.row(work[i]).transpose();
      Eigen::VectorXd lam =
          At.colPivHouseholderQr().solve(-(prob.H * z + prob.f));
      for (int i = 0; i < nw; ++i) sol.lambda(work[i]) = lam(i);
    }
  }
  sol.objective = detail::objective_of(prob, z);
  sol.kkt_residual = detail::kkt_stationarity(prob, z, sol.lambda);
  return sol;
}

}  // namespace cmpc::qp
