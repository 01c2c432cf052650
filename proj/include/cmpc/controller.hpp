#pragma once

/**
 * @file controller.hpp
 * @brief Receding-horizon tracking controller constrained to stay inside a
 *        precomputed invariant set, with a soft-constrained fallback.
 */

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cmpc/models.hpp"
#include "cmpc/polytope.hpp"
#include "cmpc/qp.hpp"

namespace cmpc {

/**
 * Splits the contouring tolerance into per-axis bounds, then discounts the
 * X bound for the tool-drop lever so the carriage band alone suffices.
 *
 * Chain: eps(k) <= |e_x| + |e_y| <= eps_x + eps_y <= eps_c, with
 *        |e_x| <= eps_x_bar + D * theta_max.
 */
struct ErrorBudget {
  double eps_c = 4e-3;
  double eps_x = 2e-3;
  double eps_y = 2e-3;
  double theta_max = 2.5e-3;
  double eps_x_bar = 1.5e-3;
  double D = 0.2;

  void validate() const {
    if (eps_c <= 0 || eps_x <= 0 || eps_y <= 0 || theta_max <= 0 || D < 0)
      throw std::invalid_argument("error budget: bounds must be positive");
    if (eps_x + eps_y > eps_c * (1 + 1e-12))
      throw std::invalid_argument("error budget: axis bounds exceed eps_c");
    if (eps_x_bar <= 0)
      throw std::invalid_argument("error budget: x band is non-positive");
    if (eps_x_bar + D * theta_max > eps_x * (1 + 1e-12))
      throw std::invalid_argument("error budget: x band too wide for eps_x");
  }
};

/// Builds the budget from the contouring tolerance and an x/y split. The
/// carriage band absorbs what the rotation lever can cost at theta_max.
inline ErrorBudget error_budget(double eps_c, double D, double theta_max,
                                double split) {
  if (split <= 0 || split >= 1)
    throw std::invalid_argument("error budget: split must lie in (0, 1)");
  ErrorBudget b;
  b.eps_c = eps_c;
  b.eps_x = split * eps_c;
  b.eps_y = (1 - split) * eps_c;
  b.theta_max = theta_max;
  b.D = D;
  b.eps_x_bar = b.eps_x - D * theta_max;
  b.validate();
  return b;
}

/// Nearest bank point to the carriage position; ties go to the lower index.
inline int select_model(const ModelBank& bank, double x_h) {
  int best = 0;
  double best_d = std::abs(x_h - bank.points[0]);
  for (int i = 1; i < static_cast<int>(bank.points.size()); ++i) {
    const double d = std::abs(x_h - bank.points[i]);
    if (d < best_d - 1e-15) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

/// Fixes the reference coordinates (last two columns) of a joint-space set,
/// leaving a polytope over the augmented axis state alone.
inline Polytope rci_slice(const Polytope& joint, const Eigen::Vector2d& r) {
  const int nz = joint.dim();
  if (nz < 3) throw std::invalid_argument("rci_slice: set dimension < 3");
  const int nxi = nz - 2;
  Eigen::MatrixXd A = joint.A().leftCols(nxi);
  Eigen::VectorXd b = joint.b() - joint.A().rightCols(2) * r;
  return Polytope(std::move(A), std::move(b));
}

/// Tracked-output rows: carriage position for the x axis, crossbeam
/// position corrected by the carriage lever for the y axis.
inline Eigen::RowVectorXd tracked_output_x(int nxi) {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(nxi);
  c(0) = 1.0;
  return c;
}

inline Eigen::RowVectorXd tracked_output_y(int nxi, double x_bar) {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(nxi);
  c(0) = 1.0;
  c(2) = x_bar;
  return c;
}

struct MpcConfig {
  int N = 2;
  double Q = 1e5;
  double R = 0.1;
  double slack_weight = 1e8;
  qp::Options qp_opts{};

  void validate() const {
    if (N < 1) throw std::invalid_argument("mpc: N < 1");
    if (Q <= 0 || R <= 0) throw std::invalid_argument("mpc: Q,R must be > 0");
    if (slack_weight <= 0) throw std::invalid_argument("mpc: slack weight");
  }
};

/// Per-axis problem data, fixed once per model-bank entry. The tracked
/// output is C * xi + out_offset (the y axis carries the tool drop -D).
struct MpcProblem {
  DiscreteLTI model;      ///< delay-augmented axis model
  Eigen::RowVectorXd C;   ///< tracked output over the augmented state
  double out_offset = 0;  ///< constant added to C * xi
  Polytope U;             ///< per-step input set
  Polytope rci;           ///< joint invariant set, reference coords last
  MpcConfig cfg;
};

enum class MpcStatus { kOk, kIterLimit, kSlack };

struct MpcStepResult {
  Eigen::VectorXd u0;
  Eigen::VectorXd useq;     ///< stacked inputs, warm start for the next step
  MpcStatus status = MpcStatus::kOk;
  bool in_set = false;      ///< whether (xi0, r0) lay in the invariant set
  int qp_iters = 0;
  double kkt_residual = 0.0;
  double objective = 0.0;
  double slack = 0.0;
};

namespace detail {

struct Condensed {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  int n_input_rows = 0;
};

/// Builds the condensed QP over (u_0,...,u_{N-1}). The tracking cost runs
/// over predicted steps 1..N; set-membership rows are imposed at steps
/// 1..N-1 where the invariant-set recursion gives one-step feasibility.
inline Condensed condense(const MpcProblem& p, const Eigen::VectorXd& xi0,
                          const std::vector<Eigen::Vector2d>& rwin) {
  const int N = p.cfg.N;
  const int nxi = p.model.nx();
  const int nu = p.model.nu();
  if (static_cast<int>(rwin.size()) < N + 1)
    throw std::invalid_argument("mpc: reference window shorter than N+1");
  if (xi0.size() != nxi) throw std::invalid_argument("mpc: state size");

  // Phi_i = A^i, Gamma block (i,j) = A^(i-1-j) B, for i = 1..N.
  std::vector<Eigen::MatrixXd> Apow(N + 1);
  Apow[0] = Eigen::MatrixXd::Identity(nxi, nxi);
  for (int i = 1; i <= N; ++i) Apow[i] = p.model.A * Apow[i - 1];
  Eigen::MatrixXd Gamma = Eigen::MatrixXd::Zero(N * nxi, N * nu);
  Eigen::VectorXd drift(N * nxi);
  for (int i = 1; i <= N; ++i) {
    drift.segment((i - 1) * nxi, nxi) = Apow[i] * xi0;
    for (int j = 0; j < i; ++j)
      Gamma.block((i - 1) * nxi, j * nu, nxi, nu) = Apow[i - 1 - j] * p.model.B;
  }

  Eigen::MatrixXd CG(N, N * nu);
  Eigen::VectorXd ce(N);
  for (int i = 1; i <= N; ++i) {
    CG.row(i - 1) = p.C * Gamma.middleRows((i - 1) * nxi, nxi);
    ce(i - 1) = p.C.dot(drift.segment((i - 1) * nxi, nxi)) + p.out_offset -
                rwin[i](0);
  }

  Condensed c;
  c.H = 2.0 * (p.cfg.Q * CG.transpose() * CG +
               p.cfg.R * Eigen::MatrixXd::Identity(N * nu, N * nu));
  c.f = 2.0 * p.cfg.Q * CG.transpose() * ce;

  const int mu = p.U.num_rows();
  const int ms = p.rci.num_rows();
  const int n_slice = (N - 1) * ms;
  c.A = Eigen::MatrixXd::Zero(N * mu + n_slice, N * nu);
  c.b = Eigen::VectorXd::Zero(N * mu + n_slice);
  for (int i = 0; i < N; ++i) {
    c.A.block(i * mu, i * nu, mu, nu) = p.U.A();
    c.b.segment(i * mu, mu) = p.U.b();
  }
  c.n_input_rows = N * mu;
  for (int i = 1; i < N; ++i) {
    Polytope sl = rci_slice(p.rci, rwin[i]);
    c.A.block(N * mu + (i - 1) * ms, 0, ms, N * nu) =
        sl.A() * Gamma.middleRows((i - 1) * nxi, nxi);
    c.b.segment(N * mu + (i - 1) * ms, ms) =
        sl.b() - sl.A() * drift.segment((i - 1) * nxi, nxi);
  }
  return c;
}

}  // namespace detail

/**
 * One controller step. `rwin` holds the reference states r(k..k+N); the
 * warm start is the previous stacked input sequence (may be empty).
 *
 * If the set-constrained problem is infeasible the step is re-solved with
 * one shared soft slack on the set rows so the loop always has an input.
 */
inline MpcStepResult mpc_step(const MpcProblem& p, const Eigen::VectorXd& xi0,
                              const std::vector<Eigen::Vector2d>& rwin,
                              const Eigen::VectorXd& warm = {}) {
  p.cfg.validate();
  const int N = p.cfg.N;
  const int nu = p.model.nu();
  detail::Condensed c = detail::condense(p, xi0, rwin);

  Eigen::VectorXd z0(p.rci.dim());
  z0 << xi0, rwin[0];

  qp::Problem q{c.H, c.f, c.A, c.b};
  Eigen::VectorXd w;
  if (warm.size() == N * nu) {
    w.resize(N * nu);
    w.head((N - 1) * nu) = warm.tail((N - 1) * nu);
    w.tail(nu) = warm.tail(nu);
  }
  qp::Solution s = qp::solve(q, p.cfg.qp_opts, w.size() ? &w : nullptr);

  MpcStepResult out;
  out.in_set = p.rci.contains_point(z0, 1e-7);
  if (s.status == qp::Status::kOptimal || s.status == qp::Status::kIterLimit) {
    out.useq = s.z;
    out.u0 = s.z.head(nu);
    out.status = s.status == qp::Status::kOptimal ? MpcStatus::kOk
                                                  : MpcStatus::kIterLimit;
    out.qp_iters = s.iterations;
    out.kkt_residual = s.kkt_residual;
    out.objective = s.objective;
    return out;
  }

  // Soft fallback: shared slack on the set rows, inputs stay hard.
  const int n = N * nu;
  const int mrows = static_cast<int>(c.A.rows());
  qp::Problem qs;
  qs.H = Eigen::MatrixXd::Zero(n + 1, n + 1);
  qs.H.topLeftCorner(n, n) = c.H;
  qs.H(n, n) = 2.0 * p.cfg.slack_weight;
  qs.f = Eigen::VectorXd::Zero(n + 1);
  qs.f.head(n) = c.f;
  qs.A = Eigen::MatrixXd::Zero(mrows + 1, n + 1);
  qs.A.topLeftCorner(mrows, n) = c.A;
  for (int r = c.n_input_rows; r < mrows; ++r) qs.A(r, n) = -1.0;
  qs.A(mrows, n) = -1.0;
  qs.b = Eigen::VectorXd::Zero(mrows + 1);
  qs.b.head(mrows) = c.b;
  qp::Solution ss = qp::solve(qs, p.cfg.qp_opts, nullptr);
  if (ss.status != qp::Status::kOptimal && ss.status != qp::Status::kIterLimit)
    throw std::runtime_error("mpc: soft-constrained fallback failed");

  out.useq = ss.z.head(n);
  out.u0 = ss.z.head(nu);
  out.status = MpcStatus::kSlack;
  out.qp_iters = ss.iterations;
  out.kkt_residual = ss.kkt_residual;
  out.objective = ss.objective;
  out.slack = ss.z(n);
  return out;
}

}  // namespace cmpc
