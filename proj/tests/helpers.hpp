#pragma once

// Shared test utilities: deterministic random geometry and brute-force
// oracles the library results are checked against. Oracles here must not
// call the code paths they certify.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd random_vector(std::mt19937_64& rng, int n, double lo,
                              double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline VectorXd random_direction(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0.0, 1.0);
  VectorXd v(n);
  do {
    for (int i = 0; i < n; ++i) v(i) = d(rng);
  } while (v.norm() < 1e-3);
  return v / v.norm();
}

/// Box rows |x_i| <= h_i stacked as A x <= b.
inline void box_rows(const VectorXd& h, MatrixXd* A, VectorXd* b) {
  const int n = static_cast<int>(h.size());
  A->setZero(2 * n, n);
  b->resize(2 * n);
  for (int i = 0; i < n; ++i) {
    (*A)(2 * i, i) = 1.0;
    (*b)(2 * i) = h(i);
    (*A)(2 * i + 1, i) = -1.0;
    (*b)(2 * i + 1) = h(i);
  }
}

/// Bounded nonempty random system: a box plus extra rows kept strictly
/// feasible at the origin.
inline void random_bounded_system(std::mt19937_64& rng, int n, int extra,
                                  MatrixXd* A, VectorXd* b) {
  MatrixXd Ab;
  VectorXd bb;
  box_rows(random_vector(rng, n, 0.5, 2.0), &Ab, &bb);
  std::uniform_real_distribution<double> off(0.1, 1.5);
  A->resize(2 * n + extra, n);
  b->resize(2 * n + extra);
  A->topRows(2 * n) = Ab;
  b->head(2 * n) = bb;
  for (int i = 0; i < extra; ++i) {
    A->row(2 * n + i) = random_direction(rng, n).transpose();
    (*b)(2 * n + i) = off(rng);
  }
}

struct VertexLp {
  bool found = false;
  double value = -std::numeric_limits<double>::infinity();
  VectorXd argmax;
};

/// Exhaustive vertex enumeration for max c'x over {A x <= b}: solves every
/// n-subset of rows as equalities and keeps the best feasible solution.
/// Valid for feasible bounded systems whose optimum sits at a vertex.
inline VertexLp vertex_lp(const MatrixXd& A, const VectorXd& b,
                          const VectorXd& c, double feas_tol = 1e-9) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  VertexLp out;
  std::vector<int> idx(n);
  std::function<void(int, int)> rec = [&](int start, int k) {
    if (k == n) {
      MatrixXd As(n, n);
      VectorXd bs(n);
      for (int i = 0; i < n; ++i) {
        As.row(i) = A.row(idx[i]);
        bs(i) = b(idx[i]);
      }
      Eigen::FullPivLU<MatrixXd> lu(As);
      if (!lu.isInvertible()) return;
      VectorXd x = lu.solve(bs);
      if (((A * x - b).array() > feas_tol).any()) return;
      const double v = c.dot(x);
      if (v > out.value) {
        out.found = true;
        out.value = v;
        out.argmax = x;
      }
      return;
    }
    for (int i = start; i <= m - (n - k); ++i) {
      idx[k] = i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  return out;
}

/// All vertices of a bounded polytope by the same subset enumeration,
/// deduplicated.
inline std::vector<VectorXd> vertex_enum(const MatrixXd& A, const VectorXd& b,
                                         double feas_tol = 1e-9) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  std::vector<VectorXd> verts;
  std::vector<int> idx(n);
  std::function<void(int, int)> rec = [&](int start, int k) {
    if (k == n) {
      MatrixXd As(n, n);
      VectorXd bs(n);
      for (int i = 0; i < n; ++i) {
        As.row(i) = A.row(idx[i]);
        bs(i) = b(idx[i]);
      }
      Eigen::FullPivLU<MatrixXd> lu(As);
      if (!lu.isInvertible()) return;
      VectorXd x = lu.solve(bs);
      if (((A * x - b).array() > feas_tol).any()) return;
      for (const VectorXd& v : verts)
        if ((v - x).lpNorm<Eigen::Infinity>() < 1e-7) return;
      verts.push_back(x);
      return;
    }
    for (int i = start; i <= m - (n - k); ++i) {
      idx[k] = i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  return verts;
}

/// Support of the vertex set in direction d.
inline double vertex_support(const std::vector<VectorXd>& verts,
                             const VectorXd& d) {
  double best = -std::numeric_limits<double>::infinity();
  for (const VectorXd& v : verts) best = std::max(best, d.dot(v));
  return best;
}

}  // namespace testutil
