#pragma once

/**
 * @file polytope.hpp
 * @brief Halfspace polytopes {x : A x <= b} and the set algebra used by the
 *        invariant-set machinery: intersection, Minkowski erosion, affine
 *        preimage, Fourier-Motzkin projection and LP-based reduction.
 *
 * Every predicate (emptiness, containment, redundancy) routes through the
 * LP kernel in lp.hpp with a single shared feasibility tolerance. The empty
 * set has the canonical form {x : 0'x <= -1}.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "cmpc/lp.hpp"

namespace cmpc {

struct SupportResult {
  bool bounded = false;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd argmax;  ///< valid only when bounded
};

class Polytope {
 public:
  Polytope() : A_(0, 0), b_(0) {}

  Polytope(Eigen::MatrixXd A, Eigen::VectorXd b)
      : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() != b_.size())
      throw std::invalid_argument("Polytope: A rows and b length differ");
    // Rows are stored unit-norm so one absolute LP tolerance means the same
    // thing for every constraint, however lopsided the producing arithmetic.
    for (int i = 0; i < A_.rows(); ++i) {
      const double s = A_.row(i).norm();
      if (s >= 1e-12 && s != 1.0) {
        A_.row(i) /= s;
        b_(i) /= s;
      }
    }
  }

  static Polytope from_box(const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi) {
    if (lo.size() != hi.size())
      throw std::invalid_argument("from_box: bound length mismatch");
    const int n = static_cast<int>(lo.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, n);
    Eigen::VectorXd b(2 * n);
    for (int i = 0; i < n; ++i) {
      A(2 * i, i) = 1.0;
      b(2 * i) = hi(i);
      A(2 * i + 1, i) = -1.0;
      b(2 * i + 1) = -lo(i);
    }
    return Polytope(std::move(A), std::move(b));
  }

  /// Canonical empty set in the given dimension.
  static Polytope empty_set(int dim) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, dim);
    Eigen::VectorXd b(1);
    b(0) = -1.0;
    return Polytope(std::move(A), std::move(b));
  }

  /// All of R^dim (no rows).
  static Polytope universe(int dim) {
    return Polytope(Eigen::MatrixXd::Zero(0, dim), Eigen::VectorXd(0));
  }

  /// Block product P x Q in R^{dim(P)+dim(Q)}.
  static Polytope cartesian(const Polytope& p, const Polytope& q) {
    const int n = p.dim() + q.dim();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p.num_rows() + q.num_rows(), n);
    Eigen::VectorXd b(p.num_rows() + q.num_rows());
    A.topLeftCorner(p.num_rows(), p.dim()) = p.A_;
    A.bottomRightCorner(q.num_rows(), q.dim()) = q.A_;
    b.head(p.num_rows()) = p.b_;
    b.tail(q.num_rows()) = q.b_;
    return Polytope(std::move(A), std::move(b));
  }

  int dim() const { return static_cast<int>(A_.cols()); }
  int num_rows() const { return static_cast<int>(A_.rows()); }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }

  bool is_empty(double tol = lp::kFeasTol) const {
    if (num_rows() == 0) return false;
    lp::PointResult p = lp::find_point(A_, b_, tol);
    if (p.violation == std::numeric_limits<double>::infinity())
      throw std::runtime_error("Polytope::is_empty: LP failure");
    return !p.feasible;
  }

  bool contains_point(const Eigen::VectorXd& x,
                      double tol = lp::kFeasTol) const {
    if (x.size() != dim())
      throw std::invalid_argument("contains_point: dimension mismatch");
    const double xs = 1.0 + x.lpNorm<Eigen::Infinity>();
    for (int i = 0; i < num_rows(); ++i) {
      const double s = std::max(1.0, A_.row(i).norm());
      if (A_.row(i).dot(x) - b_(i) > tol * s * xs) return false;
    }
    return true;
  }

  SupportResult support(const Eigen::VectorXd& dir) const {
    if (dir.size() != dim())
      throw std::invalid_argument("support: dimension mismatch");
    lp::Result r = lp::solve_max(A_, b_, dir);
    switch (r.status) {
      case lp::Status::kOptimal:
        return {true, r.value, r.x};
      case lp::Status::kUnbounded:
        return {false, std::numeric_limits<double>::infinity(),
                Eigen::VectorXd()};
      case lp::Status::kInfeasible:
        throw std::domain_error("support: polytope is empty");
      default:
        throw std::runtime_error("support: LP failure");
    }
  }

  /// When the rows describe an axis-aligned box, returns its bounds.
  /// Fails (returns false) on any non-axis row or a missing side.
  bool box_bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    const int n = dim();
    lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < num_rows(); ++i) {
      int k = -1;
      for (int j = 0; j < n; ++j) {
        if (A_(i, j) != 0.0) {
          if (k >= 0) return false;
          k = j;
        }
      }
      if (k < 0) {
        if (b_(i) < 0) return false;  // degenerate empty marker
        continue;
      }
      const double v = b_(i) / A_(i, k);
      if (A_(i, k) > 0)
        hi(k) = std::min(hi(k), v);
      else
        lo(k) = std::max(lo(k), v);
    }
    for (int j = 0; j < n; ++j)
      if (!std::isfinite(lo(j)) || !std::isfinite(hi(j))) return false;
    return true;
  }

  /// True when every point of `other` satisfies all rows of *this.
  bool contains_set(const Polytope& other, double tol = lp::kFeasTol) const {
    if (other.dim() != dim())
      throw std::invalid_argument("contains_set: dimension mismatch");
    if (other.is_empty(tol)) return true;
    for (int i = 0; i < num_rows(); ++i) {
      const double s = std::max(1.0, A_.row(i).norm());
      lp::Result r = lp::solve_max(other.A_, other.b_, A_.row(i).transpose());
      if (r.status == lp::Status::kUnbounded) return false;
      if (r.status != lp::Status::kOptimal)
        throw std::runtime_error("contains_set: LP failure");
      if ((r.value - b_(i)) / s > tol) return false;
    }
    return true;
  }

  Polytope intersect(const Polytope& other) const {
    if (other.dim() != dim())
      throw std::invalid_argument("intersect: dimension mismatch");
    Eigen::MatrixXd A(num_rows() + other.num_rows(), dim());
    Eigen::VectorXd b(num_rows() + other.num_rows());
    A.topRows(num_rows()) = A_;
    A.bottomRows(other.num_rows()) = other.A_;
    b.head(num_rows()) = b_;
    b.tail(other.num_rows()) = other.b_;
    return Polytope(std::move(A), std::move(b));
  }

  /// P minus an inf-norm ball of radius rho (support of the ball is the
  /// 1-norm of the row normal).
  Polytope erode_ball(double rho) const {
    if (rho < 0) throw std::invalid_argument("erode_ball: negative radius");
    Eigen::VectorXd b = b_;
    for (int i = 0; i < num_rows(); ++i)
      b(i) -= rho * A_.row(i).lpNorm<1>();
    return Polytope(A_, std::move(b));
  }

  /// Minkowski difference P minus W: offsets drop by the support of W.
  Polytope erode_set(const Polytope& w) const {
    if (w.dim() != dim())
      throw std::invalid_argument("erode_set: dimension mismatch");
    return erode_set(w, Eigen::MatrixXd::Identity(dim(), dim()));
  }

  /// P minus (map * W), evaluated row-wise via h_W(map' a_i).
  Polytope erode_set(const Polytope& w, const Eigen::MatrixXd& map) const {
    if (map.rows() != dim() || map.cols() != w.dim())
      throw std::invalid_argument("erode_set: map dimension mismatch");
    if (w.dim() == 0) return *this;
    if (!w.contains_point(Eigen::VectorXd::Zero(w.dim())))
      throw std::invalid_argument("erode_set: W must contain the origin");
    Eigen::VectorXd b = b_;
    Eigen::VectorXd lo, hi;
    const bool box = w.box_bounds(lo, hi);
    for (int i = 0; i < num_rows(); ++i) {
      Eigen::VectorXd d = map.transpose() * A_.row(i).transpose();
      if (box) {
        double h = 0.0;
        for (int j = 0; j < d.size(); ++j)
          h += d(j) > 0 ? hi(j) * d(j) : lo(j) * d(j);
        b(i) -= h;
        continue;
      }
      SupportResult s = w.support(d);
      if (!s.bounded)
        throw std::invalid_argument("erode_set: W unbounded in a row normal");
      b(i) -= s.value;
    }
    return Polytope(A_, std::move(b));
  }

  /// {z : map z + offset in P}.
  Polytope affine_preimage(const Eigen::MatrixXd& map,
                           const Eigen::VectorXd& offset) const {
    if (map.rows() != dim() || offset.size() != dim())
      throw std::invalid_argument("affine_preimage: dimension mismatch");
    return Polytope(A_ * map, b_ - A_ * offset);
  }

  /// Orthogonal projection onto the coordinates in `keep` (ascending),
  /// by Fourier-Motzkin elimination with LP reduction after each step.
  /// The first `n_protected` rows are treated as reduce() anchors for as
  /// long as elimination leaves them untouched.
  Polytope project(const std::vector<int>& keep, double tol = lp::kFeasTol,
                   int n_protected = 0) const {
    std::vector<int> k = keep;
    std::sort(k.begin(), k.end());
    if (std::adjacent_find(k.begin(), k.end()) != k.end())
      throw std::invalid_argument("project: duplicate index");
    for (int i : k)
      if (i < 0 || i >= dim())
        throw std::invalid_argument("project: index out of range");
    if (is_empty(tol)) return empty_set(static_cast<int>(k.size()));

    std::vector<int> live;  // original column indices, ascending
    for (int i = 0; i < dim(); ++i) live.push_back(i);
    Eigen::MatrixXd A = A_;
    Eigen::VectorXd b = b_;
    int np = std::min(n_protected, num_rows());

    auto is_kept = [&k](int col) {
      return std::binary_search(k.begin(), k.end(), col);
    };

    while (static_cast<int>(live.size()) > static_cast<int>(k.size())) {
      // Pick the eliminable column with the smallest pairing fan-out.
      int best_local = -1;
      long best_cost = -1;
      for (size_t c = 0; c < live.size(); ++c) {
        if (is_kept(live[c])) continue;
        long npos = 0, nneg = 0;
        for (int r = 0; r < A.rows(); ++r) {
          if (A(r, static_cast<int>(c)) > 1e-12) ++npos;
          else if (A(r, static_cast<int>(c)) < -1e-12) ++nneg;
        }
        const long cost = npos * nneg;
        if (best_local < 0 || cost < best_cost) {
          best_local = static_cast<int>(c);
          best_cost = cost;
        }
      }

      const int c = best_local;
      std::vector<int> pos, neg, zero;
      for (int r = 0; r < A.rows(); ++r) {
        const double v = A(r, c);
        if (v > 1e-12) pos.push_back(r);
        else if (v < -1e-12) neg.push_back(r);
        else zero.push_back(r);
      }
      // Ascending indices: protected rows untouched by this column form a
      // prefix of `zero`, so they stay a prefix of the fresh system.
      int np_next = 0;
      for (int r : zero)
        if (r < np) ++np_next;

      const int ncols = static_cast<int>(live.size()) - 1;
      const long nnew = static_cast<long>(zero.size()) +
                        static_cast<long>(pos.size()) * neg.size();
      Eigen::MatrixXd An(nnew, ncols);
      Eigen::VectorXd bn(nnew);
      auto drop_col = [&](const Eigen::RowVectorXd& row, int out_r) {
        int oc = 0;
        for (int cc = 0; cc < row.size(); ++cc) {
          if (cc == c) continue;
          An(out_r, oc++) = row(cc);
        }
      };
      int out = 0;
      for (int r : zero) {
        drop_col(A.row(r), out);
        bn(out++) = b(r);
      }
      for (int rp : pos) {
        for (int rn : neg) {
          const Eigen::RowVectorXd comb =
              A.row(rp) / A(rp, c) + A.row(rn) / (-A(rn, c));
          const double bc = b(rp) / A(rp, c) + b(rn) / (-A(rn, c));
          drop_col(comb, out);
          bn(out++) = bc;
        }
      }
      live.erase(live.begin() + c);

      // Normalize fresh rows, then prune with the LP reducer.
      for (int r = 0; r < An.rows(); ++r) {
        const double s = An.row(r).norm();
        if (s > 1e-300) {
          An.row(r) /= s;
          bn(r) /= s;
        }
      }
      Polytope step(std::move(An), std::move(bn));
      step = step.reduce(tol, np_next);
      if (step.num_rows() == 1 && step.A().row(0).isZero(0) &&
          step.b()(0) < 0) {
        return empty_set(static_cast<int>(k.size()));
      }
      if (step.num_rows() > 20000)
        throw std::runtime_error("project: row count blew up");
      A = step.A();
      b = step.b();
      np = np_next;
    }
    return Polytope(std::move(A), std::move(b));
  }

  /// Removes strictly redundant rows. Keeps surviving rows verbatim and in
  /// order; returns the canonical empty set when infeasible.
  Polytope reduce(double tol = lp::kFeasTol, int n_protected = 0) const {
    const int m = num_rows();
    const int n = dim();
    const int np = std::min(n_protected, m);
    std::vector<char> alive(m, 1);

    // Trivial and duplicate rows first. Rows in the protected prefix are
    // kept verbatim so callers can rely on them as cheap certificates.
    Eigen::MatrixXd An(m, n);
    Eigen::VectorXd bn(m);
    for (int i = 0; i < m; ++i) {
      const double s = A_.row(i).norm();
      if (s < 1e-12) {
        if (b_(i) < -tol) return empty_set(n);
        if (i >= np) alive[i] = 0;
        An.row(i).setZero();
        bn(i) = b_(i);
        continue;
      }
      An.row(i) = A_.row(i) / s;
      bn(i) = b_(i) / s;
    }
    for (int i = 0; i < m; ++i) {
      if (!alive[i]) continue;
      for (int j = std::max(i + 1, np); j < m; ++j) {
        if (!alive[j]) continue;
        if ((An.row(i) - An.row(j)).lpNorm<Eigen::Infinity>() < 1e-9) {
          if (bn(j) < bn(i) && i >= np) {
            alive[i] = 0;
            break;
          }
          if (bn(j) >= bn(i)) alive[j] = 0;
        }
      }
    }

    // Axis bounds from the protected prefix let whole fans of near-parallel
    // rows go without an LP: row j is implied by row i once
    //   b_i + sum_k |a_ik - a_jk| * B_k <= b_j
    // with |x_k| <= B_k valid on the rest of the system.
    if (np > 0) {
      Eigen::VectorXd ub = Eigen::VectorXd::Constant(
          n, std::numeric_limits<double>::infinity());
      Eigen::VectorXd lb = ub;
      for (int i = 0; i < np; ++i) {
        int k = -1;
        bool axis = true;
        for (int j = 0; j < n; ++j) {
          if (An(i, j) != 0.0) {
            if (k >= 0) { axis = false; break; }
            k = j;
          }
        }
        if (!axis || k < 0) continue;
        if (An(i, k) > 0)
          ub(k) = std::min(ub(k), bn(i) / An(i, k));
        else
          lb(k) = std::min(lb(k), bn(i) / -An(i, k));
      }
      Eigen::VectorXd B(n);
      for (int k = 0; k < n; ++k)
        B(k) = std::max(std::abs(ub(k)), std::abs(lb(k)));
      for (int j = np; j < m; ++j) {
        if (!alive[j]) continue;
        double cap = 0.0;
        for (int k = 0; k < n && cap <= bn(j) + 1e-12; ++k) {
          const double d = std::abs(An(j, k));
          if (d != 0.0) cap += d * B(k);
        }
        if (cap <= bn(j) + 1e-12) alive[j] = 0;  // holds on the whole box
      }
      for (int j = np; j < m; ++j) {
        if (!alive[j]) continue;
        for (int i = 0; i < m && alive[j]; ++i) {
          if (i == j || !alive[i]) continue;
          double gap = bn(j) - bn(i) + 1e-12;
          if (gap < 0) continue;
          double slack = 0.0;
          for (int k = 0; k < n; ++k) {
            const double d = std::abs(An(i, k) - An(j, k));
            if (d == 0.0) continue;
            slack += d * B(k);
            if (!(slack <= gap)) break;
          }
          if (slack <= gap) alive[j] = 0;
        }
      }
    }

    auto gather = [&](int skip) {
      int cnt = 0;
      for (int i = 0; i < m; ++i)
        if (alive[i] && i != skip) ++cnt;
      Eigen::MatrixXd A(cnt + (skip >= 0 ? 1 : 0), n);
      Eigen::VectorXd b(cnt + (skip >= 0 ? 1 : 0));
      int r = 0;
      for (int i = 0; i < m; ++i) {
        if (alive[i] && i != skip) {
          A.row(r) = A_.row(i);
          b(r++) = b_(i);
        }
      }
      return std::make_pair(A, b);
    };

    {
      auto [A, b] = gather(-1);
      if (A.rows() == 0) return universe(n);
      lp::PointResult p = lp::find_point(A, b, tol);
      if (p.violation == std::numeric_limits<double>::infinity())
        throw std::runtime_error("reduce: LP failure");
      if (!p.feasible) return empty_set(n);
    }

    for (int i = np; i < m; ++i) {
      if (!alive[i]) continue;
      int others = 0;
      for (int j = 0; j < m; ++j)
        if (alive[j] && j != i) ++others;
      if (others == 0) continue;  // last row always stays

      auto [A, b] = gather(i);
      const double s = A_.row(i).norm();
      // Cap row keeps the probe bounded without affecting the verdict.
      A.row(A.rows() - 1) = A_.row(i);
      b(A.rows() - 1) = b_(i) + s;
      lp::Result r = lp::solve_max(A, b, A_.row(i).transpose(), tol);
      // A stuck probe keeps the row: that is conservative, the set is
      // unchanged either way.
      if (r.status == lp::Status::kOptimal && (r.value - b_(i)) / s <= tol)
        alive[i] = 0;
    }

    auto [A, b] = gather(-1);
    if (A.rows() == 0) return universe(n);
    return Polytope(std::move(A), std::move(b));
  }

  /// Like reduce(), but rows may also be discharged by `context`, a system
  /// known to hold wherever the result will be used. The context rows are
  /// not part of the returned polytope. Returns the canonical empty set
  /// when this set is infeasible together with the context.
  Polytope reduce_given(const Polytope& context,
                        double tol = lp::kFeasTol) const {
    if (context.num_rows() == 0) return reduce(tol);
    if (context.dim() != dim())
      throw std::invalid_argument("reduce_given: dimension mismatch");
    const int nc = context.num_rows();
    const int n = dim();
    Eigen::MatrixXd A(nc + num_rows(), n);
    Eigen::VectorXd b(nc + num_rows());
    A.topRows(nc) = context.A();
    b.head(nc) = context.b();
    A.bottomRows(num_rows()) = A_;
    b.tail(num_rows()) = b_;
    Polytope r = Polytope(std::move(A), std::move(b)).reduce(tol, nc);
    if (r.num_rows() == 1 && r.A().row(0).lpNorm<Eigen::Infinity>() == 0.0 &&
        r.b()(0) < 0)
      return r;  // infeasible together with the context
    return Polytope(r.A().bottomRows(r.num_rows() - nc),
                    r.b().tail(r.num_rows() - nc));
  }

  /// Componentwise bounds; throws if empty or unbounded.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> bounding_box() const {
    Eigen::VectorXd lo(dim()), hi(dim());
    for (int i = 0; i < dim(); ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
      e(i) = 1.0;
      SupportResult up = support(e);
      e(i) = -1.0;
      SupportResult dn = support(e);
      if (!up.bounded || !dn.bounded)
        throw std::domain_error("bounding_box: unbounded polytope");
      hi(i) = up.value;
      lo(i) = -dn.value;
    }
    return {lo, hi};
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

/// Brute-force vertex enumeration for low dimensions (n <= 3): solves every
/// n-row subsystem and keeps feasible, deduplicated solutions.
inline std::vector<Eigen::VectorXd> enumerate_vertices(const Polytope& p,
                                                       double tol = 1e-7) {
  const int n = p.dim();
  const int m = p.num_rows();
  if (n < 1 || n > 3)
    throw std::invalid_argument("enumerate_vertices: dimension must be 1..3");
  std::vector<Eigen::VectorXd> verts;
  std::vector<int> idx(n);
  auto try_combo = [&](const std::vector<int>& rows) {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
      M.row(i) = p.A().row(rows[i]);
      rhs(i) = p.b()(rows[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) return;
    Eigen::VectorXd x = lu.solve(rhs);
    if (!p.contains_point(x, tol)) return;
    for (const auto& v : verts)
      if ((v - x).lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + x.lpNorm<Eigen::Infinity>()))
        return;
    verts.push_back(std::move(x));
  };
  // Iterate n-combinations in lexicographic order.
  std::vector<int> c(n);
  for (int i = 0; i < n; ++i) c[i] = i;
  if (m < n) return verts;
  while (true) {
    try_combo(c);
    int i = n - 1;
    while (i >= 0 && c[i] == m - n + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < n; ++j) c[j] = c[j - 1] + 1;
  }
  return verts;
}

}  // namespace cmpc
