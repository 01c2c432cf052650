#include <catch_amalgamated.hpp>

#include "cmpc/lp.hpp"
#include "helpers.hpp"

using namespace cmpc;
using testutil::MatrixXd;
using testutil::VectorXd;

TEST_CASE("box support has closed form") {
  MatrixXd A;
  VectorXd b;
  VectorXd h(3);
  h << 1.0, 2.0, 0.5;
  testutil::box_rows(h, &A, &b);
  VectorXd c(3);
  c << 3.0, -1.0, 4.0;
  lp::Result r = lp::solve_max(A, b, c);
  REQUIRE(r.status == lp::Status::kOptimal);
  CHECK(r.value == Catch::Approx(3.0 * 1 + 1.0 * 2 + 4.0 * 0.5).epsilon(1e-12));
  CHECK((A * r.x - b).maxCoeff() <= 1e-9);
}

TEST_CASE("simplex on the standard triangle") {
  MatrixXd A(3, 2);
  A << 1, 1, -1, 0, 0, -1;
  VectorXd b(3);
  b << 1, 0, 0;
  VectorXd c(2);
  c << 2, 1;
  lp::Result r = lp::solve_max(A, b, c);
  REQUIRE(r.status == lp::Status::kOptimal);
  CHECK(r.value == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(r.x(0) == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.x(1) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("random bounded LPs match vertex enumeration") {
  std::mt19937_64 rng(20240811);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 2);
    MatrixXd A;
    VectorXd b;
    testutil::random_bounded_system(rng, n, 4, &A, &b);
    const VectorXd c = 3.0 * testutil::random_direction(rng, n);
    testutil::VertexLp oracle = testutil::vertex_lp(A, b, c);
    REQUIRE(oracle.found);
    lp::Result r = lp::solve_max(A, b, c);
    REQUIRE(r.status == lp::Status::kOptimal);
    CHECK(r.value == Catch::Approx(oracle.value).margin(1e-9));
    CHECK((A * r.x - b).maxCoeff() <= 1e-9);
    ++checked;
  }
  CHECK(checked == 150);
}

TEST_CASE("infeasible systems are classified") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 2);
    MatrixXd A;
    VectorXd b;
    testutil::random_bounded_system(rng, n, 2, &A, &b);
    const VectorXd a = testutil::random_direction(rng, n);
    // Cut below the certified minimum of a'x, so nothing survives.
    testutil::VertexLp mn = testutil::vertex_lp(A, b, -a);
    REQUIRE(mn.found);
    MatrixXd A2(A.rows() + 1, n);
    VectorXd b2(b.size() + 1);
    A2.topRows(A.rows()) = A;
    b2.head(b.size()) = b;
    A2.row(A.rows()) = a.transpose();
    b2(b.size()) = -mn.value - 1.0;
    lp::Result r = lp::solve_max(A2, b2, a);
    CHECK(r.status == lp::Status::kInfeasible);
    lp::PointResult p = lp::find_point(A2, b2);
    CHECK_FALSE(p.feasible);
  }
}

TEST_CASE("unbounded rays are classified") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 2);
    const VectorXd c = testutil::random_direction(rng, n);
    MatrixXd A(n + 2, n);
    VectorXd b(n + 2);
    for (int i = 0; i < n + 2; ++i) {
      VectorXd a = testutil::random_direction(rng, n);
      if (a.dot(c) > 0) a = -a;  // keep the c ray in the recession cone
      A.row(i) = a.transpose();
      b(i) = 0.5;
    }
    lp::Result r = lp::solve_max(A, b, c);
    CHECK(r.status == lp::Status::kUnbounded);
  }
}

TEST_CASE("find_point returns a feasible point with margin") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 2);
    MatrixXd A;
    VectorXd b;
    testutil::random_bounded_system(rng, n, 3, &A, &b);
    lp::PointResult p = lp::find_point(A, b);
    REQUIRE(p.feasible);
    CHECK((A * p.x - b).maxCoeff() <= 1e-9);
  }
}

TEST_CASE("degenerate rows are tolerated") {
  MatrixXd A(5, 2);
  VectorXd b(5);
  A << 1, 0, 1, 0, -1, 0, 0, 1, 0, -1;  // duplicated first row
  b << 1, 1, 1, 2, 2;
  VectorXd c(2);
  c << 1, 1;
  lp::Result r = lp::solve_max(A, b, c);
  REQUIRE(r.status == lp::Status::kOptimal);
  CHECK(r.value == Catch::Approx(3.0).epsilon(1e-12));

  SECTION("zero rows: trivial and contradictory") {
    MatrixXd Az(3, 2);
    VectorXd bz(3);
    Az << 0, 0, 1, 0, -1, 0;
    bz << 0.0, 1.0, 1.0;
    // y is free but the objective only sees x, so the value is finite.
    lp::Result rz = lp::solve_max(Az, bz, (VectorXd(2) << 1, 0).finished());
    REQUIRE(rz.status == lp::Status::kOptimal);
    CHECK(rz.value == Catch::Approx(1.0).margin(1e-9));
    bz(0) = -0.5;
    CHECK(lp::find_point(Az, bz).feasible == false);
  }
}

TEST_CASE("solver counters accumulate") {
  const long before = lp::stats().solves;
  MatrixXd A;
  VectorXd b;
  VectorXd h(2);
  h << 1, 1;
  testutil::box_rows(h, &A, &b);
  (void)lp::solve_max(A, b, (VectorXd(2) << 1, 1).finished());
  CHECK(lp::stats().solves > before);
}
