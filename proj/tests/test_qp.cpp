#include <doctest.h>

#include "oracles.hpp"
#include "wsvm/qp.hpp"

#include <cmath>
#include <random>

using namespace wsvm::qp;

namespace {

ConicProgram make_program(const Matrix& q, const Vector& c, const Matrix& a, const Vector& l,
                          const Vector& u) {
  ConicProgram p;
  p.curvature = to_sparse(q);
  p.linear_cost = c;
  p.constraints = to_sparse(a);
  p.lower = l;
  p.upper = u;
  return p;
}

ConicProgram equality_example() {
  // minimize 1/2 (w1^2 + w2^2) - w1 - 2 w2  s.t.  w1 + w2 = 1
  Matrix q = Matrix::Identity(2, 2);
  Vector c(2);
  c << -1.0, -2.0;
  Matrix a(1, 2);
  a << 1.0, 1.0;
  Vector b(1);
  b << 1.0;
  return make_program(q, c, a, b, b);
}

ConicProgram random_strictly_convex_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> npick(1, 8), dpick(0, 12);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = npick(rng);
  const int m = dpick(rng);
  Matrix r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = gauss(rng);
  Matrix q = r.transpose() * r + (0.1 + unif(rng)) * Matrix::Identity(n, n);
  Vector c(n);
  for (int i = 0; i < n; ++i) c[i] = gauss(rng);
  Vector anchor(n);
  for (int i = 0; i < n; ++i) anchor[i] = gauss(rng);
  Matrix a(m, n);
  Vector l(m), u(m);
  int equalities = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
    const double at_anchor = a.row(i).dot(anchor);
    const double pick = unif(rng);
    if (pick < 0.15 && equalities < n - 1) {
      l[i] = u[i] = at_anchor;
      ++equalities;
    } else if (pick < 0.6) {
      l[i] = at_anchor - 0.1 - unif(rng);
      u[i] = kInfinity;
    } else {
      u[i] = at_anchor + 0.1 + unif(rng);
      l[i] = -kInfinity;
    }
  }
  return make_program(q, c, a, l, u);
}

ConicProgram random_bounded_lp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> npick(1, 5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  const int n = npick(rng);
  std::uniform_int_distribution<int> extra_pick(0, 12 - n);
  const int extra = extra_pick(rng);
  const int m = n + extra;
  Matrix a = Matrix::Zero(m, n);
  Vector l(m), u(m), c(n);
  for (int j = 0; j < n; ++j) {
    a(j, j) = 1.0;
    l[j] = -unif(rng);
    u[j] = unif(rng);
    c[j] = gauss(rng);
  }
  for (int i = n; i < m; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
    l[i] = -unif(rng) - 0.1;  // strictly feasible at the origin
    u[i] = kInfinity;
  }
  ConicProgram p = make_program(Matrix::Zero(n, n), c, a, l, u);
  return p;
}

}  // namespace

TEST_CASE("unconstrained quadratic minimum is zero") {
  ConicProgram p = make_program(Matrix::Identity(1, 1), Vector::Zero(1), Matrix(0, 1), Vector(0),
                                Vector(0));
  SolverResult r = solve(p);
  CHECK(r.status == SolveStatus::Solved);
  CHECK(std::abs(r.solution[0]) < 1e-9);
}

TEST_CASE("equality constrained quadratic matches the hand KKT solution") {
  SolverResult r = solve(equality_example());
  REQUIRE(r.status == SolveStatus::Solved);
  CHECK(std::abs(r.solution[0]) < 1e-7);
  CHECK(r.solution[1] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("box LP lands on the corner") {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, 1.0;
  Vector c(2), l(2), u(2);
  c << -1.0, -1.0;
  l << 0.0, 0.0;
  u << 1.0, 1.0;
  ConicProgram p = make_program(Matrix::Zero(2, 2), c, a, l, u);
  SolverResult r = solve(p);
  REQUIRE(r.status == SolveStatus::Solved);
  CHECK(r.solution[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.solution[1] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("kkt_residuals of an exact KKT point vanish") {
  ConicProgram p = equality_example();
  Vector x(2), y(1);
  x << 0.0, 1.0;
  y << 1.0;
  auto [rp, rd] = kkt_residuals(p, x, y);
  CHECK(rp < 1e-12);
  CHECK(rd < 1e-12);
}

TEST_CASE("kkt_residuals report a perturbed equality violation") {
  ConicProgram p = equality_example();
  Vector x(2), y(1);
  x << 0.1, 1.0;
  y << 1.0;
  auto [rp, rd] = kkt_residuals(p, x, y);
  CHECK(rp == doctest::Approx(0.1).epsilon(1e-12));
  (void)rd;
}

TEST_CASE("kkt_residuals with zero duals equal the bare gradient norm") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix q(3, 3);
  q.setZero();
  q.diagonal() << 2.0, 1.0, 0.5;
  Vector c(3), x(3);
  for (int i = 0; i < 3; ++i) {
    c[i] = gauss(rng);
    x[i] = gauss(rng);
  }
  ConicProgram p = make_program(q, c, Matrix(0, 3), Vector(0), Vector(0));
  auto [rp, rd] = kkt_residuals(p, x, Vector(0));
  CHECK(rp == 0.0);
  CHECK(rd == doctest::Approx((q * x + c).cwiseAbs().maxCoeff()).epsilon(1e-14));
}

TEST_CASE("random strictly convex QPs match active-set enumeration") {
  std::mt19937_64 rng(42);
  SolverSettings settings;
  settings.eps_abs = settings.eps_rel = 1e-8;
  for (int trial = 0; trial < 30; ++trial) {
    ConicProgram p = random_strictly_convex_qp(rng);
    oracle::EnumResult ref = oracle::enumerate_qp_active_sets(p);
    REQUIRE(ref.found);
    SolverResult r = solve(p, settings);
    REQUIRE(r.status == SolveStatus::Solved);
    CHECK(std::abs(oracle::objective(p, r.solution) - ref.objective) < 1e-6);
  }
}

TEST_CASE("random bounded LPs match vertex enumeration") {
  std::mt19937_64 rng(43);
  SolverSettings settings;
  settings.eps_abs = settings.eps_rel = 1e-8;
  for (int trial = 0; trial < 20; ++trial) {
    ConicProgram p = random_bounded_lp(rng);
    oracle::EnumResult ref = oracle::enumerate_lp_vertices(p);
    REQUIRE(ref.found);
    SolverResult r = solve(p, settings);
    REQUIRE(r.status == SolveStatus::Solved);
    CHECK(std::abs(p.linear_cost.dot(r.solution) - ref.objective) < 1e-6);
  }
}

TEST_CASE("identical inputs give identical results") {
  std::mt19937_64 rng(44);
  ConicProgram p = random_strictly_convex_qp(rng);
  SolverResult a = solve(p);
  SolverResult b = solve(p);
  CHECK(a.status == b.status);
  CHECK(a.iterations == b.iterations);
  REQUIRE(a.solution.size() == b.solution.size());
  CHECK((a.solution - b.solution).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("common positive rescaling of cost and curvature keeps the solution") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 5; ++trial) {
    ConicProgram p = random_strictly_convex_qp(rng);
    ConicProgram scaled = p;
    scaled.curvature = SparseMatrix(37.5 * p.curvature);
    scaled.linear_cost = 37.5 * p.linear_cost;
    SolverResult a = solve(p);
    SolverResult b = solve(scaled);
    REQUIRE(a.status == SolveStatus::Solved);
    REQUIRE(b.status == SolveStatus::Solved);
    CHECK((a.solution - b.solution).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("primal infeasibility is detected") {
  Matrix a(2, 1);
  a << 1.0, 1.0;
  Vector l(2), u(2);
  l << 1.0, -kInfinity;
  u << kInfinity, 0.0;
  ConicProgram p = make_program(Matrix::Zero(1, 1), Vector::Zero(1), a, l, u);
  SolverResult r = solve(p);
  CHECK(r.status == SolveStatus::PrimalInfeasible);
}

TEST_CASE("dual infeasibility is detected on an unbounded LP") {
  Matrix a(1, 1);
  a << 1.0;
  Vector l(1), u(1), c(1);
  l << 0.0;
  u << kInfinity;
  c << -1.0;
  ConicProgram p = make_program(Matrix::Zero(1, 1), c, a, l, u);
  SolverResult r = solve(p);
  CHECK(r.status == SolveStatus::DualInfeasible);
}

TEST_CASE("malformed programs are rejected before iterating") {
  ConicProgram p = equality_example();
  SUBCASE("asymmetric curvature") {
    Matrix q(2, 2);
    q << 1.0, 0.5, 0.0, 1.0;
    p.curvature = to_sparse(q);
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
  }
  SUBCASE("crossed bounds") {
    p.lower[0] = 2.0;
    p.upper[0] = 1.0;
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
  }
  SUBCASE("constraint width mismatch") {
    Matrix a(1, 3);
    a << 1.0, 1.0, 1.0;
    p.constraints = to_sparse(a);
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
  }
  SUBCASE("kkt_residuals dimension mismatch") {
    CHECK_THROWS_AS(kkt_residuals(equality_example(), Vector::Zero(3), Vector::Zero(1)),
                    std::invalid_argument);
  }
  SUBCASE("non-positive tolerance") {
    SolverSettings s;
    s.eps_abs = 0.0;
    CHECK_THROWS_AS(solve(equality_example(), s), std::invalid_argument);
  }
}

TEST_CASE("iteration cap returns the best iterate") {
  std::mt19937_64 rng(46);
  ConicProgram p = random_strictly_convex_qp(rng);
  SolverSettings s;
  s.max_iterations = 3;
  s.polish = false;
  SolverResult r = solve(p, s);
  CHECK(r.status == SolveStatus::MaxIterations);
  CHECK(r.solution.size() == p.num_variables());
  CHECK(r.solution.allFinite());
  CHECK(r.iterations == 3);
}

TEST_CASE("warm started solve agrees with the cold solution") {
  std::mt19937_64 rng(47);
  ConicProgram p = random_strictly_convex_qp(rng);
  SolverResult cold = solve(p);
  REQUIRE(cold.status == SolveStatus::Solved);
  SolverSettings s;
  s.warm_x = cold.solution;
  s.warm_y = cold.duals;
  SolverResult warm = solve(p, s);
  REQUIRE(warm.status == SolveStatus::Solved);
  CHECK((warm.solution - cold.solution).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(warm.iterations <= cold.iterations);
}
