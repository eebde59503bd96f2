#include "icl/simplex.hpp"

#include <doctest.h>

#include <random>

using namespace icl::lp;

TEST_CASE("textbook maximization")
{
  // max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
  Problem p;
  p.a.resize(3, 2);
  p.a << 1, 0, 0, 2, 3, 2;
  p.b = Eigen::Vector3d(4, 12, 18);
  p.c = Eigen::Vector2d(3, 5);
  p.rows.assign(3, RowType::LessEq);
  const Result r = solve(p);
  REQUIRE(r.status == Status::Optimal);
  CHECK(r.objective == doctest::Approx(36.0));
  CHECK(r.x(0) == doctest::Approx(2.0));
  CHECK(r.x(1) == doctest::Approx(6.0));
  // Shadow prices: 0, 1.5, 1.
  CHECK(r.duals(0) == doctest::Approx(0.0));
  CHECK(r.duals(1) == doctest::Approx(1.5));
  CHECK(r.duals(2) == doctest::Approx(1.0));
}

TEST_CASE("equalities, lower bounds and infeasibility")
{
  // max x + y st x + y = 1, x >= 0.7.
  Problem p;
  p.a.resize(2, 2);
  p.a << 1, 1, 1, 0;
  p.b = Eigen::Vector2d(1, 0.7);
  p.c = Eigen::Vector2d(1, 2);
  p.rows = {RowType::Equal, RowType::GreaterEq};
  const Result r = solve(p);
  REQUIRE(r.status == Status::Optimal);
  CHECK(r.x(0) == doctest::Approx(0.7));
  CHECK(r.objective == doctest::Approx(1.3));
  CHECK(r.duals(1) <= 0.0);

  p.b(1) = 1.5;
  CHECK(solve(p).status == Status::Infeasible);

  Problem u;
  u.a.resize(1, 2);
  u.a << 1, -1;
  u.b = Eigen::VectorXd::Constant(1, 1.0);
  u.c = Eigen::Vector2d(1, 1);
  u.rows = {RowType::LessEq};
  CHECK(solve(u).status == Status::Unbounded);
}

TEST_CASE("random LPs: strong duality and warm starts")
{
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int i = 0; i < 50; ++i)
  {
    const int m = 4, n = 7;
    Problem p;
    p.a.resize(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c)
        p.a(r, c) = u(rng);
    p.b = Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng) * 5; });
    p.c = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    p.rows.assign(m, RowType::LessEq);
    const Result r = solve(p);
    REQUIRE(r.status == Status::Optimal);
    CHECK((p.a * r.x - p.b).maxCoeff() <= 1e-9);
    CHECK(r.duals.dot(p.b) == doctest::Approx(r.objective).epsilon(1e-9));
    CHECK(((p.a.transpose() * r.duals - p.c).array() >= -1e-9).all());

    // Append a column and resume from the previous basis.
    Problem q = p;
    q.a.conservativeResize(m, n + 1);
    q.a.col(n) = Eigen::VectorXd::NullaryExpr(m, [&] { return u(rng); });
    q.c.conservativeResize(n + 1);
    q.c(n) = 2.0;
    const Result cold = solve(q);
    const Result warm = solve(q, 20000, &r.basis);
    REQUIRE(warm.status == Status::Optimal);
    CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-10));
    CHECK(warm.objective >= r.objective - 1e-12);
  }
}
