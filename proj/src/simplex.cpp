#include "icl/simplex.hpp"

#include "icl/model.hpp"

#include <cmath>
#include <limits>

namespace icl::lp
{

namespace
{

constexpr double kTol = 1e-11;

struct Tableau
{
  // Rows 0..m-1 are constraints, row m is the objective (z_j - c_j form,
  // minimizing). Last column is the right-hand side.
  Eigen::MatrixXd t;
  std::vector<int> basis;
  int m = 0;
  int n_total = 0; // structural + slack + artificial columns
  int first_artificial = 0;

  double &rhs(int r) { return t(r, n_total); }

  void pivot(int row, int col)
  {
    const double p = t(row, col);
    t.row(row) /= p;
    for (int r = 0; r <= m; ++r)
    {
      if (r == row)
        continue;
      const double f = t(r, col);
      if (f != 0.0)
        t.row(r) -= f * t.row(row);
    }
    basis[static_cast<std::size_t>(row)] = col;
  }

  /// Bland's rule on the objective row (minimization: enter on negative
  /// reduced cost). Returns false when unbounded.
  Status run(int allowed_cols, int max_pivots, int &pivots)
  {
    while (true)
    {
      int enter = -1;
      for (int j = 0; j < allowed_cols; ++j)
        if (t(m, j) < -kTol)
        {
          enter = j;
          break;
        }
      if (enter < 0)
        return Status::Optimal;

      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r)
      {
        const double a = t(r, enter);
        if (a > kTol)
        {
          const double ratio = rhs(r) / a;
          if (ratio < best - kTol ||
              (std::abs(ratio - best) <= kTol && basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)]))
          {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0)
        return Status::Unbounded;
      pivot(leave, enter);
      if (++pivots > max_pivots)
        return Status::IterationLimit;
    }
  }
};

} // namespace

Result solve(const Problem &problem, int max_pivots, const std::vector<int> *warm_basis)
{
  const int m = static_cast<int>(problem.a.rows());
  const int n = static_cast<int>(problem.a.cols());
  if (problem.b.size() != m || problem.c.size() != n || static_cast<int>(problem.rows.size()) != m)
    throw Error("lp: inconsistent problem dimensions");

  // Normalize to b >= 0.
  Eigen::MatrixXd a = problem.a;
  Eigen::VectorXd b = problem.b;
  std::vector<RowType> rows = problem.rows;
  std::vector<double> flip(static_cast<std::size_t>(m), 1.0);
  for (int i = 0; i < m; ++i)
    if (b(i) < 0)
    {
      a.row(i) *= -1.0;
      b(i) *= -1.0;
      flip[static_cast<std::size_t>(i)] = -1.0;
      auto &rt = rows[static_cast<std::size_t>(i)];
      if (rt == RowType::LessEq)
        rt = RowType::GreaterEq;
      else if (rt == RowType::GreaterEq)
        rt = RowType::LessEq;
    }

  int n_slack = 0;
  for (auto rt : rows)
    if (rt != RowType::Equal)
      ++n_slack;

  Tableau tab;
  tab.m = m;
  tab.first_artificial = n + n_slack;
  tab.n_total = n + n_slack + m;
  tab.t = Eigen::MatrixXd::Zero(m + 1, tab.n_total + 1);
  tab.basis.assign(static_cast<std::size_t>(m), -1);

  // Identity column per row (slack for <=, artificial otherwise) for duals.
  std::vector<int> identity_col(static_cast<std::size_t>(m), -1);
  std::vector<int> slack_col(static_cast<std::size_t>(m), -1);
  int slack = n;
  for (int i = 0; i < m; ++i)
  {
    tab.t.block(i, 0, 1, n) = a.row(i);
    tab.rhs(i) = b(i);
    const int art = tab.first_artificial + i;
    tab.t(i, art) = 1.0;
    const auto rt = rows[static_cast<std::size_t>(i)];
    if (rt == RowType::LessEq)
    {
      tab.t(i, slack) = 1.0;
      slack_col[static_cast<std::size_t>(i)] = slack;
      tab.basis[static_cast<std::size_t>(i)] = slack;
      identity_col[static_cast<std::size_t>(i)] = slack;
      ++slack;
    }
    else
    {
      if (rt == RowType::GreaterEq)
      {
        slack_col[static_cast<std::size_t>(i)] = slack;
        tab.t(i, slack++) = -1.0;
      }
      tab.basis[static_cast<std::size_t>(i)] = art;
      identity_col[static_cast<std::size_t>(i)] = art;
    }
  }

  Result res;
  bool warm = false;
  if (warm_basis && static_cast<int>(warm_basis->size()) == m)
  {
    // Pivot the requested columns in; fall back to a cold start if the
    // basis is singular or no longer primal feasible.
    const Eigen::MatrixXd saved = tab.t;
    const std::vector<int> saved_basis = tab.basis;
    std::vector<bool> assigned(static_cast<std::size_t>(m), false);
    warm = true;
    for (int code : *warm_basis)
    {
      int col = -1;
      if (code >= 0 && code < n)
        col = code;
      else if (code < 0 && -code - 1 < m)
        col = slack_col[static_cast<std::size_t>(-code - 1)];
      if (col < 0)
      {
        warm = false;
        break;
      }
      int row = -1;
      double best = 1e-9;
      for (int r = 0; r < m; ++r)
        if (!assigned[static_cast<std::size_t>(r)] && std::abs(tab.t(r, col)) > best)
        {
          best = std::abs(tab.t(r, col));
          row = r;
        }
      if (row < 0)
      {
        warm = false;
        break;
      }
      tab.pivot(row, col);
      assigned[static_cast<std::size_t>(row)] = true;
    }
    if (warm)
      for (int r = 0; r < m; ++r)
      {
        if (tab.rhs(r) < -1e-9)
        {
          warm = false;
          break;
        }
        tab.rhs(r) = std::max(tab.rhs(r), 0.0);
      }
    if (!warm)
    {
      tab.t = saved;
      tab.basis = saved_basis;
    }
  }

  if (!warm)
  {
    // Phase 1: minimize the sum of artificials in use.
    for (int i = 0; i < m; ++i)
      if (tab.basis[static_cast<std::size_t>(i)] >= tab.first_artificial)
        tab.t.row(m) -= tab.t.row(i);
    for (int i = 0; i < m; ++i)
      tab.t(m, tab.first_artificial + i) = 0.0;
    for (int i = 0; i < m; ++i)
      if (tab.basis[static_cast<std::size_t>(i)] >= tab.first_artificial)
        tab.t(m, tab.first_artificial + i) = 0.0;

    Status st = tab.run(tab.first_artificial, max_pivots, res.pivots);
    if (st == Status::IterationLimit)
    {
      res.status = st;
      return res;
    }
    const double infeas = -tab.rhs(m);
    if (infeas > 1e-9 * std::max(1.0, b.lpNorm<Eigen::Infinity>()))
    {
      res.status = Status::Infeasible;
      return res;
    }
    // Drive remaining zero-level artificials out of the basis where possible.
    for (int r = 0; r < m; ++r)
    {
      if (tab.basis[static_cast<std::size_t>(r)] < tab.first_artificial)
        continue;
      for (int j = 0; j < tab.first_artificial; ++j)
        if (std::abs(tab.t(r, j)) > 1e-9)
        {
          tab.pivot(r, j);
          break;
        }
    }
  }

  // Phase 2: objective row for minimizing -c'x.
  tab.t.row(m).setZero();
  for (int j = 0; j < n; ++j)
    tab.t(m, j) = -problem.c(j);
  for (int r = 0; r < m; ++r)
  {
    const int bj = tab.basis[static_cast<std::size_t>(r)];
    const double cb = bj < n ? -problem.c(bj) : 0.0;
    if (cb != 0.0)
      tab.t.row(m) -= cb * tab.t.row(r);
  }
  Status st = tab.run(tab.first_artificial, max_pivots, res.pivots);
  if (st != Status::Optimal)
  {
    res.status = st;
    return res;
  }

  res.status = Status::Optimal;
  res.x = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < m; ++r)
  {
    const int bj = tab.basis[static_cast<std::size_t>(r)];
    if (bj < n)
      res.x(bj) = std::max(0.0, tab.rhs(r));
  }
  res.objective = problem.c.dot(res.x);
  // Objective row at an identity column holds -(c_B B^{-1})_i of the
  // minimization of -c'x, i.e. the maximization shadow price.
  res.duals.resize(m);
  for (int i = 0; i < m; ++i)
    res.duals(i) = flip[static_cast<std::size_t>(i)] * tab.t(m, identity_col[static_cast<std::size_t>(i)]);
  res.basis.resize(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r)
  {
    const int bj = tab.basis[static_cast<std::size_t>(r)];
    int code = std::numeric_limits<int>::min();
    if (bj < n)
      code = bj;
    else
      for (int i = 0; i < m; ++i)
        if (slack_col[static_cast<std::size_t>(i)] == bj)
          code = -(i + 1);
    res.basis[static_cast<std::size_t>(r)] = code;
  }
  return res;
}

} // namespace icl::lp
