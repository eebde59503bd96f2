#pragma once

#include <Eigen/Dense>

#include <vector>

namespace icl::lp
{

enum class RowType
{
  LessEq,
  Equal,
  GreaterEq
};

enum class Status
{
  Optimal,
  Infeasible,
  Unbounded,
  IterationLimit
};

/// maximize c'x subject to A x (<=,=,>=) b, x >= 0.
struct Problem
{
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<RowType> rows;
};

struct Result
{
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  /// Sensitivity of the optimum to b_i (shadow prices): >= 0 for <= rows,
  /// <= 0 for >= rows, free for equalities.
  Eigen::VectorXd duals;
  int pivots = 0;
  /// Final basis: structural column j as j, slack of row i as -(i+1).
  std::vector<int> basis;
};

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
/// Deterministic: identical inputs give identical pivots. A basis from an
/// earlier solve of a problem with the same rows (columns may have been
/// appended) skips phase one when it is still primal feasible.
Result solve(const Problem &problem, int max_pivots = 20000, const std::vector<int> *warm_basis = nullptr);

} // namespace icl::lp
