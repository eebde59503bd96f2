#pragma once

#include "icl/model.hpp"

#include <limits>
#include <string>
#include <vector>

namespace icl
{

struct SolverDiagnostics
{
  int outer_iterations = 0;
  long inner_solver_calls = 0;    // BAPO and placement solves actually run
  long candidate_evaluations = 0; // candidate scores requested, cache hits included
  long fitness_evaluations = 0;   // PSO particle evaluations
  std::vector<int> candidates_per_iteration;
  double wall_time_s = 0.0;
  double cpu_time_s = 0.0;
};

struct Solution
{
  std::string method;
  bool feasible = false;
  std::string reason;
  Position3 u;
  Allocation alloc;
  RateTable rates;
  double objective = -std::numeric_limits<double>::infinity();
  std::vector<double> accuracy_thresholds;
  SolverDiagnostics diagnostics;
};

struct SolutionCheck
{
  double equality_residual = 0.0; // power and bandwidth rows
  double rate_shortfall = 0.0;    // max_k (R_th - R_k)+
  double rate_mismatch = 0.0;     // |stored rates - recomputed| relative
  bool altitude_ok = false;
  bool accuracy_ok = false; // opt-D1 >= eps_k for every user
  bool ok(double p_max, double r_th) const;
};

/// Re-derives every constraint of the joint problem from scratch.
SolutionCheck check_solution(const Solution &sol, const ScenarioConfig &cfg);

/// Process CPU time and wall time since construction.
class Stopwatch
{
public:
  Stopwatch();
  double wall_s() const;
  double cpu_s() const;

private:
  double wall0_;
  double cpu0_;
};

} // namespace icl
