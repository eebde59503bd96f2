#pragma once

#include "icl/bapo.hpp"
#include "icl/locgeom.hpp"
#include "icl/placement.hpp"
#include "icl/solution.hpp"

#include <array>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace icl
{

/// Outer search over the BS positioning powers on the grid {0, dP, ..., Pmax}.
/// Each grid point is scored by J(P) = block-coordinate ascent of the
/// allocation (BAPO) and the UAV position (placement); neighbors are drawn by
/// an annealed softmax over their scores.

struct GibbsConfig
{
  double delta_p = 0.05; // W
  double t0 = 0.95;
  double alpha = 0.95;
  int max_outer = 60;
  int stall_limit = 5;     // stop when the best score is unchanged this long
  double inner_tol = 1e-3; // bit/s
  int max_bcd_rounds = 30;
  unsigned long long seed = 1;
  int threads = 1;

  /// Grid steps from 0 to p_max; throws when delta_p does not divide p_max.
  int grid_max(double p_max) const;
  void validate(double p_max) const;
};

/// delta_p = Pmax/20 and the scenario seed.
GibbsConfig default_gibbs_config(const ScenarioConfig &cfg);

using GridPoint = std::array<int, 3>;

struct InnerSolution
{
  Position3 u;
  Allocation alloc;
  RateTable rates;
  std::vector<double> bcd_trace; // alternating BAPO and placement objectives
  int bapo_calls = 0;
  int placement_calls = 0;
};

struct Candidate
{
  GridPoint grid{};
  std::array<double, 3> pos_power_bs{};
  double value = -std::numeric_limits<double>::infinity();
  std::optional<InnerSolution> solution;
  std::string reason;
};

/// Inputs of J(P) that do not depend on P.
struct EvaluationContext
{
  const ScenarioConfig *cfg = nullptr;
  std::vector<double> thresholds;
  double delta_p = 0.05;
  double inner_tol = 1e-3;
  int max_bcd_rounds = 30;
  std::optional<Position3> fixed_u; // when set the UAV does not move
  BapoOptions bapo;
  PlacementOptions placement;
};

EvaluationContext make_context(const ScenarioConfig &cfg, const GibbsConfig &gibbs);

/// The current point and its in-range neighbors along each axis (at most 7).
std::vector<Candidate> candidate_set(const GridPoint &p_hat, int grid_max, double delta_p);

/// Scores a candidate; value is -inf when any stage is infeasible. The start
/// position is `warm` if it lies in every region, else find_feasible_u.
Candidate evaluate_candidate(Candidate cand, const EvaluationContext &ctx,
                             const std::optional<Position3> &warm = std::nullopt);

/// Raw softmax exp(J/T)/sum exp(J/T) with log-sum-exp; -inf maps to 0.
/// Throws when every value is -inf.
std::vector<double> transfer_probabilities(const std::vector<double> &values, double temperature);

/// Finite values shifted to zero mean and scaled to unit deviation; -inf kept.
std::vector<double> standardize(const std::vector<double> &values);

/// Draws an index by transfer_probabilities over the standardized values.
/// nullopt when every value is -inf.
std::optional<std::size_t> transfer_sample(const std::vector<Candidate> &cands, double temperature,
                                           std::mt19937_64 &rng);

/// Every coordinate one step up, clipped at the top of the grid.
GridPoint escalate(const GridPoint &p_hat, int grid_max);

struct GibbsTraceRow
{
  int iteration = 0;
  double temperature = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  std::array<double, 3> chosen{};
  bool escalated = false;
};

struct GibbsResult
{
  Solution solution;
  std::vector<GibbsTraceRow> trace;
};

/// Full outer loop. Throws InfeasibleError if no grid point visited is
/// feasible once escalation has reached Pmax.
GibbsResult run(const ScenarioConfig &cfg, const GibbsConfig &gibbs,
                const std::optional<Position3> &fixed_u = std::nullopt);

void write_trace_csv(std::ostream &out, const std::vector<GibbsTraceRow> &trace);

} // namespace icl
