#pragma once

#include "icl/baselines.hpp"
#include "icl/gibbs.hpp"
#include "icl/solution.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace icl
{

enum class ExperimentKind
{
  Solve,
  Baseline,
  SweepPmax,
  SweepZeta,
  SweepUsers,
  CrlbGrid,
  Region
};

struct ExperimentSpec
{
  ExperimentKind kind = ExperimentKind::Solve;
  std::filesystem::path scenario_path; // empty: built-in scenario
  std::vector<std::pair<std::string, std::string>> overrides; // top-level scenario keys, JSON values
  std::filesystem::path output_dir = "out";
  int repetitions = 1;
  unsigned long long seed = 1;
  bool trace = false;
  int threads = 1;

  std::string baseline = "epa"; // pso | epa | ucd
  std::vector<std::string> methods{"proposed", "epa", "ucd"}; // compared in sweeps
  std::vector<double> pmax_list{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> zeta_list{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double match_tol = 1e-3; // relative gap at which PSO "matches" the proposed method

  GibbsConfig gibbs; // delta_p <= 0 selects Pmax/20
  PsoConfig pso;
  GridStudyConfig grid;
  double region_alt = 200.0;
  std::vector<double> region_powers{0.15};

  void validate() const;
};

struct RunRecord
{
  std::string kind;
  std::string method;
  std::string point; // sweep coordinate, e.g. "p_max_w=0.4"
  double param = 0.0;
  int repetition = 0;
  unsigned long long seed = 0;
  Solution solution;
  double wall_time_s = 0.0;
  double cpu_time_s = 0.0;
  long inner_solver_calls = 0;
  long candidate_evaluations = 0;
  double match_time_s = -1.0; // PSO time to reach the proposed objective, sweep_users only
  std::vector<PsoProgress> pso_progress;
  std::string build_id;
};

std::string build_id();

ExperimentKind parse_kind(const std::string &name);
std::string kind_name(ExperimentKind kind);

/// Applies key=value overrides (values parsed as JSON) through the schema.
ScenarioConfig apply_overrides(const ScenarioConfig &cfg, const std::vector<std::pair<std::string, std::string>> &kv);

ScenarioConfig load_spec_scenario(const ExperimentSpec &spec);

GibbsConfig gibbs_for(const ScenarioConfig &cfg, const ExperimentSpec &spec, unsigned long long seed);

/// Runs one named method on a scenario: proposed, pso, epa or ucd.
RunRecord run_method(const std::string &method, const ScenarioConfig &cfg, const ExperimentSpec &spec,
                     unsigned long long seed, std::vector<GibbsTraceRow> *trace = nullptr);

/// m users drawn without replacement, in original order.
ScenarioConfig subsample_users(const ScenarioConfig &cfg, std::size_t m, unsigned long long seed);

nlohmann::json solution_to_json(const Solution &sol);
Solution solution_from_json(const nlohmann::json &doc);

/// Executes the spec and writes its outputs to spec.output_dir. Result files
/// carry no timing; timing.json holds wall and CPU times.
std::vector<RunRecord> run_experiment(const ExperimentSpec &spec);

} // namespace icl
