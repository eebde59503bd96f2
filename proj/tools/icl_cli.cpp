#include "icl/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace
{

struct CommonArgs
{
  std::string scenario;
  std::string out = "out";
  unsigned long long seed = 1;
  bool trace = false;
  int threads = 1;
  int reps = 1;
  std::vector<std::string> sets;
};

void add_common(CLI::App *cmd, CommonArgs &a)
{
  cmd->add_option("--scenario", a.scenario, "Scenario JSON (default: built-in scenario)")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_flag("--trace", a.trace, "Write per-iteration traces");
  cmd->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--reps", a.reps, "Repetitions with seeds seed, seed+1, ...")->check(CLI::PositiveNumber);
  cmd->add_option("--set", a.sets, "Scenario override key=value (top-level keys, JSON values)");
}

void add_gibbs(CLI::App *cmd, icl::GibbsConfig &g)
{
  cmd->add_option("--delta-p", g.delta_p, "Positioning-power grid step in W (default Pmax/20)");
  cmd->add_option("--t0", g.t0, "Initial temperature");
  cmd->add_option("--alpha", g.alpha, "Annealing factor");
  cmd->add_option("--max-outer", g.max_outer, "Outer iteration cap");
}

void add_pso(CLI::App *cmd, icl::PsoConfig &p)
{
  cmd->add_option("--swarm", p.swarm_size, "PSO swarm size");
  cmd->add_option("--pso-iters", p.iterations, "PSO iterations");
}

std::pair<std::string, std::string> split_kv(const std::string &s)
{
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0)
    throw icl::Error("--set expects key=value, got " + s);
  return {s.substr(0, eq), s.substr(eq + 1)};
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Joint UAV placement and resource allocation under TDoA accuracy constraints"};
  app.require_subcommand(1);

  CommonArgs common;
  icl::ExperimentSpec spec;
  spec.gibbs.delta_p = 0.0;

  auto *solve = app.add_subcommand("solve", "Proposed method: Gibbs search over positioning powers");
  add_common(solve, common);
  add_gibbs(solve, spec.gibbs);

  std::string baseline;
  auto *base = app.add_subcommand("baseline", "Benchmark methods");
  base->add_option("method", baseline, "pso | epa | ucd")->required()->check(CLI::IsMember({"pso", "epa", "ucd"}));
  add_common(base, common);
  add_gibbs(base, spec.gibbs);
  add_pso(base, spec.pso);

  auto *grid = app.add_subcommand("crlb-grid", "CRLB maps for a UAV or ground fourth anchor");
  add_common(grid, common);
  grid->add_option("--cell", spec.grid.cell, "Target grid pitch in m");
  grid->add_option("--pitch", spec.grid.search_pitch, "Fourth-anchor search pitch in m");
  grid->add_option("--extent", spec.grid.half_extent, "Half side of the square area in m");

  auto *region = app.add_subcommand("region", "Feasible-region boundary polylines at a fixed altitude");
  add_common(region, common);
  region->add_option("--alt", spec.region_alt, "UAV altitude in m");
  region->add_option("--power", spec.region_powers, "BS positioning powers in W");

  std::string sweep_kind;
  std::vector<std::string> methods;
  auto *sweep = app.add_subcommand("sweep", "Parameter sweeps");
  sweep->add_option("kind", sweep_kind, "pmax | zeta | users")
      ->required()
      ->check(CLI::IsMember({"pmax", "zeta", "users"}));
  add_common(sweep, common);
  add_gibbs(sweep, spec.gibbs);
  add_pso(sweep, spec.pso);
  sweep->add_option("--pmax", spec.pmax_list, "Pmax values in W");
  sweep->add_option("--zeta", spec.zeta_list, "zeta values");
  sweep->add_option("--methods", methods, "Methods to compare: proposed pso epa ucd");

  CLI11_PARSE(app, argc, argv);

  try
  {
    spec.scenario_path = common.scenario;
    spec.output_dir = common.out;
    spec.seed = common.seed;
    spec.trace = common.trace;
    spec.threads = common.threads;
    spec.repetitions = common.reps;
    for (const auto &s : common.sets)
      spec.overrides.push_back(split_kv(s));

    if (*solve)
      spec.kind = icl::ExperimentKind::Solve;
    else if (*base)
    {
      spec.kind = icl::ExperimentKind::Baseline;
      spec.baseline = baseline;
    }
    else if (*grid)
      spec.kind = icl::ExperimentKind::CrlbGrid;
    else if (*region)
      spec.kind = icl::ExperimentKind::Region;
    else
    {
      spec.kind = icl::parse_kind("sweep_" + sweep_kind);
      if (!methods.empty())
        spec.methods = methods;
      else if (sweep_kind == "users")
        spec.methods = {"proposed", "pso"};
      else if (sweep_kind == "zeta")
        spec.methods = {"proposed"};
    }

    const auto records = icl::run_experiment(spec);
    bool infeasible = false;
    for (const auto &r : records)
    {
      if (spec.kind != icl::ExperimentKind::Solve && spec.kind != icl::ExperimentKind::Baseline)
        continue;
      const icl::Solution &s = r.solution;
      if (s.feasible)
        std::printf("%s seed %llu: sum rate %.6e bit/s at u = (%.2f, %.2f, %.2f) m\n", r.method.c_str(), r.seed,
                    s.objective, s.u.x, s.u.y, s.u.h);
      else
      {
        std::fprintf(stderr, "%s seed %llu: infeasible: %s\n", r.method.c_str(), r.seed, s.reason.c_str());
        infeasible = true;
      }
    }
    std::printf("wrote %s\n", spec.output_dir.string().c_str());
    return infeasible ? 2 : 0;
  }
  catch (const icl::InfeasibleError &e)
  {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return 2;
  }
  catch (const std::exception &e)
  {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
