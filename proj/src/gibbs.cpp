#include "icl/gibbs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <ostream>
#include <thread>

namespace icl
{

namespace
{

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double uniform01(std::mt19937_64 &rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::array<double, 3> grid_power(const GridPoint &g, double delta_p)
{
  return {g[0] * delta_p, g[1] * delta_p, g[2] * delta_p};
}

Candidate make_candidate(const GridPoint &g, double delta_p)
{
  Candidate c;
  c.grid = g;
  c.pos_power_bs = grid_power(g, delta_p);
  return c;
}

Candidate infeasible(Candidate c, std::string why)
{
  c.value = kNegInf;
  c.solution.reset();
  c.reason = std::move(why);
  return c;
}

} // namespace

int GibbsConfig::grid_max(double p_max) const
{
  if (!(delta_p > 0.0) || delta_p > p_max * (1.0 + 1e-12))
    throw Error("gibbs: delta_p must lie in (0, p_max]");
  const double n = p_max / delta_p;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n))
    throw Error("gibbs: delta_p must divide p_max");
  return static_cast<int>(r);
}

void GibbsConfig::validate(double p_max) const
{
  grid_max(p_max);
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error("gibbs: alpha must lie in (0,1)");
  if (!(t0 > 0.0))
    throw Error("gibbs: t0 must be positive");
  if (max_outer < 1 || stall_limit < 1 || max_bcd_rounds < 1)
    throw Error("gibbs: iteration limits must be positive");
  if (!(inner_tol >= 0.0))
    throw Error("gibbs: inner_tol must be nonnegative");
}

GibbsConfig default_gibbs_config(const ScenarioConfig &cfg)
{
  GibbsConfig g;
  g.delta_p = cfg.p_max / 20.0;
  g.seed = cfg.seed;
  return g;
}

EvaluationContext make_context(const ScenarioConfig &cfg, const GibbsConfig &gibbs)
{
  EvaluationContext ctx;
  ctx.cfg = &cfg;
  ctx.thresholds = derive_accuracy_thresholds(cfg);
  ctx.delta_p = gibbs.delta_p;
  ctx.inner_tol = gibbs.inner_tol;
  ctx.max_bcd_rounds = gibbs.max_bcd_rounds;
  return ctx;
}

std::vector<Candidate> candidate_set(const GridPoint &p_hat, int grid_max, double delta_p)
{
  std::vector<Candidate> out{make_candidate(p_hat, delta_p)};
  for (int d = 0; d < 3; ++d)
    for (int step : {1, -1})
    {
      GridPoint g = p_hat;
      g[d] += step;
      if (g[d] >= 0 && g[d] <= grid_max)
        out.push_back(make_candidate(g, delta_p));
    }
  return out;
}

Candidate evaluate_candidate(Candidate cand, const EvaluationContext &ctx, const std::optional<Position3> &warm)
{
  const ScenarioConfig &cfg = *ctx.cfg;
  const auto &pb = cand.pos_power_bs;
  if (!(pb[0] > 0.0 && pb[1] > 0.0 && pb[2] > 0.0))
    return infeasible(std::move(cand), "a BS sends no positioning signal");

  std::vector<FeasibleRegion> regions;
  try
  {
    for (std::size_t k = 0; k < cfg.num_users(); ++k)
      regions.push_back(region_for_user(k, pb, ctx.thresholds.at(k), cfg));
  }
  catch (const InfeasibleError &e)
  {
    return infeasible(std::move(cand), e.what());
  }

  Position3 u;
  if (ctx.fixed_u)
  {
    u = *ctx.fixed_u;
    if (!placement_feasible(regions, u, cfg.h_min, cfg.h_max))
      return infeasible(std::move(cand), "fixed UAV position violates the accuracy regions");
  }
  else if (warm && placement_feasible(regions, *warm, cfg.h_min, cfg.h_max))
    u = *warm;
  else
  {
    const auto start = find_feasible_u(regions, cfg.h_min, cfg.h_max);
    if (!start)
      return infeasible(std::move(cand), "accuracy regions do not intersect");
    u = *start;
  }

  const TxVector pp(pb[0], pb[1], pb[2], cfg.uav_pos_power);
  InnerSolution best;
  double best_value = kNegInf;
  for (int round = 0; round < ctx.max_bcd_rounds; ++round)
  {
    const BapoOutcome out = solve_bapo(u, pp, cfg, ctx.bapo);
    ++best.bapo_calls;
    if (!out.feasible)
    {
      if (round == 0)
        return infeasible(std::move(cand), "rate threshold unattainable: " + out.reason);
      break;
    }
    best.bcd_trace.push_back(out.solution.objective);
    const double gain = out.solution.objective - best_value;
    if (gain > 0.0)
    {
      best_value = out.solution.objective;
      best.u = u;
      best.alloc = out.solution.alloc;
      best.rates = out.solution.rates;
    }
    if (ctx.fixed_u || gain < ctx.inner_tol)
      break;
    const PlacementState st = solve_udo(u, out.solution.alloc, regions, cfg, ctx.placement);
    ++best.placement_calls;
    best.bcd_trace.push_back(st.objective);
    if (st.u == u)
      break;
    u = st.u;
  }
  cand.value = best_value;
  cand.solution = std::move(best);
  cand.reason.clear();
  return cand;
}

std::vector<double> transfer_probabilities(const std::vector<double> &values, double temperature)
{
  if (!(temperature > 0.0))
    throw Error("transfer_probabilities: temperature must be positive");
  double top = kNegInf;
  for (double v : values)
    top = std::max(top, v);
  if (top == kNegInf)
    throw InfeasibleError("transfer_probabilities: every candidate is infeasible");
  std::vector<double> p(values.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] != kNegInf)
    {
      p[i] = std::exp((values[i] - top) / temperature);
      sum += p[i];
    }
  for (double &x : p)
    x /= sum;
  return p;
}

std::vector<double> standardize(const std::vector<double> &values)
{
  double mean = 0.0;
  int n = 0;
  for (double v : values)
    if (v != kNegInf)
    {
      mean += v;
      ++n;
    }
  if (n == 0)
    return values;
  mean /= n;
  double var = 0.0;
  for (double v : values)
    if (v != kNegInf)
      var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> z(values.size(), kNegInf);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] != kNegInf)
      z[i] = sd > 0.0 ? (values[i] - mean) / sd : 0.0;
  return z;
}

std::optional<std::size_t> transfer_sample(const std::vector<Candidate> &cands, double temperature,
                                           std::mt19937_64 &rng)
{
  std::vector<double> values;
  for (const auto &c : cands)
    values.push_back(c.value);
  if (std::all_of(values.begin(), values.end(), [](double v) { return v == kNegInf; }))
    return std::nullopt;
  const std::vector<double> p = transfer_probabilities(standardize(values), temperature);
  const double r = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
  {
    if (p[i] <= 0.0)
      continue;
    last = i;
    acc += p[i];
    if (r < acc)
      return i;
  }
  return last;
}

GridPoint escalate(const GridPoint &p_hat, int grid_max)
{
  GridPoint g = p_hat;
  for (int &x : g)
    x = std::min(x + 1, grid_max);
  return g;
}

GibbsResult run(const ScenarioConfig &cfg, const GibbsConfig &gibbs, const std::optional<Position3> &fixed_u)
{
  const Stopwatch clock;
  gibbs.validate(cfg.p_max);
  const int n = gibbs.grid_max(cfg.p_max);
  EvaluationContext ctx = make_context(cfg, gibbs);
  ctx.fixed_u = fixed_u;

  GibbsResult result;
  SolverDiagnostics &diag = result.solution.diagnostics;
  std::mt19937_64 rng(gibbs.seed);
  std::map<GridPoint, Candidate> memo;
  GridPoint p{std::min(2, n), std::min(2, n), std::min(2, n)};
  double temperature = gibbs.t0;
  std::optional<Candidate> best;
  int stall = 0;

  for (int it = 0; it < gibbs.max_outer; ++it)
  {
    std::vector<Candidate> cands = candidate_set(p, n, gibbs.delta_p);
    diag.candidates_per_iteration.push_back(static_cast<int>(cands.size()));
    diag.candidate_evaluations += static_cast<long>(cands.size());

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (!memo.count(cands[i].grid))
        todo.push_back(i);
    std::vector<Candidate> fresh(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < todo.size(); i = next++)
        fresh[i] = evaluate_candidate(cands[todo[i]], ctx);
    };
    const int nthreads = std::clamp(gibbs.threads, 1, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
    if (nthreads == 1)
      worker();
    else
    {
      std::vector<std::jthread> pool;
      for (int t = 0; t < nthreads; ++t)
        pool.emplace_back(worker);
    }
    for (auto &c : fresh)
    {
      if (c.solution)
        diag.inner_solver_calls += c.solution->bapo_calls + c.solution->placement_calls;
      else
        ++diag.inner_solver_calls;
      memo.emplace(c.grid, std::move(c));
    }
    for (auto &c : cands)
      c = memo.at(c.grid);

    bool improved = false;
    for (const auto &c : cands)
      if (c.value != kNegInf && (!best || c.value > best->value))
      {
        best = c;
        improved = true;
      }

    GibbsTraceRow row;
    row.iteration = it;
    row.temperature = temperature;
    const auto pick = transfer_sample(cands, temperature, rng);
    GridPoint chosen = p;
    if (pick)
      chosen = cands[*pick].grid;
    else
    {
      chosen = escalate(p, n);
      row.escalated = true;
    }
    row.best_value = best ? best->value : kNegInf;
    row.chosen = grid_power(chosen, gibbs.delta_p);
    result.trace.push_back(row);
    diag.outer_iterations = it + 1;
    temperature *= gibbs.alpha;

    if (!pick && chosen == p)
      break; // escalation saturated
    if (best)
    {
      stall = improved ? 0 : stall + 1;
      if (stall >= gibbs.stall_limit)
        break;
    }
    p = chosen;
  }

  Solution &sol = result.solution;
  sol.method = fixed_u ? "ucd" : "proposed";
  sol.accuracy_thresholds = ctx.thresholds;
  if (!best)
  {
    diag.wall_time_s = clock.wall_s();
    diag.cpu_time_s = clock.cpu_s();
    throw InfeasibleError("no feasible positioning power found up to Pmax");
  }
  sol.feasible = true;
  sol.u = best->solution->u;
  sol.alloc = best->solution->alloc;
  sol.rates = best->solution->rates;
  sol.objective = best->value;
  diag.wall_time_s = clock.wall_s();
  diag.cpu_time_s = clock.cpu_s();
  return result;
}

void write_trace_csv(std::ostream &out, const std::vector<GibbsTraceRow> &trace)
{
  out << "iteration,temperature,best_j_bps,p1_w,p2_w,p3_w,escalated\n";
  const auto old = out.precision(17);
  for (const auto &r : trace)
    out << r.iteration << ',' << r.temperature << ',' << r.best_value << ',' << r.chosen[0] << ',' << r.chosen[1]
        << ',' << r.chosen[2] << ',' << (r.escalated ? 1 : 0) << '\n';
  out.precision(old);
}

} // namespace icl
