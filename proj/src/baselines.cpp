#include "icl/baselines.hpp"

#include "icl/bapo.hpp"
#include "icl/locgeom.hpp"
#include "icl/placement.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace icl
{

namespace
{

constexpr double kPenalty = 1e9;

double uniform01(std::mt19937_64 &rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class F>
void parallel_for(std::size_t n, int threads, F &&f)
{
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++)
      f(i);
  };
  const int t = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (t == 1)
  {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (int i = 0; i < t; ++i)
    pool.emplace_back(worker);
}

struct Bounds
{
  Particle lo;
  Particle hi;
};

Bounds particle_bounds(const ScenarioConfig &cfg)
{
  double x0 = cfg.users[0].x, x1 = x0, y0 = cfg.users[0].y, y1 = y0;
  auto grow = [&](const Position3 &p) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  };
  for (const auto &w : cfg.users)
    grow(w);
  for (const auto &b : cfg.bs)
    grow(b);
  const double pmin = 1e-3 * cfg.p_max;
  return {{x0, y0, cfg.h_min, pmin, pmin, pmin}, {x1, y1, cfg.h_max, cfg.p_max, cfg.p_max, cfg.p_max}};
}

Solution finish(Solution s, const Stopwatch &clock)
{
  s.diagnostics.wall_time_s = clock.wall_s();
  s.diagnostics.cpu_time_s = clock.cpu_s();
  return s;
}

} // namespace

void PsoConfig::validate() const
{
  if (swarm_size < 1 || iterations < 1)
    throw Error("pso: swarm_size and iterations must be positive");
  if (!(inertia > 0.0 && cognitive > 0.0 && social > 0.0))
    throw Error("pso: coefficients must be positive");
}

double pso_fitness(const Particle &x, const ScenarioConfig &cfg, const std::vector<double> &thresholds, Solution *out)
{
  const std::array<double, 3> pb{x[3], x[4], x[5]};
  const Position3 u{x[0], x[1], x[2]};
  double violation = 0.0;
  for (std::size_t k = 0; k < cfg.num_users(); ++k)
  {
    try
    {
      const FeasibleRegion r = region_for_user(k, pb, thresholds[k], cfg);
      violation += std::max(0.0, -cone_margin(r, u.vec()));
    }
    catch (const InfeasibleError &)
    {
      const AccuracyBounds b = accuracy_bounds(k, pb, cfg);
      violation += 2.0 + thresholds[k] / b.ub - 1.0;
    }
  }
  if (violation > 0.0)
    return -kPenalty * (1.0 + violation);

  const TxVector pp(pb[0], pb[1], pb[2], cfg.uav_pos_power);
  const BapoOutcome o = solve_bapo(u, pp, cfg);
  if (!o.feasible)
    return -kPenalty;
  if (out)
  {
    out->feasible = true;
    out->u = u;
    out->alloc = o.solution.alloc;
    out->rates = o.solution.rates;
    out->objective = o.solution.objective;
  }
  return o.solution.objective;
}

PsoResult pso_solve(const ScenarioConfig &cfg, const PsoConfig &pso, const std::vector<Particle> &seeds)
{
  const Stopwatch clock;
  pso.validate();
  const std::vector<double> thresholds = derive_accuracy_thresholds(cfg);
  const Bounds bd = particle_bounds(cfg);
  const auto n = static_cast<std::size_t>(pso.swarm_size);
  std::mt19937_64 rng(pso.seed);

  std::vector<Particle> pos(n), vel(n), best_pos(n);
  std::vector<double> fit(n), best_fit(n);
  Particle vmax;
  for (int d = 0; d < 6; ++d)
    vmax[d] = 0.2 * (bd.hi[d] - bd.lo[d]);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 6; ++d)
    {
      pos[i][d] = bd.lo[d] + uniform01(rng) * (bd.hi[d] - bd.lo[d]);
      vel[i][d] = (2.0 * uniform01(rng) - 1.0) * vmax[d];
    }
  for (std::size_t i = 0; i < std::min(n, seeds.size()); ++i)
    for (int d = 0; d < 6; ++d)
      pos[i][d] = std::clamp(seeds[i][d], bd.lo[d], bd.hi[d]);

  PsoResult result;
  long evaluations = 0;
  auto evaluate_all = [&] {
    parallel_for(n, pso.threads, [&](std::size_t i) { fit[i] = pso_fitness(pos[i], cfg, thresholds); });
    evaluations += static_cast<long>(n);
  };

  evaluate_all();
  best_pos = pos;
  best_fit = fit;
  std::size_t g = static_cast<std::size_t>(std::max_element(best_fit.begin(), best_fit.end()) - best_fit.begin());
  int it = 0;
  for (;;)
  {
    result.progress.push_back({it, evaluations, best_fit[g], clock.wall_s()});
    if (it + 1 >= pso.iterations || (pso.stop_at && best_fit[g] >= *pso.stop_at))
      break;
    ++it;
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 6; ++d)
      {
        const double r1 = uniform01(rng), r2 = uniform01(rng);
        double v = pso.inertia * vel[i][d] + pso.cognitive * r1 * (best_pos[i][d] - pos[i][d]) +
                   pso.social * r2 * (best_pos[g][d] - pos[i][d]);
        v = std::clamp(v, -vmax[d], vmax[d]);
        double x = pos[i][d] + v;
        if (x < bd.lo[d] || x > bd.hi[d])
        {
          x = std::clamp(x, bd.lo[d], bd.hi[d]);
          v = 0.0;
        }
        pos[i][d] = x;
        vel[i][d] = v;
      }
    evaluate_all();
    for (std::size_t i = 0; i < n; ++i)
      if (fit[i] > best_fit[i])
      {
        best_fit[i] = fit[i];
        best_pos[i] = pos[i];
      }
    g = static_cast<std::size_t>(std::max_element(best_fit.begin(), best_fit.end()) - best_fit.begin());
  }

  Solution &sol = result.solution;
  sol.method = "pso";
  sol.accuracy_thresholds = thresholds;
  sol.diagnostics.outer_iterations = it + 1;
  sol.diagnostics.fitness_evaluations = evaluations;
  sol.diagnostics.inner_solver_calls = evaluations;
  if (best_fit[g] > 0.0)
    pso_fitness(best_pos[g], cfg, thresholds, &sol);
  else
    sol.reason = "no particle met every constraint";
  sol = finish(std::move(sol), clock);
  return result;
}

Solution epa_solve(const ScenarioConfig &cfg, const PlacementOptions &placement)
{
  const Stopwatch clock;
  Solution sol;
  sol.method = "epa";
  sol.accuracy_thresholds = derive_accuracy_thresholds(cfg);
  const auto K = static_cast<Eigen::Index>(cfg.num_users());
  const double half = 0.5 * cfg.p_max;
  const std::array<double, 3> pb{half, half, half};
  const TxVector pp = TxVector::Constant(half);
  const TxUserMatrix power = TxUserMatrix::Constant(kNumTx, K, half / static_cast<double>(K));

  std::vector<FeasibleRegion> regions;
  try
  {
    for (std::size_t k = 0; k < cfg.num_users(); ++k)
      regions.push_back(region_for_user(k, pb, sol.accuracy_thresholds[k], cfg));
  }
  catch (const InfeasibleError &e)
  {
    sol.reason = e.what();
    return finish(std::move(sol), clock);
  }
  const auto start = find_feasible_u(regions, cfg.h_min, cfg.h_max);
  if (!start)
  {
    sol.reason = "accuracy regions do not intersect";
    return finish(std::move(sol), clock);
  }

  Position3 u = *start;
  for (int round = 0; round < 30; ++round)
  {
    const BapoOutcome o = solve_bandwidth_only(make_bapo_instance(u, pp, cfg), power);
    ++sol.diagnostics.inner_solver_calls;
    if (!o.feasible)
    {
      if (round == 0)
        sol.reason = "rate threshold unattainable: " + o.reason;
      break;
    }
    const double gain = o.solution.objective - sol.objective;
    if (gain > 0.0)
    {
      sol.feasible = true;
      sol.u = u;
      sol.alloc = o.solution.alloc;
      sol.rates = o.solution.rates;
      sol.objective = o.solution.objective;
    }
    sol.diagnostics.outer_iterations = round + 1;
    if (gain < 1e-3)
      break;
    const PlacementState st = solve_udo(u, o.solution.alloc, regions, cfg, placement);
    ++sol.diagnostics.inner_solver_calls;
    if (st.u == u)
      break;
    u = st.u;
  }
  return finish(std::move(sol), clock);
}

Position3 ucd_position(const ScenarioConfig &cfg, double altitude)
{
  Position3 c{0.0, 0.0, altitude};
  for (const auto &w : cfg.users)
  {
    c.x += w.x;
    c.y += w.y;
  }
  c.x /= static_cast<double>(cfg.num_users());
  c.y /= static_cast<double>(cfg.num_users());
  return c;
}

Solution ucd_solve(const ScenarioConfig &cfg, const GibbsConfig &gibbs)
{
  const Stopwatch clock;
  const Position3 u = ucd_position(cfg);
  try
  {
    Solution s = run(cfg, gibbs, u).solution;
    s.method = "ucd";
    return s;
  }
  catch (const InfeasibleError &e)
  {
    Solution s;
    s.method = "ucd";
    s.u = u;
    s.reason = e.what();
    s.accuracy_thresholds = derive_accuracy_thresholds(cfg);
    return finish(std::move(s), clock);
  }
}

void GridStudyConfig::validate() const
{
  if (!(cell > 0.0 && search_pitch > 0.0 && half_extent > 0.0))
    throw Error("grid study: pitches and extent must be positive");
  if (!(anchor_pos_power > 0.0))
    throw Error("grid study: anchor power must be positive");
  for (double p : {cell, search_pitch})
  {
    const double n = 2.0 * half_extent / p;
    if (std::abs(n - std::round(n)) > 1e-9 * n)
      throw Error("grid study: pitches must divide the area extent");
  }
}

GridMap crlb_grid_study(const ScenarioConfig &cfg, const GridStudyConfig &study, FourthAnchor scheme, int threads)
{
  study.validate();
  const ChannelParams &ch = cfg.channel;
  const bool uav = scheme == FourthAnchor::Uav;
  const double alt = uav ? study.uav_alt : study.ground_alt;
  const AnchorKind kind = uav ? AnchorKind::UAV : AnchorKind::BS;
  const int nt = static_cast<int>(std::lround(2.0 * study.half_extent / study.cell));
  const int ns = static_cast<int>(std::lround(2.0 * study.half_extent / study.search_pitch));

  GridMap map;
  map.scheme = scheme;
  map.cells.resize(static_cast<std::size_t>((nt + 1) * (nt + 1)));
  parallel_for(map.cells.size(), threads, [&](std::size_t idx) {
    const int ix = static_cast<int>(idx) / (nt + 1), iy = static_cast<int>(idx) % (nt + 1);
    GridCell &c = map.cells[idx];
    c.x = -study.half_extent + ix * study.cell;
    c.y = -study.half_extent + iy * study.cell;
    const Position3 target{c.x, c.y, study.target_alt};
    ToAVariances v;
    for (int j = 0; j < 3; ++j)
      v.sigma2_bs[static_cast<std::size_t>(j)] =
          toa_variance(cfg.bs[static_cast<std::size_t>(j)], target, study.anchor_pos_power, AnchorKind::BS, ch);
    double best = std::numeric_limits<double>::infinity();
    c.singular = true;
    for (int ax = 0; ax <= ns; ++ax)
      for (int ay = 0; ay <= ns; ++ay)
      {
        const Position3 a{-study.half_extent + ax * study.search_pitch, -study.half_extent + ay * study.search_pitch,
                          alt};
        try
        {
          ToAVariances va = v;
          va.sigma2_uav = toa_variance(a, target, study.anchor_pos_power, kind, ch);
          const CrlbErrors e = crlb(geometry_frame(a, target, cfg.bs), tdoa_covariance(va));
          if (e.err_3d() < best)
          {
            best = e.err_3d();
            c.err_h = e.err_h;
            c.err_v = e.err_v;
            c.anchor_x = a.x;
            c.anchor_y = a.y;
            c.singular = false;
          }
        }
        catch (const Error &)
        {
        }
      }
  });
  return map;
}

} // namespace icl
