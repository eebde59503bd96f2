#include "icl/baselines.hpp"
#include "icl/bapo.hpp"
#include "icl/gibbs.hpp"
#include "icl/harness.hpp"
#include "icl/locgeom.hpp"
#include "icl/placement.hpp"
#include "icl/scenario_io.hpp"

#include "random_instances.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace icl;

namespace
{

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double> &v)
{
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

/// Monotone up to one inversion no larger than tol * range.
bool nearly_monotone(const std::vector<double> &v, bool increasing, double tol)
{
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  int inversions = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
  {
    const double step = increasing ? v[i] - v[i - 1] : v[i - 1] - v[i];
    if (step < 0.0)
    {
      if (-step > tol * range)
        return false;
      ++inversions;
    }
  }
  return inversions <= 1;
}

ScenarioConfig mirrored(ScenarioConfig cfg)
{
  for (auto &b : cfg.bs)
    b.x = -b.x;
  for (auto &w : cfg.users)
    w.x = -w.x;
  return cfg;
}

Outcome fading_factors()
{
  const ChannelParams ch = reference_scenario().channel;
  const double g = fading_factor(ch.omega_g, ch.eps_out);
  const double a = fading_factor(ch.omega_a, ch.eps_out);
  return {g >= 0.10 && g <= 0.11 && a >= 0.31 && a <= 0.33, fmt("G2G %.4f, A2G %.4f", g, a)};
}

Outcome opt_d1_gap()
{
  // BS SNR of the scenario: mean over users and BSs at the reference power.
  const ScenarioConfig cfg = reference_scenario();
  const ChannelParams &ch = cfg.channel;
  double snr = 0.0;
  for (const auto &w : cfg.users)
    for (const auto &b : cfg.bs)
      snr += ch.psi / (toa_variance(b, w, 0.15, AnchorKind::BS, ch) - ch.sigma_nlos2);
  snr /= static_cast<double>(cfg.users.size() * cfg.bs.size());

  const std::vector<double> ratios{0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> gaps;
  for (double r : ratios)
    gaps.push_back(std::abs(opt_d_gap(snr, r, ch)));
  bool monotone = true;
  for (std::size_t i = 1; i < gaps.size(); ++i)
    monotone = monotone && gaps[i] < gaps[i - 1];
  bool pass = monotone && gaps[0] < 0.02;
  for (std::size_t i = 2; i < gaps.size(); ++i)
    pass = pass && gaps[i] < 0.005;
  return {pass, fmt("gap %.3g%% at ratio 0.1, %.3g%% at 0.5, %.3g%% at 5, monotone %s (BS SNR %.3g)",
                    100 * gaps[0], 100 * gaps[2], 100 * gaps.back(), monotone ? "yes" : "no", snr)};
}

Outcome region_oracle()
{
  long agree = 0, total = 0, skipped = 0;
  int cases[2] = {0, 0};
  for (const ScenarioConfig &cfg : {reference_scenario(), mirrored(reference_scenario())})
  {
    const std::vector<double> eps = derive_accuracy_thresholds(cfg);
    const std::array<double, 3> p{0.2, 0.15, 0.25};
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> xy(-800, 800), h(cfg.h_min, cfg.h_max);
    for (std::size_t k = 0; k < cfg.num_users(); ++k)
    {
      const FeasibleRegion r = region_for_user(k, p, eps[k], cfg);
      ++cases[r.case_sign > 0 ? 1 : 0];
      const auto v = bs_variances(cfg.users[k], p, cfg);
      const double d1 = v[0] * v[1] * v[2];
      int n = 0;
      while (n < 1000)
      {
        const Position3 u{xy(rng), xy(rng), h(rng)};
        const GeometryFrame f = geometry_frame(u, cfg.users[k], cfg.bs);
        if (f.jacobian.determinant() * r.case_sign <= 0.0)
        {
          ++skipped;
          continue;
        }
        const double m = opt_d1(f, d1);
        if (std::abs(m - eps[k]) <= 1e-6 * eps[k])
          continue;
        agree += cone_contains(r, u) == (m >= eps[k]);
        ++total;
        ++n;
      }
    }
  }
  return {agree == total && cases[0] > 0 && cases[1] > 0,
          fmt("%ld/%ld agree, cases -1:%d +1:%d, %ld draws outside the det(H) case skipped", agree, total, cases[0],
              cases[1], skipped)};
}

Outcome bapo_correctness()
{
  std::mt19937_64 rng(2024);
  double worst_gap = 0.0, worst_eq = 0.0, worst_cs = 0.0;
  int solved = 0;
  for (int i = 0; i < 50; ++i)
  {
    const int K = 2 + i % 6;
    ScenarioConfig cfg = testing::random_scenario(rng, K);
    BapoInstance inst = make_bapo_instance(testing::random_uav(rng), testing::random_pos_power(rng, 1.0), cfg);
    Allocation even = Allocation::zeros(static_cast<std::size_t>(K));
    for (int j = 0; j < kNumTx; ++j)
    {
      even.comm_power.row(j).setConstant(inst.comm_budget(j) / K);
      even.bandwidth.row(j).setConstant(1.0 / K);
    }
    inst.r_th = 0.8 * evaluate_rates(inst.gains, even, inst.b_comm).user_rates.mean();
    const BapoOutcome s = solve_bapo(inst);
    const BapoOutcome ref = solve_bapo_reference(inst);
    if (s.feasible != ref.feasible)
      return {false, fmt("instance %d: feasibility disagrees", i)};
    if (!s.feasible)
      continue;
    ++solved;
    const BapoSolution &x = s.solution;
    worst_gap = std::max(worst_gap, std::abs(x.objective - ref.solution.objective) / ref.solution.objective);
    for (int j = 0; j < kNumTx; ++j)
    {
      worst_eq = std::max(worst_eq, std::abs(x.alloc.comm_power.row(j).sum() + x.alloc.pos_power(j) - inst.p_max));
      worst_eq = std::max(worst_eq, std::abs(x.alloc.bandwidth.row(j).sum() - 1.0));
    }
    for (Eigen::Index k = 0; k < K; ++k)
      worst_cs = std::max(worst_cs, std::abs(x.nu_final(k) * (inst.r_th - x.rates.user_rates(k))) / inst.r_th);
  }
  return {solved >= 40 && worst_gap <= 1e-3 && worst_eq <= 1e-10 && worst_cs <= 1e-6,
          fmt("%d solved, max objective gap %.2e, equality residual %.2e, slackness %.2e", solved, worst_gap, worst_eq,
              worst_cs)};
}

Outcome sca_soundness()
{
  std::mt19937_64 rng(77);
  int instances = 0;
  bool monotone = true, inside = true;
  double worst_grad = 0.0;
  for (int i = 0; i < 200 && instances < 20; ++i)
  {
    ScenarioConfig cfg = testing::random_scenario(rng, 2 + i % 6);
    cfg.r_th = 1e6;
    std::vector<FeasibleRegion> regs;
    try
    {
      const auto eps = derive_accuracy_thresholds(cfg);
      for (std::size_t k = 0; k < cfg.num_users(); ++k)
        regs.push_back(region_for_user(k, {0.3, 0.3, 0.3}, eps[k], cfg));
    }
    catch (const InfeasibleError &)
    {
      continue;
    }
    const auto u0 = find_feasible_u(regs, cfg.h_min, cfg.h_max);
    if (!u0)
      continue;
    const BapoOutcome o = solve_bapo(*u0, TxVector(0.3, 0.3, 0.3, cfg.uav_pos_power), cfg);
    if (!o.feasible)
      continue;
    const Allocation &a = o.solution.alloc;
    std::vector<double> trace;
    const PlacementState s = solve_udo(*u0, a, regs, cfg, {}, &trace);
    for (std::size_t t = 1; t < trace.size(); ++t)
      monotone = monotone && trace[t] >= trace[t - 1];
    for (const auto &r : regs)
      inside = inside && cone_margin(r, s.u.vec()) >= 0.0;
    inside = inside && s.u.h >= cfg.h_min && s.u.h <= cfg.h_max;

    const Eigen::Vector3d g = rate_gradient(s.u, a, cfg);
    for (int d = 0; d < 3; ++d)
    {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e(d) = 1e-3;
      const double fd = (placement_objective(Position3::from(s.u.vec() + e), a, cfg) -
                         placement_objective(Position3::from(s.u.vec() - e), a, cfg)) /
                        2e-3;
      worst_grad = std::max(worst_grad, std::abs(fd - g(d)) / std::max(g.norm(), 1e-12));
    }
    ++instances;
  }
  return {instances == 20 && monotone && inside && worst_grad <= 1e-4,
          fmt("%d instances, monotone %s, cones satisfied %s, gradient error %.2e", instances,
              monotone ? "yes" : "no", inside ? "yes" : "no", worst_grad)};
}

Outcome end_to_end()
{
  const ScenarioConfig base = reference_scenario();
  std::string detail;
  bool pass = true;
  for (double p_max : {0.4, 0.7, 1.0})
  {
    ScenarioConfig cfg = base;
    cfg.p_max = p_max;
    std::vector<double> gs, pso, ucd;
    for (unsigned long long seed = 1; seed <= 5; ++seed)
    {
      GibbsConfig g = default_gibbs_config(cfg);
      g.seed = seed;
      gs.push_back(run(cfg, g).solution.objective);
      PsoConfig pc;
      pc.seed = seed;
      const Solution ps = pso_solve(cfg, pc).solution;
      pso.push_back(ps.feasible ? ps.objective : 0.0);
      if (p_max == 1.0)
      {
        const Solution us = ucd_solve(cfg, g);
        ucd.push_back(us.feasible ? us.objective : 0.0);
      }
    }
    const double vs_pso = (mean(gs) - mean(pso)) / mean(pso);
    pass = pass && std::abs(vs_pso) <= 0.03;
    detail += fmt("Pmax %.1f: vs PSO %+.2f%%; ", p_max, 100 * vs_pso);
    if (p_max == 1.0)
    {
      const Solution es = epa_solve(cfg);
      const double epa = es.feasible ? es.objective : 0.0;
      const double vs_epa = mean(gs) / epa - 1.0;
      const double vs_ucd = mean(gs) / mean(ucd) - 1.0;
      pass = pass && vs_epa >= 0.10 && vs_ucd >= 0.20;
      detail += fmt("vs EPA %+.1f%%, vs UCD %+.1f%%", 100 * vs_epa, 100 * vs_ucd);
    }
  }
  return {pass, detail};
}

Outcome zeta_trend()
{
  std::vector<double> rate, alt;
  for (double zeta : {0.1, 0.3, 0.5, 0.7, 0.9})
  {
    ScenarioConfig cfg = reference_scenario();
    cfg.zeta = zeta;
    std::vector<double> r, h;
    for (unsigned long long seed = 1; seed <= 3; ++seed)
    {
      GibbsConfig g = default_gibbs_config(cfg);
      g.seed = seed;
      const Solution s = run(cfg, g).solution;
      r.push_back(s.objective);
      h.push_back(s.u.h);
    }
    rate.push_back(mean(r));
    alt.push_back(mean(h));
  }
  const bool pass = nearly_monotone(rate, false, 0.01) && nearly_monotone(alt, true, 0.01);
  return {pass, fmt("sum rate %.4g -> %.4g bit/s, altitude %.0f -> %.0f m", rate.front(), rate.back(), alt.front(),
                    alt.back())};
}

Outcome crlb_maps()
{
  const ScenarioConfig cfg = reference_scenario();
  GridStudyConfig study;
  const GridMap uav = crlb_grid_study(cfg, study, FourthAnchor::Uav);
  const GridMap ground = crlb_grid_study(cfg, study, FourthAnchor::Ground);
  int violations = 0, used = 0;
  double uh_lo = 1e300, uh_hi = 0, gh_lo = 1e300, gh_hi = 0, uv_hi = 0, gv_hi = 0;
  for (std::size_t i = 0; i < uav.cells.size(); ++i)
  {
    const GridCell &a = uav.cells[i], &b = ground.cells[i];
    if (a.singular || b.singular)
      continue;
    ++used;
    violations += a.err_v > b.err_v;
    uh_lo = std::min(uh_lo, a.err_h);
    uh_hi = std::max(uh_hi, a.err_h);
    gh_lo = std::min(gh_lo, b.err_h);
    gh_hi = std::max(gh_hi, b.err_h);
    uv_hi = std::max(uv_hi, a.err_v);
    gv_hi = std::max(gv_hi, b.err_v);
  }
  const bool overlap = std::abs(uh_lo - gh_lo) <= 0.3 * gh_lo && std::abs(uh_hi - gh_hi) <= 0.3 * gh_hi;
  const bool pass = violations == 0 && overlap && gv_hi >= 2.0 * uv_hi;
  return {pass, fmt("%d cells, UAV vertical worse at %d; horizontal UAV [%.2f, %.2f] vs ground [%.2f, %.2f] m; "
                    "vertical upper ends UAV %.2f vs ground %.2f m",
                    used, violations, uh_lo, uh_hi, gh_lo, gh_hi, uv_hi, gv_hi)};
}

Outcome scalability()
{
  const ScenarioConfig cfg = reference_scenario();
  bool constant = true, linear = true;
  double gs_wall = 0.0, pso_wall = 0.0;
  std::string per_m;
  for (std::size_t m = 2; m <= cfg.num_users(); ++m)
  {
    const ScenarioConfig sub = subsample_users(cfg, m, 1000 + m);
    GibbsConfig g = default_gibbs_config(sub);
    const Solution gs = run(sub, g).solution;
    for (int n : gs.diagnostics.candidates_per_iteration)
      constant = constant && n <= 7;
    PsoConfig pc;
    pc.stop_at = gs.objective * (1.0 - 1e-3);
    const PsoResult pr = pso_solve(sub, pc);
    for (const auto &p : pr.progress)
      linear = linear && p.evaluations == static_cast<long>(pc.swarm_size) * (p.iteration + 1);
    const double match = pr.progress.back().wall_s;
    per_m += fmt(" m=%zu %.2f/%.2f s", m, gs.diagnostics.wall_time_s, match);
    if (m == cfg.num_users())
    {
      gs_wall = gs.diagnostics.wall_time_s;
      pso_wall = match;
    }
  }
  return {constant && linear && gs_wall <= 0.5 * pso_wall,
          fmt("candidates per iteration <= 7: %s, PSO evaluations linear: %s, GS/PSO wall:", constant ? "yes" : "no",
              linear ? "yes" : "no") +
              per_m};
}

std::string slurp(const std::filesystem::path &p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism()
{
  const auto root = std::filesystem::temp_directory_path() / "icl_acceptance_determinism";
  std::filesystem::remove_all(root);
  ExperimentSpec spec;
  spec.gibbs.delta_p = 0.0;
  spec.trace = true;
  spec.pso.swarm_size = 10;
  spec.pso.iterations = 30;
  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run)
  {
    const auto dir = root / std::to_string(run);
    spec.kind = ExperimentKind::Solve;
    spec.output_dir = dir;
    run_experiment(spec);
    spec.kind = ExperimentKind::Baseline;
    for (const char *b : {"pso", "epa", "ucd"})
    {
      spec.baseline = b;
      run_experiment(spec);
    }
  }
  int compared = 0, equal = 0;
  for (const auto &e : std::filesystem::directory_iterator(root / "0"))
  {
    if (e.path().filename() == "timing.json")
      continue;
    ++compared;
    equal += slurp(e.path()) == slurp(root / "1" / e.path().filename());
  }
  return {compared > 0 && equal == compared, fmt("%d/%d result files identical", equal, compared)};
}

} // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"fading factors", fading_factors},
      {"opt-D1 approximation gap", opt_d1_gap},
      {"region oracle equivalence", region_oracle},
      {"allocation solver correctness", bapo_correctness},
      {"placement SCA soundness", sca_soundness},
      {"end-to-end comparison", end_to_end},
      {"zeta trend", zeta_trend},
      {"CRLB grid maps", crlb_maps},
      {"scalability", scalability},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i)
  {
    const Stopwatch clock;
    Outcome o;
    try
    {
      o = criteria[i].second();
    }
    catch (const std::exception &e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s %s: %s (%.2f s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), clock.wall_s());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
