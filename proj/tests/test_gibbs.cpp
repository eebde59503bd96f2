#include "icl/gibbs.hpp"
#include "icl/scenario_io.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

using namespace icl;

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

TEST_CASE("candidate sets clip at the grid edges")
{
  CHECK(candidate_set({2, 2, 2}, 20, 0.05).size() == 7);
  CHECK(candidate_set({0, 2, 2}, 20, 0.05).size() == 6);
  CHECK(candidate_set({0, 20, 0}, 20, 0.05).size() == 4);
  const auto c = candidate_set({3, 4, 5}, 20, 0.05);
  CHECK(c.front().grid == GridPoint{3, 4, 5});
  CHECK(c.front().pos_power_bs[2] == doctest::Approx(0.25));
  for (const auto &x : c)
  {
    int diff = 0;
    for (int d = 0; d < 3; ++d)
      diff += std::abs(x.grid[d] - c.front().grid[d]);
    CHECK(diff <= 1);
  }
}

TEST_CASE("escalation")
{
  CHECK(escalate({1, 19, 20}, 20) == GridPoint{2, 20, 20});
  CHECK(escalate({20, 20, 20}, 20) == GridPoint{20, 20, 20});
}

TEST_CASE("grid step must divide Pmax")
{
  GibbsConfig g;
  g.delta_p = 0.05;
  CHECK(g.grid_max(1.0) == 20);
  g.delta_p = 0.3;
  CHECK_THROWS_AS(g.grid_max(1.0), Error);
  g.delta_p = 0.0;
  CHECK_THROWS_AS(g.grid_max(1.0), Error);
}

TEST_CASE("transfer probabilities")
{
  const auto u = transfer_probabilities(std::vector<double>(7, 3.0), 0.5);
  for (double p : u)
    CHECK(p == doctest::Approx(1.0 / 7.0));

  const auto p = transfer_probabilities({1e6, 2e6}, 0.95e6);
  CHECK(p[0] == doctest::Approx(0.25872008570676064).epsilon(1e-12));

  const auto q = transfer_probabilities({1e6, -kInf, 2e6}, 0.95e6);
  CHECK(q[1] == 0.0);
  CHECK(q[0] == doctest::Approx(p[0]).epsilon(1e-12));

  CHECK_THROWS_AS(transfer_probabilities({-kInf, -kInf}, 1.0), InfeasibleError);
  CHECK_THROWS_AS(transfer_probabilities({1.0}, 0.0), Error);
}

TEST_CASE("softmax properties on random inputs")
{
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 5.0);
  std::uniform_real_distribution<double> t(0.05, 3.0);
  for (int i = 0; i < 200; ++i)
  {
    std::vector<double> v(7);
    for (double &x : v)
      x = n(rng);
    const double T = t(rng);
    const auto p = transfer_probabilities(v, T);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> shifted = v;
    for (double &x : shifted)
      x += 1234.5;
    const auto ps = transfer_probabilities(shifted, T);
    for (std::size_t k = 0; k < v.size(); ++k)
    {
      CHECK(p[k] >= 0.0);
      CHECK(ps[k] == doctest::Approx(p[k]).epsilon(1e-9));
      for (std::size_t j = 0; j < v.size(); ++j)
        if (v[k] > v[j])
          CHECK(p[k] >= p[j]);
    }
    // Colder temperatures concentrate on the maximum.
    const std::size_t top = std::max_element(v.begin(), v.end()) - v.begin();
    CHECK(transfer_probabilities(v, T / 2)[top] >= p[top] - 1e-15);
  }
}

TEST_CASE("standardize")
{
  const auto z = standardize({1.0, 2.0, 3.0, -kInf});
  CHECK(z[0] == doctest::Approx(-std::sqrt(1.5)));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[3] == -kInf);
  const auto c = standardize({4.0, 4.0});
  CHECK(c[0] == 0.0);
}

TEST_CASE("sampling frequencies follow the softmax")
{
  std::vector<Candidate> cands(3);
  cands[0].value = 10.0;
  cands[1].value = 11.0;
  cands[2].value = -kInf;
  const auto p = transfer_probabilities(standardize({10.0, 11.0, -kInf}), 0.7);
  std::mt19937_64 rng(12);
  int hits[3] = {0, 0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    ++hits[*transfer_sample(cands, 0.7, rng)];
  CHECK(hits[2] == 0);
  CHECK(hits[0] / double(n) == doctest::Approx(p[0]).epsilon(0.05));

  for (auto &c : cands)
    c.value = -kInf;
  CHECK_FALSE(transfer_sample(cands, 0.7, rng));
}

TEST_CASE("candidate evaluation")
{
  const ScenarioConfig cfg = reference_scenario();
  GibbsConfig g = default_gibbs_config(cfg);
  const EvaluationContext ctx = make_context(cfg, g);

  const auto zero = evaluate_candidate(candidate_set({0, 3, 3}, 20, g.delta_p).front(), ctx);
  CHECK(zero.value == -kInf);
  CHECK_FALSE(zero.solution);

  const auto good = evaluate_candidate(candidate_set({5, 5, 4}, 20, g.delta_p).front(), ctx);
  REQUIRE(good.solution);
  CHECK(std::isfinite(good.value));
  const auto &tr = good.solution->bcd_trace;
  REQUIRE(!tr.empty());
  for (std::size_t i = 1; i < tr.size(); ++i)
    CHECK(tr[i] >= tr[i - 1] - 1e-6 * tr[i - 1]);
  CHECK(good.value == doctest::Approx(*std::max_element(tr.begin(), tr.end())).epsilon(1e-12));

  // J is a function of the grid point alone.
  const auto again = evaluate_candidate(candidate_set({5, 5, 4}, 20, g.delta_p).front(), ctx);
  CHECK(again.value == good.value);
  CHECK(again.solution->u == good.solution->u);
}

TEST_CASE("outer search")
{
  const ScenarioConfig cfg = reference_scenario();
  GibbsConfig g = default_gibbs_config(cfg);
  const GibbsResult a = run(cfg, g);
  const GibbsResult b = run(cfg, g);
  REQUIRE(a.solution.feasible);
  CHECK(a.solution.objective == b.solution.objective);
  CHECK(a.solution.u == b.solution.u);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].chosen == b.trace[i].chosen);

  for (std::size_t i = 0; i < a.trace.size(); ++i)
  {
    CHECK(a.trace[i].temperature == doctest::Approx(g.t0 * std::pow(g.alpha, double(i))).epsilon(1e-12));
    if (i > 0)
      CHECK(a.trace[i].best_value >= a.trace[i - 1].best_value);
  }
  CHECK(a.trace.back().best_value == a.solution.objective);
  CHECK(a.solution.diagnostics.outer_iterations == int(a.trace.size()));
  CHECK(a.solution.diagnostics.outer_iterations <= g.max_outer);
  for (int n : a.solution.diagnostics.candidates_per_iteration)
    CHECK(n <= 7);

  const SolutionCheck chk = check_solution(a.solution, cfg);
  CHECK(chk.ok(cfg.p_max, cfg.r_th));

  std::ostringstream csv;
  write_trace_csv(csv, a.trace);
  CHECK(csv.str().rfind("iteration,temperature,best_j_bps,p1_w,p2_w,p3_w,escalated\n", 0) == 0);
}

TEST_CASE("unattainable rate threshold is infeasible")
{
  ScenarioConfig cfg = reference_scenario();
  cfg.r_th = 5e7;
  GibbsConfig g = default_gibbs_config(cfg);
  g.max_outer = 30;
  CHECK_THROWS_AS(run(cfg, g), InfeasibleError);
}
