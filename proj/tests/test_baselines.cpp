#include "icl/baselines.hpp"
#include "icl/scenario_io.hpp"

#include <doctest.h>

#include <cmath>

using namespace icl;

TEST_CASE("UCD hovers above the user centroid")
{
  ScenarioConfig cfg = reference_scenario();
  cfg.users = {{-100, 50, 0}, {100, -50, 0}};
  const Position3 u = ucd_position(cfg);
  CHECK(u.x == doctest::Approx(0.0));
  CHECK(u.y == doctest::Approx(0.0));
  CHECK(u.h == 500.0);
  CHECK(ucd_position(cfg, 300.0).h == 300.0);
}

TEST_CASE("EPA splits half of every budget equally")
{
  ScenarioConfig cfg = reference_scenario();
  cfg.users.resize(2);
  cfg.accuracy_overrides.reset();
  const Solution s = epa_solve(cfg);
  REQUIRE(s.feasible);
  for (int j = 0; j < kNumTx; ++j)
  {
    CHECK(s.alloc.pos_power(j) == doctest::Approx(cfg.p_max / 2));
    for (int k = 0; k < 2; ++k)
      CHECK(s.alloc.comm_power(j, k) == doctest::Approx(cfg.p_max / 4));
  }
  CHECK(check_solution(s, cfg).ok(cfg.p_max, cfg.r_th));
}

TEST_CASE("proposed method dominates the fixed-structure baselines")
{
  const ScenarioConfig cfg = reference_scenario();
  const GibbsConfig g = default_gibbs_config(cfg);
  const Solution gs = run(cfg, g).solution;
  const Solution epa = epa_solve(cfg);
  const Solution ucd = ucd_solve(cfg, g);
  REQUIRE(gs.feasible);
  REQUIRE(epa.feasible);
  REQUIRE(ucd.feasible);
  CHECK(epa.objective <= gs.objective);
  CHECK(ucd.objective <= gs.objective);
  CHECK(ucd.u == ucd_position(cfg));
  CHECK(check_solution(ucd, cfg).ok(cfg.p_max, cfg.r_th));
  CHECK(check_solution(epa, cfg).ok(cfg.p_max, cfg.r_th));

  // A swarm seeded with the proposed optimum cannot end below it.
  PsoConfig pso;
  pso.swarm_size = 8;
  pso.iterations = 5;
  const Particle seed{gs.u.x, gs.u.y, gs.u.h, gs.alloc.pos_power(0), gs.alloc.pos_power(1), gs.alloc.pos_power(2)};
  const PsoResult pr = pso_solve(cfg, pso, {seed});
  REQUIRE(pr.solution.feasible);
  CHECK(pr.solution.objective >= gs.objective * (1.0 - 1e-9));
}

TEST_CASE("PSO bookkeeping and determinism")
{
  const ScenarioConfig cfg = reference_scenario();
  PsoConfig pso;
  pso.swarm_size = 10;
  pso.iterations = 15;
  pso.seed = 4;
  const PsoResult a = pso_solve(cfg, pso);
  const PsoResult b = pso_solve(cfg, pso);
  CHECK(a.solution.objective == b.solution.objective);
  CHECK(a.solution.u == b.solution.u);
  CHECK(a.solution.diagnostics.fitness_evaluations == 10 * 15);
  REQUIRE(a.progress.size() == 15);
  for (std::size_t i = 1; i < a.progress.size(); ++i)
  {
    CHECK(a.progress[i].best >= a.progress[i - 1].best);
    CHECK(a.progress[i].evaluations == a.progress[i - 1].evaluations + 10);
  }
  if (a.solution.feasible)
    CHECK(check_solution(a.solution, cfg).ok(cfg.p_max, cfg.r_th));

  pso.stop_at = -1e300;
  const PsoResult c = pso_solve(cfg, pso);
  CHECK(c.progress.size() == 1);

  pso.swarm_size = 0;
  CHECK_THROWS_AS(pso_solve(cfg, pso), Error);
}

TEST_CASE("PSO fitness grades infeasibility")
{
  const ScenarioConfig cfg = reference_scenario();
  const auto eps = derive_accuracy_thresholds(cfg);
  const Solution gs = run(cfg, default_gibbs_config(cfg)).solution;
  Solution out;
  const double inside = pso_fitness(
      {gs.u.x, gs.u.y, gs.u.h, gs.alloc.pos_power(0), gs.alloc.pos_power(1), gs.alloc.pos_power(2)}, cfg, eps, &out);
  CHECK(inside > 0.0);
  CHECK(out.feasible);
  CHECK(out.objective == inside);
  CHECK(inside == doctest::Approx(gs.objective).epsilon(1e-9));
  const double far = pso_fitness({400, 400, 60, 0.25, 0.25, 0.2}, cfg, eps);
  CHECK(far < -1e9);
}

TEST_CASE("CRLB grid maps")
{
  const ScenarioConfig cfg = reference_scenario();
  GridStudyConfig study;
  study.cell = 250;
  study.search_pitch = 250;
  const GridMap uav = crlb_grid_study(cfg, study, FourthAnchor::Uav);
  const GridMap ground = crlb_grid_study(cfg, study, FourthAnchor::Ground, 2);
  REQUIRE(uav.cells.size() == 25);
  REQUIRE(ground.cells.size() == 25);
  for (std::size_t i = 0; i < uav.cells.size(); ++i)
  {
    const GridCell &c = uav.cells[i];
    CHECK(ground.cells[i].x == c.x);
    CHECK(ground.cells[i].y == c.y);
    CHECK(std::abs(c.x) <= 500.0);
    CHECK(std::abs(c.anchor_x) <= 500.0);
    if (!c.singular)
    {
      CHECK(c.err_h > 0.0);
      CHECK(c.err_v > 0.0);
    }
  }
  study.cell = -1;
  CHECK_THROWS_AS(crlb_grid_study(cfg, study, FourthAnchor::Uav), Error);
}
