#include "icl/solution.hpp"

#include "icl/locgeom.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

namespace icl
{

bool SolutionCheck::ok(double p_max, double r_th) const
{
  return equality_residual <= 1e-9 * std::max(1.0, p_max) && rate_shortfall <= 1e-6 * std::max(1.0, r_th) &&
         rate_mismatch <= 1e-9 && altitude_ok && accuracy_ok;
}

SolutionCheck check_solution(const Solution &sol, const ScenarioConfig &cfg)
{
  SolutionCheck c;
  c.equality_residual = sol.alloc.equality_residual(cfg.p_max);
  const RateTable r = evaluate_rates(sol.u, sol.alloc, cfg);
  for (Eigen::Index k = 0; k < r.user_rates.size(); ++k)
    c.rate_shortfall = std::max(c.rate_shortfall, cfg.r_th - r.user_rates(k));
  c.rate_mismatch = std::abs(r.sum_rate - sol.rates.sum_rate) / std::max(1.0, r.sum_rate);
  c.altitude_ok = sol.u.h >= cfg.h_min - 1e-9 && sol.u.h <= cfg.h_max + 1e-9;

  c.accuracy_ok = sol.accuracy_thresholds.size() == cfg.num_users();
  const std::array<double, 3> pb{sol.alloc.pos_power(0), sol.alloc.pos_power(1), sol.alloc.pos_power(2)};
  for (std::size_t k = 0; c.accuracy_ok && k < cfg.num_users(); ++k)
  {
    if (!(pb[0] > 0.0 && pb[1] > 0.0 && pb[2] > 0.0))
    {
      c.accuracy_ok = false;
      break;
    }
    const auto v = bs_variances(cfg.users[k], pb, cfg);
    const double d1 = v[0] * v[1] * v[2];
    const double metric = opt_d1(geometry_frame(sol.u, cfg.users[k], cfg.bs), d1);
    c.accuracy_ok = metric >= sol.accuracy_thresholds[k] * (1.0 - 1e-9);
  }
  return c;
}

namespace
{

double wall_now()
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double cpu_now()
{
  return static_cast<double>(std::clock()) / CLOCKS_PER_SEC;
}

} // namespace

Stopwatch::Stopwatch() : wall0_(wall_now()), cpu0_(cpu_now()) {}

double Stopwatch::wall_s() const
{
  return wall_now() - wall0_;
}

double Stopwatch::cpu_s() const
{
  return cpu_now() - cpu0_;
}

} // namespace icl
