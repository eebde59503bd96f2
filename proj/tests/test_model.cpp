#include "icl/model.hpp"
#include "icl/scenario_io.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace icl;

namespace
{

const ChannelParams &reference_channel()
{
  static const ScenarioConfig cfg = reference_scenario();
  return cfg.channel;
}

} // namespace

TEST_CASE("noncentrality closed form")
{
  CHECK(noncentrality(1.0) == 0.0);
  CHECK(noncentrality(0.2) == doctest::Approx(8.0));
  CHECK(noncentrality(0.5) == doctest::Approx(2.0));
  CHECK(noncentrality(0.3) > noncentrality(0.4));
  CHECK_THROWS_AS(noncentrality(0.0), Error);
}

TEST_CASE("noncentral chi2 quantile")
{
  CHECK(inv_noncentral_chi2_cdf(0.1, 2, 0.0) == doctest::Approx(-2.0 * std::log(0.9)).epsilon(1e-9));
  CHECK(inv_noncentral_chi2_cdf(0.5, 2, 0.0) == doctest::Approx(-2.0 * std::log(0.5)).epsilon(1e-9));
  // scipy.stats.ncx2.ppf(0.1, 2, 8); a 1e7-sample Monte Carlo gives 3.15688.
  CHECK(inv_noncentral_chi2_cdf(0.1, 2, 8.0) == doctest::Approx(3.156689322337913).epsilon(1e-8));
  for (double p : {0.01, 0.1, 0.5, 0.9, 0.99})
    for (double lam : {0.0, 0.5, 8.0, 30.0})
      CHECK(noncentral_chi2_cdf(inv_noncentral_chi2_cdf(p, 2, lam), 2, lam) == doctest::Approx(p).epsilon(1e-9));
  CHECK_THROWS_AS(inv_noncentral_chi2_cdf(0.0, 2, 1.0), Error);
  CHECK_THROWS_AS(inv_noncentral_chi2_cdf(1.0, 2, 1.0), Error);
}

TEST_CASE("fading factors")
{
  CHECK(fading_factor(1.0, 0.1) == doctest::Approx(0.10536051565782636).epsilon(1e-9));
  CHECK(fading_factor(0.2, 0.1) == doctest::Approx(0.31566893223379133).epsilon(1e-9));
  CHECK(fading_factor(0.0, 0.1) == 1.0);
  // Central case: ratio of quantiles is ln(1-eps)/ln(1-eps').
  CHECK(fading_factor(1.0, 0.1) / fading_factor(1.0, 0.3) ==
        doctest::Approx(std::log(0.9) / std::log(0.7)).epsilon(1e-9));
}

TEST_CASE("link rate values and limits")
{
  const ChannelParams &ch = reference_channel();
  CHECK(link_rate(0.0, 1.0, 100.0, LinkKind::A2G, ch) == 0.0);
  CHECK(link_rate(0.5, 0.0, 100.0, LinkKind::A2G, ch) == 0.0);
  CHECK(link_rate(1.0, 1.0, 100.0, LinkKind::A2G, ch) == doctest::Approx(14318350.86960704).epsilon(1e-9));
  CHECK_THROWS_AS(link_rate(1.0, 1.0, 0.0, LinkKind::G2G, ch), Error);
}

TEST_CASE("link rate monotone and jointly concave")
{
  const ChannelParams &ch = reference_channel();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> s(0.01, 1.0), p(0.01, 1.0), d(20.0, 800.0), l(0.05, 0.95);
  for (int i = 0; i < 500; ++i)
  {
    const LinkKind kind = i % 2 ? LinkKind::A2G : LinkKind::G2G;
    const double s0 = s(rng), p0 = p(rng), d0 = d(rng);
    CHECK(link_rate(s0, p0 * 1.1, d0, kind, ch) >= link_rate(s0, p0, d0, kind, ch));
    CHECK(link_rate(s0, p0, d0 * 1.1, kind, ch) <= link_rate(s0, p0, d0, kind, ch));
    const double s1 = s(rng), p1 = p(rng), lam = l(rng);
    const double mix = link_rate(lam * s0 + (1 - lam) * s1, lam * p0 + (1 - lam) * p1, d0, kind, ch);
    const double avg = lam * link_rate(s0, p0, d0, kind, ch) + (1 - lam) * link_rate(s1, p1, d0, kind, ch);
    CHECK(mix >= avg * (1.0 - 1e-9));
  }
}

TEST_CASE("evaluate_rates sums link rates")
{
  const ScenarioConfig cfg = reference_scenario();
  const auto K = static_cast<Eigen::Index>(cfg.num_users());
  Allocation a = Allocation::zeros(cfg.num_users());
  const RateTable zero = evaluate_rates({0, 0, 300}, a, cfg);
  CHECK(zero.sum_rate == 0.0);

  a.pos_power = TxVector::Constant(0.5);
  a.comm_power = TxUserMatrix::Constant(kNumTx, K, 0.5 / K);
  a.bandwidth = TxUserMatrix::Constant(kNumTx, K, 1.0 / K);
  const Position3 u{-150, 20, 250};
  const RateTable r = evaluate_rates(u, a, cfg);
  double total = 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
  {
    double user = 0.0;
    for (int j = 0; j < kNumTx; ++j)
    {
      const Position3 tx = transmitter_position(j, u, cfg);
      const double lr = link_rate(a.bandwidth(j, k), a.comm_power(j, k), distance(tx, cfg.users[k]),
                                  j == kUavRow ? LinkKind::A2G : LinkKind::G2G, cfg.channel);
      CHECK(r.link_rates(j, k) == lr);
      user += lr;
    }
    CHECK(r.user_rates(k) == doctest::Approx(user).epsilon(1e-15));
    total += user;
  }
  CHECK(r.sum_rate == doctest::Approx(total).epsilon(1e-15));
  // Cap: every link with the full band and the full power budget.
  double cap = 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
    for (int j = 0; j < kNumTx; ++j)
    {
      const Position3 tx = transmitter_position(j, u, cfg);
      cap += link_rate(1.0, cfg.p_max, distance(tx, cfg.users[k]), j == kUavRow ? LinkKind::A2G : LinkKind::G2G,
                       cfg.channel);
    }
  CHECK(r.sum_rate > 0.0);
  CHECK(r.sum_rate <= cap);
}

TEST_CASE("scenario validation")
{
  ScenarioConfig cfg = reference_scenario();
  CHECK_NOTHROW(cfg.validate());
  cfg.users.resize(1);
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = reference_scenario();
  cfg.bs[2] = {0, 0, 10};
  cfg.bs[1] = {400, 350, 10};
  cfg.bs[0] = {-400, -350, 10};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = reference_scenario();
  cfg.uav_pos_power = cfg.p_max;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
