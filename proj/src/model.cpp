#include "icl/model.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>

namespace icl
{

namespace
{

void require(bool cond, const std::string &what)
{
  if (!cond)
    throw Error(what);
}

bool finite3(const Position3 &p)
{
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.h);
}

struct FadingCacheEntry
{
  double omega = -1.0;
  double eps = -1.0;
  double value = 0.0;
};

} // namespace

void ChannelParams::validate() const
{
  require(beta > 0, "channel.beta must be > 0");
  require(iota_g >= 1 && iota_a >= 1, "channel pathloss exponents must be >= 1");
  require(omega_a >= 0 && omega_a <= omega_g && omega_g <= 1, "channel requires 0 <= omega_a <= omega_g <= 1");
  require(eps_out > 0 && eps_out < 1, "channel.eps_out must lie in (0,1)");
  require(n0 > 0 && b_comm > 0 && b_pos > 0 && psi > 0, "channel n0, b_comm, b_pos, psi must be > 0");
  require(sigma_nlos2 >= 0, "channel.sigma_nlos2 must be >= 0");
}

void ScenarioConfig::validate() const
{
  channel.validate();
  require(users.size() >= 2, "scenario needs at least 2 users");
  for (const auto &b : bs)
    require(finite3(b) && b.h >= 0, "base station coordinates must be finite with h >= 0");
  for (const auto &w : users)
    require(finite3(w) && w.h >= 0, "user coordinates must be finite with h >= 0");
  require(p_max > uav_pos_power && uav_pos_power >= 0, "requires p_max > uav_pos_power >= 0");
  require(r_th >= 0, "r_th must be >= 0");
  require(zeta >= 0 && zeta <= 1, "zeta must lie in [0,1]");
  require(h_min > 0 && h_max > h_min, "altitude bounds must satisfy 0 < h_min < h_max");
  const double cross = (bs[1].x - bs[0].x) * (bs[2].y - bs[0].y) - (bs[1].y - bs[0].y) * (bs[2].x - bs[0].x);
  require(std::abs(cross) > 1e-6, "base stations are collinear in the horizontal plane");
  if (accuracy_overrides)
  {
    require(accuracy_overrides->size() == users.size(), "accuracy_overrides must have one entry per user");
    for (double e : *accuracy_overrides)
      require(e > 0 && std::isfinite(e), "accuracy overrides must be positive");
  }
}

Allocation Allocation::zeros(std::size_t users)
{
  Allocation a;
  const auto k = static_cast<Eigen::Index>(users);
  a.comm_power = TxUserMatrix::Zero(kNumTx, k);
  a.bandwidth = TxUserMatrix::Zero(kNumTx, k);
  a.pos_power = TxVector::Zero();
  return a;
}

double Allocation::equality_residual(double p_max) const
{
  double r = 0.0;
  for (int j = 0; j < kNumTx; ++j)
  {
    r = std::max(r, std::abs(comm_power.row(j).sum() + pos_power(j) - p_max));
    r = std::max(r, std::abs(bandwidth.row(j).sum() - 1.0));
  }
  return r;
}

double noncentrality(double omega)
{
  if (omega == 0.0)
    throw Error("pure LoS: noncentrality undefined, use deterministic gain path");
  if (!(omega > 0.0 && omega <= 1.0))
    throw Error("omega must lie in (0,1]");
  return 2.0 * (1.0 - omega) / omega;
}

double noncentral_chi2_cdf(double x, int dof, double lambda)
{
  if (dof <= 0)
    throw Error("degrees of freedom must be positive");
  if (lambda < 0)
    throw Error("noncentrality must be >= 0");
  if (x <= 0)
    return 0.0;
  return boost::math::cdf(boost::math::non_central_chi_squared(dof, lambda), x);
}

double inv_noncentral_chi2_cdf(double p, int dof, double lambda)
{
  if (!(p > 0.0 && p < 1.0))
    throw Error("quantile probability must lie in (0,1)");
  if (dof <= 0)
    throw Error("degrees of freedom must be positive");
  if (lambda < 0)
    throw Error("noncentrality must be >= 0");
  return boost::math::quantile(boost::math::non_central_chi_squared(dof, lambda), p);
}

double fading_factor(double omega, double eps_out)
{
  if (omega == 0.0)
    return 1.0;
  if (!(eps_out > 0.0 && eps_out < 1.0))
    throw Error("outage tolerance must lie in (0,1)");

  thread_local std::array<FadingCacheEntry, 4> cache{};
  thread_local std::size_t next = 0;
  for (const auto &e : cache)
    if (e.omega == omega && e.eps == eps_out)
      return e.value;

  const double v = 0.5 * omega * inv_noncentral_chi2_cdf(eps_out, 2, noncentrality(omega));
  cache[next] = {omega, eps_out, v};
  next = (next + 1) % cache.size();
  return v;
}

double channel_gain(double dist, LinkKind kind, const ChannelParams &ch)
{
  if (!(dist > 0.0))
    throw Error("co-located transmitter and user");
  const bool air = kind == LinkKind::A2G;
  const double factor = fading_factor(air ? ch.omega_a : ch.omega_g, ch.eps_out);
  const double iota = air ? ch.iota_a : ch.iota_g;
  return factor * ch.beta / (ch.b_comm * ch.n0 * std::pow(dist, iota));
}

double link_rate(double s, double p, double dist, LinkKind kind, const ChannelParams &ch)
{
  if (!(dist > 0.0))
    throw Error("co-located transmitter and user");
  if (s < 0 || p < 0)
    throw Error("link_rate requires s >= 0 and p >= 0");
  if (s == 0.0 || p == 0.0)
    return 0.0;
  const double h = channel_gain(dist, kind, ch);
  return s * ch.b_comm * std::log2(1.0 + h * p / s);
}

Position3 transmitter_position(int row, const Position3 &u, const ScenarioConfig &cfg)
{
  return row == kUavRow ? u : cfg.bs[static_cast<std::size_t>(row)];
}

TxUserMatrix channel_gains(const Position3 &u, const ScenarioConfig &cfg)
{
  const auto k = static_cast<Eigen::Index>(cfg.num_users());
  TxUserMatrix h(kNumTx, k);
  for (int j = 0; j < kNumTx; ++j)
  {
    const auto kind = j == kUavRow ? LinkKind::A2G : LinkKind::G2G;
    const Position3 tx = transmitter_position(j, u, cfg);
    for (Eigen::Index i = 0; i < k; ++i)
      h(j, i) = channel_gain(distance(tx, cfg.users[static_cast<std::size_t>(i)]), kind, cfg.channel);
  }
  return h;
}

RateTable evaluate_rates(const TxUserMatrix &gains, const Allocation &alloc, double b_comm)
{
  RateTable t;
  const auto k = gains.cols();
  t.link_rates = TxUserMatrix::Zero(kNumTx, k);
  for (int j = 0; j < kNumTx; ++j)
    for (Eigen::Index i = 0; i < k; ++i)
    {
      const double s = alloc.bandwidth(j, i);
      const double p = alloc.comm_power(j, i);
      if (s > 0 && p > 0)
        t.link_rates(j, i) = s * b_comm * std::log2(1.0 + gains(j, i) * p / s);
    }
  t.user_rates = t.link_rates.colwise().sum().transpose();
  t.sum_rate = t.user_rates.sum();
  return t;
}

RateTable evaluate_rates(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg)
{
  if (alloc.comm_power.cols() != static_cast<Eigen::Index>(cfg.num_users()) ||
      alloc.bandwidth.cols() != alloc.comm_power.cols())
    throw Error("allocation shape does not match the user count");
  if ((alloc.comm_power.array() < 0).any() || (alloc.bandwidth.array() < 0).any())
    throw Error("allocation entries must be nonnegative");
  return evaluate_rates(channel_gains(u, cfg), alloc, cfg.channel.b_comm);
}

} // namespace icl
