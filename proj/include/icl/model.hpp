#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace icl
{

/// Base error for the library. Infeasibility is reported separately via
/// InfeasibleError so that callers can map it to exit code 2.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InfeasibleError : public Error
{
public:
  using Error::Error;
};

struct Position3
{
  double x = 0.0;
  double y = 0.0;
  double h = 0.0;

  Eigen::Vector3d vec() const { return {x, y, h}; }
  static Position3 from(const Eigen::Vector3d &v) { return {v.x(), v.y(), v.z()}; }

  bool operator==(const Position3 &) const = default;
};

inline double distance(const Position3 &a, const Position3 &b)
{
  return (a.vec() - b.vec()).norm();
}

enum class LinkKind
{
  G2G,
  A2G
};

/// Channel and positioning-signal constants, all linear SI.
struct ChannelParams
{
  double beta = 0.0;        // power gain at 1 m
  double iota_g = 2.0;      // G2G pathloss exponent
  double iota_a = 2.0;      // A2G pathloss exponent
  double omega_g = 1.0;     // G2G multipath power ratio
  double omega_a = 0.0;     // A2G multipath power ratio
  double eps_out = 0.1;     // outage tolerance
  double n0 = 0.0;          // noise density, W/Hz
  double b_comm = 0.0;      // communication bandwidth, Hz
  double b_pos = 0.0;       // positioning bandwidth, Hz
  double psi = 0.0;         // positioning-signal constant, s^2
  double sigma_nlos2 = 0.0; // NLoS ToA variance, s^2

  void validate() const;
};

struct ScenarioConfig
{
  std::array<Position3, 3> bs{};
  std::vector<Position3> users;
  ChannelParams channel;
  double p_max = 1.0;
  double r_th = 0.0;
  double uav_pos_power = 0.0;
  double zeta = 0.5;
  std::optional<std::vector<double>> accuracy_overrides;
  double h_min = 50.0;
  double h_max = 600.0;
  unsigned long long seed = 1;

  std::size_t num_users() const { return users.size(); }
  void validate() const;
};

/// Transmitter index convention: rows 0..2 are the ground BSs, row 3 the UAV.
inline constexpr int kNumTx = 4;
inline constexpr int kUavRow = 3;

using TxUserMatrix = Eigen::Matrix<double, kNumTx, Eigen::Dynamic>;
using TxVector = Eigen::Matrix<double, kNumTx, 1>;

struct Allocation
{
  TxUserMatrix comm_power; // W
  TxVector pos_power;      // W
  TxUserMatrix bandwidth;  // fractions

  static Allocation zeros(std::size_t users);
  /// Max violation of the per-row power and bandwidth equalities.
  double equality_residual(double p_max) const;
};

struct RateTable
{
  TxUserMatrix link_rates; // bit/s
  Eigen::VectorXd user_rates;
  double sum_rate = 0.0;
};

// ---------------------------------------------------------------------------
// Fading / outage machinery

double noncentrality(double omega);

/// CDF of the noncentral chi-squared distribution with `dof` degrees of
/// freedom (even dof only) via the Poisson-mixture series.
double noncentral_chi2_cdf(double x, int dof, double lambda);

/// Quantile of the noncentral chi-squared distribution. Bracketing plus
/// bisection on the series CDF; relative tolerance 1e-10 on x.
double inv_noncentral_chi2_cdf(double p, int dof, double lambda);

/// Effective outage channel factor multiplying beta*P. Includes the omega/2
/// scaling of the normalized gain; returns 1 for a deterministic LoS channel.
double fading_factor(double omega, double eps_out);

/// Linear-scale channel-to-noise ratio per watt over the full band:
/// factor*beta / (B*N0*d^iota).
double channel_gain(double dist, LinkKind kind, const ChannelParams &ch);

double link_rate(double s, double p, double dist, LinkKind kind, const ChannelParams &ch);

/// Gains h_jk for the four transmitters toward every user (UAV row uses u).
TxUserMatrix channel_gains(const Position3 &u, const ScenarioConfig &cfg);

RateTable evaluate_rates(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg);

/// Rate evaluation from precomputed gains; avoids recomputing distances.
RateTable evaluate_rates(const TxUserMatrix &gains, const Allocation &alloc, double b_comm);

Position3 transmitter_position(int row, const Position3 &u, const ScenarioConfig &cfg);

} // namespace icl
