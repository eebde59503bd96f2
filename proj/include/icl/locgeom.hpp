#pragma once

#include "icl/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace icl
{

inline constexpr double kSpeedOfLight = 3e8;

enum class AnchorKind
{
  BS,
  UAV
};

struct ToAVariances
{
  std::array<double, 3> sigma2_bs{};
  double sigma2_uav = 0.0;
};

/// Unit vectors from the user toward each anchor and the TDoA Jacobian
/// (rows q2-q1, q3-q1, qu-q1) with BS 1 as reference.
struct GeometryFrame
{
  std::array<Eigen::Vector3d, 3> q_bs;
  Eigen::Vector3d q_uav;
  Eigen::Matrix3d jacobian;
};

struct CrlbErrors
{
  double err_h = 0.0; // meters
  double err_v = 0.0; // meters
  double err_3d() const { return std::sqrt(err_h * err_h + err_v * err_v); }
};

/// Per-user constants of the BS triple: alpha = (q2-q1) x (q3-q1),
/// c1 = |alpha|, c2 = alpha.q1, c3 = |alpha_xy|. Independent of the UAV.
struct ConeConstants
{
  Eigen::Vector3d alpha;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
};

struct AccuracyBounds
{
  double lb = 0.0;
  double ub = 0.0;
  int case_sign = 1;
};

/// Localization-feasible cone of the UAV for one user.
///
/// Case +1 (det H > 0):  alpha.(u-w) >= eps_tilde |u-w|
/// Case -1 (det H < 0):  alpha.(u-w) <= eps_tilde |u-w|
///
/// Both are stored in the normalized form axis.(u-w) >= cos_half_angle |u-w|.
/// When the threshold sits below the half-space limit the cone is widened
/// to the half-space axis.(u-w) >= 0 (a convex inner approximation).
struct FeasibleRegion
{
  Eigen::Vector3d alpha;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double d1 = 0.0;
  int case_sign = 1;
  double eps_tilde = 0.0;
  double eps_k = 0.0;
  Position3 user;

  Eigen::Vector3d axis;
  double cos_half_angle = 0.0;
};

/// Conic a X^2 + b XY + c Y^2 + d X + e Y + f = 0 in (X, Y) = (x-x_k, y-y_k).
struct Conic
{
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
  double discriminant() const { return b * b - 4 * a * c; }
  double eval(double X, double Y) const { return a * X * X + b * X * Y + c * Y * Y + d * X + e * Y + f; }
};

double toa_variance(const Position3 &anchor, const Position3 &user, double pos_power, AnchorKind kind,
                    const ChannelParams &ch);

/// BS variances for one user under positioning powers pos_power_bs.
std::array<double, 3> bs_variances(const Position3 &user, const std::array<double, 3> &pos_power_bs,
                                   const ScenarioConfig &cfg);

Eigen::Matrix3d tdoa_covariance(const ToAVariances &v);

/// det(C) = D1 + D2 with D1 the product of BS variances.
std::pair<double, double> det_c_split(const ToAVariances &v);

GeometryFrame geometry_frame(const Position3 &u, const Position3 &user, const std::array<Position3, 3> &bs);

double opt_d(const GeometryFrame &frame, const Eigen::Matrix3d &cov);
double opt_d1(const GeometryFrame &frame, double d1);

CrlbErrors crlb(const GeometryFrame &frame, const Eigen::Matrix3d &cov);

Eigen::Vector3d alpha_coeffs(const GeometryFrame &frame);
ConeConstants cone_constants(const Position3 &user, const std::array<Position3, 3> &bs);

int det_sign(const Position3 &user, const std::array<Position3, 3> &bs, double probe_alt = 300.0);

AccuracyBounds accuracy_bounds(std::size_t user_idx, const std::array<double, 3> &pos_power_bs,
                               const ScenarioConfig &cfg);

/// Per-user thresholds eps_k = lb_k + zeta (ub_k - lb_k) with the bounds taken
/// at a BS positioning power of 0.15 W; accuracy_overrides win when present.
std::vector<double> derive_accuracy_thresholds(const ScenarioConfig &cfg, double reference_power = 0.15);

/// Throws InfeasibleError when eps_k exceeds the upper feasibility bound.
FeasibleRegion region_for_user(std::size_t user_idx, const std::array<double, 3> &pos_power_bs, double eps_k,
                               const ScenarioConfig &cfg);

/// Normalized margin axis.q_u - cos_half_angle (>= 0 inside). No vertex check.
double cone_margin(const FeasibleRegion &region, const Eigen::Vector3d &u);

bool cone_contains(const FeasibleRegion &region, const Position3 &u);

Conic ellipse_at_altitude(const FeasibleRegion &region, double h);

/// Boundary polyline of the region at altitude h in absolute (x, y).
std::vector<std::pair<double, double>> ellipse_polyline(const FeasibleRegion &region, double h,
                                                        int samples = 360);

/// Relative gap (opt-D1 - opt-D)/opt-D for equal BS SNRs and a UAV SNR of
/// ratio * snr_n; the geometry cancels.
double opt_d_gap(double snr_n, double ratio, const ChannelParams &ch);

} // namespace icl
