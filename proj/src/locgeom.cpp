#include "icl/locgeom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace icl
{

namespace
{

Eigen::Vector3d unit_toward(const Position3 &from, const Position3 &to)
{
  const Eigen::Vector3d d = to.vec() - from.vec();
  const double n = d.norm();
  if (!(n > 0.0))
    throw Error("anchor coincides with the user: zero distance");
  return d / n;
}

} // namespace

double toa_variance(const Position3 &anchor, const Position3 &user, double pos_power, AnchorKind kind,
                    const ChannelParams &ch)
{
  if (!(pos_power > 0.0))
    throw Error("anchor silent: infinite variance");
  const double d = distance(anchor, user);
  if (!(d > 0.0))
    throw Error("anchor coincides with the user: zero distance");
  const double iota = kind == AnchorKind::BS ? ch.iota_g : ch.iota_a;
  const double snr_term = ch.psi * ch.b_pos * ch.n0 * std::pow(d, iota) / (ch.beta * pos_power);
  return kind == AnchorKind::BS ? snr_term + ch.sigma_nlos2 : snr_term;
}

std::array<double, 3> bs_variances(const Position3 &user, const std::array<double, 3> &pos_power_bs,
                                   const ScenarioConfig &cfg)
{
  std::array<double, 3> v{};
  for (std::size_t n = 0; n < 3; ++n)
    v[n] = toa_variance(cfg.bs[n], user, pos_power_bs[n], AnchorKind::BS, cfg.channel);
  return v;
}

Eigen::Matrix3d tdoa_covariance(const ToAVariances &v)
{
  Eigen::Matrix3d c = Eigen::Matrix3d::Constant(v.sigma2_bs[0]);
  c(0, 0) += v.sigma2_bs[1];
  c(1, 1) += v.sigma2_bs[2];
  c(2, 2) += v.sigma2_uav;
  return c;
}

std::pair<double, double> det_c_split(const ToAVariances &v)
{
  const auto &[s1, s2, s3] = v.sigma2_bs;
  return {s1 * s2 * s3, v.sigma2_uav * (s2 * s3 + s1 * s3 + s1 * s2)};
}

GeometryFrame geometry_frame(const Position3 &u, const Position3 &user, const std::array<Position3, 3> &bs)
{
  GeometryFrame f;
  for (std::size_t n = 0; n < 3; ++n)
    f.q_bs[n] = unit_toward(user, bs[n]);
  f.q_uav = unit_toward(user, u);
  f.jacobian.row(0) = (f.q_bs[1] - f.q_bs[0]).transpose();
  f.jacobian.row(1) = (f.q_bs[2] - f.q_bs[0]).transpose();
  f.jacobian.row(2) = (f.q_uav - f.q_bs[0]).transpose();
  return f;
}

double opt_d(const GeometryFrame &frame, const Eigen::Matrix3d &cov)
{
  const double det_c = cov.determinant();
  if (!(det_c > 0.0))
    throw Error("singular TDoA covariance");
  const double dh = frame.jacobian.determinant();
  return dh * dh / det_c;
}

double opt_d1(const GeometryFrame &frame, double d1)
{
  if (!(d1 > 0.0))
    throw Error("D1 must be positive");
  const double dh = frame.jacobian.determinant();
  return dh * dh / d1;
}

CrlbErrors crlb(const GeometryFrame &frame, const Eigen::Matrix3d &cov)
{
  const Eigen::Matrix3d &h = frame.jacobian;
  if (std::abs(h.determinant()) < 1e-12)
    throw Error("unlocalizable geometry");
  // F^{-1} = H^{-1} C H^{-T} for square nonsingular H.
  const Eigen::Matrix3d h_inv = h.inverse();
  const Eigen::Matrix3d pos_cov = kSpeedOfLight * kSpeedOfLight * (h_inv * cov * h_inv.transpose());
  const double hv = pos_cov(0, 0) + pos_cov(1, 1);
  const double vv = pos_cov(2, 2);
  if (!(hv > 0.0 && vv > 0.0))
    throw Error("unlocalizable geometry");
  return {std::sqrt(hv), std::sqrt(vv)};
}

Eigen::Vector3d alpha_coeffs(const GeometryFrame &frame)
{
  const Eigen::Vector3d a = frame.q_bs[1] - frame.q_bs[0];
  const Eigen::Vector3d b = frame.q_bs[2] - frame.q_bs[0];
  // Cofactors of the third Jacobian row.
  return {a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(), a.x() * b.y() - a.y() * b.x()};
}

ConeConstants cone_constants(const Position3 &user, const std::array<Position3, 3> &bs)
{
  GeometryFrame f;
  for (std::size_t n = 0; n < 3; ++n)
    f.q_bs[n] = unit_toward(user, bs[n]);
  ConeConstants cc;
  cc.alpha = alpha_coeffs(f);
  cc.c1 = cc.alpha.norm();
  cc.c2 = cc.alpha.dot(f.q_bs[0]);
  cc.c3 = cc.alpha.head<2>().norm();
  return cc;
}

int det_sign(const Position3 &user, const std::array<Position3, 3> &bs, double probe_alt)
{
  const Position3 probe{user.x, user.y, probe_alt};
  const double d = geometry_frame(probe, user, bs).jacobian.determinant();
  if (std::abs(d) < 1e-14)
    throw Error("coplanar probe, raise altitude");
  return d > 0 ? 1 : -1;
}

AccuracyBounds accuracy_bounds(std::size_t user_idx, const std::array<double, 3> &pos_power_bs,
                               const ScenarioConfig &cfg)
{
  const Position3 &w = cfg.users.at(user_idx);
  const ConeConstants cc = cone_constants(w, cfg.bs);
  const auto v = bs_variances(w, pos_power_bs, cfg);
  const double d1 = v[0] * v[1] * v[2];

  AccuracyBounds b;
  b.case_sign = det_sign(w, cfg.bs);
  // Case +1: c3 - c2 < sqrt(eps D1) < c1 - c2; case -1: c3 + c2 < ... < c1 + c2.
  const double lo = cc.c3 - b.case_sign * cc.c2;
  const double hi = cc.c1 - b.case_sign * cc.c2;
  const double lo_clamped = std::max(lo, 0.0);
  if (!(hi > lo_clamped))
    throw Error("empty accuracy interval: degenerate anchor geometry");
  b.lb = lo_clamped * lo_clamped / d1;
  b.ub = hi * hi / d1;
  return b;
}

std::vector<double> derive_accuracy_thresholds(const ScenarioConfig &cfg, double reference_power)
{
  if (cfg.accuracy_overrides)
  {
    if (cfg.accuracy_overrides->size() != cfg.num_users())
      throw Error("accuracy_overrides must have one entry per user");
    return *cfg.accuracy_overrides;
  }
  const std::array<double, 3> p{reference_power, reference_power, reference_power};
  std::vector<double> eps;
  for (std::size_t k = 0; k < cfg.num_users(); ++k)
  {
    const AccuracyBounds b = accuracy_bounds(k, p, cfg);
    eps.push_back(b.lb + cfg.zeta * (b.ub - b.lb));
  }
  return eps;
}

FeasibleRegion region_for_user(std::size_t user_idx, const std::array<double, 3> &pos_power_bs, double eps_k,
                               const ScenarioConfig &cfg)
{
  if (!(eps_k > 0.0))
    throw Error("accuracy threshold must be positive");
  const Position3 &w = cfg.users.at(user_idx);
  const ConeConstants cc = cone_constants(w, cfg.bs);
  const auto v = bs_variances(w, pos_power_bs, cfg);

  FeasibleRegion r;
  r.alpha = cc.alpha;
  r.c1 = cc.c1;
  r.c2 = cc.c2;
  r.c3 = cc.c3;
  r.d1 = v[0] * v[1] * v[2];
  r.case_sign = det_sign(w, cfg.bs);
  r.eps_k = eps_k;
  r.user = w;

  const double root = std::sqrt(eps_k * r.d1);
  r.eps_tilde = r.case_sign > 0 ? root + r.c2 : -root + r.c2;

  const double threshold = r.case_sign * r.eps_tilde; // in [-c1, c1] when feasible
  if (threshold > r.c1 * (1.0 + 1e-12))
    throw InfeasibleError("accuracy threshold above the feasible bound for user " + std::to_string(user_idx));
  r.axis = r.case_sign * r.alpha / r.c1;
  r.cos_half_angle = std::clamp(threshold / r.c1, 0.0, 1.0);
  return r;
}

double cone_margin(const FeasibleRegion &region, const Eigen::Vector3d &u)
{
  const Eigen::Vector3d v = u - region.user.vec();
  const double n = v.norm();
  if (!(n > 0.0))
    return -1.0;
  return region.axis.dot(v) / n - region.cos_half_angle;
}

bool cone_contains(const FeasibleRegion &region, const Position3 &u)
{
  const Eigen::Vector3d v = u.vec() - region.user.vec();
  const double n = v.norm();
  if (!(n > 0.0))
    throw Error("cone vertex");
  const double lhs = region.axis.dot(v);
  const double rhs = region.cos_half_angle * n;
  return lhs >= rhs - 1e-9 * n;
}

Conic ellipse_at_altitude(const FeasibleRegion &region, double h)
{
  const double threshold = region.case_sign * region.eps_tilde;
  if (!(threshold > region.c3))
    throw Error("region unbounded at this altitude");
  const double dh = h - region.user.h;
  if (!(region.axis.z() * dh > 0.0))
    throw Error("region empty at this altitude");
  const double et2 = region.eps_tilde * region.eps_tilde;
  const Eigen::Vector3d &al = region.alpha;
  Conic q;
  q.a = et2 - al.x() * al.x();
  q.b = -2.0 * al.x() * al.y();
  q.c = et2 - al.y() * al.y();
  q.d = -2.0 * al.x() * al.z() * dh;
  q.e = -2.0 * al.y() * al.z() * dh;
  q.f = (et2 - al.z() * al.z()) * dh * dh;
  return q;
}

std::vector<std::pair<double, double>> ellipse_polyline(const FeasibleRegion &region, double h, int samples)
{
  const Conic q = ellipse_at_altitude(region, h);
  Eigen::Matrix2d m;
  m << q.a, 0.5 * q.b, 0.5 * q.b, q.c;
  const Eigen::Vector2d center = m.ldlt().solve(Eigen::Vector2d(-0.5 * q.d, -0.5 * q.e));
  const double f0 = q.eval(center.x(), center.y());
  if (!(f0 < 0.0))
    throw Error("region empty at this altitude");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const Eigen::Vector2d radii = (-f0 / es.eigenvalues().array()).sqrt();
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i)
  {
    const double t = 2.0 * std::numbers::pi * i / samples;
    const Eigen::Vector2d p =
        center + es.eigenvectors() * Eigen::Vector2d(radii.x() * std::cos(t), radii.y() * std::sin(t));
    pts.emplace_back(region.user.x + p.x(), region.user.y + p.y());
  }
  return pts;
}

double opt_d_gap(double snr_n, double ratio, const ChannelParams &ch)
{
  if (!(snr_n > 0.0 && ratio > 0.0))
    throw Error("SNR values must be positive");
  ToAVariances v;
  const double s_bs = ch.psi / snr_n + ch.sigma_nlos2;
  v.sigma2_bs = {s_bs, s_bs, s_bs};
  v.sigma2_uav = ch.psi / (ratio * snr_n);
  const auto [d1, d2] = det_c_split(v);
  return d2 / d1;
}

} // namespace icl
