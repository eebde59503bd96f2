#include "icl/placement.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace icl
{

namespace
{

constexpr double kLn2 = std::numbers::ln2;

/// UAV-row rate for one user as a function of e = |u - w|^2:
/// q(e) = s B log2(1 + a e^-gamma) with a = C p / s.
struct UavLink
{
  double s = 0.0;
  double a = 0.0;
  double gamma = 1.0;
  double b = 0.0;

  bool active() const { return s > 0.0 && a > 0.0; }
  double value(double e) const { return active() ? s * b * std::log2(1.0 + a * std::pow(e, -gamma)) : 0.0; }
  /// dq/de (<= 0).
  double slope(double e) const
  {
    if (!active())
      return 0.0;
    const double g = a * std::pow(e, -gamma);
    return -s * b / kLn2 * gamma * g / (e * (1.0 + g));
  }
};

struct RateModel
{
  std::vector<UavLink> links;
  Eigen::VectorXd ground; // rates from the three BSs, independent of u
  std::vector<Eigen::Vector3d> users;
};

RateModel rate_model(const Allocation &alloc, const ScenarioConfig &cfg)
{
  const auto K = static_cast<Eigen::Index>(cfg.num_users());
  RateModel m;
  const double c = channel_gain(1.0, LinkKind::A2G, cfg.channel);
  m.ground = Eigen::VectorXd::Zero(K);
  for (Eigen::Index k = 0; k < K; ++k)
  {
    const Position3 &w = cfg.users[static_cast<std::size_t>(k)];
    m.users.push_back(w.vec());
    for (int j = 0; j < kUavRow; ++j)
      m.ground(k) += link_rate(alloc.bandwidth(j, k), alloc.comm_power(j, k), distance(cfg.bs[static_cast<std::size_t>(j)], w),
                               LinkKind::G2G, cfg.channel);
    UavLink l;
    l.s = alloc.bandwidth(kUavRow, k);
    l.a = l.s > 0.0 ? c * alloc.comm_power(kUavRow, k) / l.s : 0.0;
    l.gamma = 0.5 * cfg.channel.iota_a;
    l.b = cfg.channel.b_comm;
    m.links.push_back(l);
  }
  return m;
}

double sq_dist(const Eigen::Vector3d &u, const Eigen::Vector3d &w)
{
  return (u - w).squaredNorm();
}

Eigen::VectorXd user_rates(const RateModel &m, const Eigen::Vector3d &u)
{
  Eigen::VectorXd r = m.ground;
  for (std::size_t k = 0; k < m.links.size(); ++k)
    r(static_cast<Eigen::Index>(k)) += m.links[k].value(sq_dist(u, m.users[k]));
  return r;
}

Eigen::Vector3d project_ball(const Eigen::Vector3d &u, const Eigen::Vector3d &c, double radius)
{
  const Eigen::Vector3d d = u - c;
  const double n = d.norm();
  return n <= radius ? u : Eigen::Vector3d(c + d * (radius / n));
}

Eigen::Vector3d project_slab(Eigen::Vector3d u, double h_min, double h_max)
{
  u.z() = std::clamp(u.z(), h_min, h_max);
  return u;
}

} // namespace

double placement_objective(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg)
{
  return evaluate_rates(u, alloc, cfg).sum_rate;
}

Eigen::Vector3d rate_gradient(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg)
{
  const RateModel m = rate_model(alloc, cfg);
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  const Eigen::Vector3d uv = u.vec();
  for (std::size_t k = 0; k < m.links.size(); ++k)
    g += m.links[k].slope(sq_dist(uv, m.users[k])) * 2.0 * (uv - m.users[k]);
  return g;
}

double min_cone_margin(const std::vector<FeasibleRegion> &regions, const Eigen::Vector3d &u)
{
  double m = std::numeric_limits<double>::infinity();
  for (const auto &r : regions)
    m = std::min(m, cone_margin(r, u));
  return m;
}

bool placement_feasible(const std::vector<FeasibleRegion> &regions, const Position3 &u, double h_min, double h_max)
{
  if (u.h < h_min - 1e-9 || u.h > h_max + 1e-9)
    return false;
  return std::all_of(regions.begin(), regions.end(), [&](const FeasibleRegion &r) { return cone_contains(r, u); });
}

std::optional<Position3> find_feasible_u(const std::vector<FeasibleRegion> &regions, double h_min, double h_max)
{
  if (regions.empty())
    throw Error("find_feasible_u: no regions");
  if (!(h_max > h_min))
    throw Error("find_feasible_u: empty altitude range");

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto &r : regions)
  {
    x0 = std::min(x0, r.user.x);
    x1 = std::max(x1, r.user.x);
    y0 = std::min(y0, r.user.y);
    y1 = std::max(y1, r.user.y);
  }
  const double pad = h_max;
  x0 -= pad;
  x1 += pad;
  y0 -= pad;
  y1 += pad;
  const double mid = 0.5 * (h_min + h_max);
  // Margin with a tiny preference for mid-altitude to break flat ties.
  auto score = [&](const Eigen::Vector3d &u) {
    return min_cone_margin(regions, u) - 1e-9 * std::abs(u.z() - mid) / (h_max - h_min);
  };

  constexpr int nh = 24;
  constexpr int nxy = 40;
  Eigen::Vector3d best(0.5 * (x0 + x1), 0.5 * (y0 + y1), mid);
  double best_score = score(best);
  for (int ih = 0; ih <= nh; ++ih)
  {
    const double h = h_min + (h_max - h_min) * ih / nh;
    for (int ix = 0; ix <= nxy; ++ix)
      for (int iy = 0; iy <= nxy; ++iy)
      {
        const Eigen::Vector3d u(x0 + (x1 - x0) * ix / nxy, y0 + (y1 - y0) * iy / nxy, h);
        const double s = score(u);
        if (s > best_score)
        {
          best_score = s;
          best = u;
        }
      }
  }

  // Coordinate ascent with shrinking steps.
  Eigen::Vector3d step((x1 - x0) / nxy, (y1 - y0) / nxy, (h_max - h_min) / nh);
  while (step.maxCoeff() > 1e-4)
  {
    bool moved = false;
    for (int d = 0; d < 3; ++d)
      for (double sgn : {1.0, -1.0})
      {
        Eigen::Vector3d c = best;
        c(d) += sgn * step(d);
        c.z() = std::clamp(c.z(), h_min, h_max);
        const double s = score(c);
        if (s > best_score)
        {
          best_score = s;
          best = c;
          moved = true;
        }
      }
    if (!moved)
      step *= 0.5;
  }
  if (!(min_cone_margin(regions, best) > 0.0))
    return std::nullopt;
  return Position3::from(best);
}

Eigen::Vector3d project_cone(const FeasibleRegion &region, const Eigen::Vector3d &u)
{
  const Eigen::Vector3d w = region.user.vec();
  const Eigen::Vector3d v = u - w;
  const Eigen::Vector3d &a = region.axis;
  const double c = region.cos_half_angle;
  const double vp = a.dot(v);
  const Eigen::Vector3d perp = v - vp * a;
  const double r = perp.norm();
  if (c <= 0.0)
    return vp >= 0.0 ? u : Eigen::Vector3d(u - vp * a);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  if (vp * s >= r * c)
    return u; // inside
  if (r * s <= -vp * c)
    return w; // polar cone: apex
  if (r == 0.0)
    return w;
  const Eigen::Vector3d dir = c * a + s * (perp / r);
  return w + dir * v.dot(dir);
}

PlacementState sca_step(const PlacementState &state, const Allocation &alloc, const std::vector<FeasibleRegion> &regions,
                        const ScenarioConfig &cfg, const PlacementOptions &opt, SubproblemStatus *status)
{
  const RateModel m = rate_model(alloc, cfg);
  const Eigen::Vector3d u0 = state.u.vec();
  const std::size_t K = m.links.size();

  // Tangent weights c_k = -dq/de at u0 and the weighted centroid.
  std::vector<double> cw(K), e0(K);
  double csum = 0.0;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < K; ++k)
  {
    e0[k] = sq_dist(u0, m.users[k]);
    cw[k] = -m.links[k].slope(e0[k]);
    csum += cw[k];
    centroid += cw[k] * m.users[k];
  }
  PlacementState next = state;
  next.iterate = state.iterate + 1;
  SubproblemStatus st;
  if (!(csum > 0.0))
  {
    // Objective does not depend on u.
    st.accepted = true;
    st.converged = true;
    if (status)
      *status = st;
    return next;
  }
  centroid /= csum;

  // Linearized rate floors: e_k <= e0_k + (R_k(u0) - R_th) / c_k, relaxed to
  // keep u0 admissible.
  const Eigen::VectorXd r0 = user_rates(m, u0);
  std::vector<double> ball_r2(K, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < K; ++k)
    if (cw[k] > 0.0 && cfg.r_th > 0.0)
      ball_r2[k] = e0[k] + std::max(0.0, r0(static_cast<Eigen::Index>(k)) - cfg.r_th) / cw[k];

  const double h_min = cfg.h_min, h_max = cfg.h_max;
  const double radius = state.trust_radius;
  std::vector<std::function<Eigen::Vector3d(const Eigen::Vector3d &)>> sets;
  for (const auto &r : regions)
    sets.emplace_back([&r](const Eigen::Vector3d &x) { return project_cone(r, x); });
  sets.emplace_back([&](const Eigen::Vector3d &x) { return project_slab(x, h_min, h_max); });
  sets.emplace_back([&](const Eigen::Vector3d &x) { return project_ball(x, u0, radius); });
  for (std::size_t k = 0; k < K; ++k)
    if (std::isfinite(ball_r2[k]))
      sets.emplace_back([&, k](const Eigen::Vector3d &x) { return project_ball(x, m.users[k], std::sqrt(ball_r2[k])); });

  // Dykstra's alternating projections from the centroid.
  Eigen::Vector3d x = centroid;
  std::vector<Eigen::Vector3d> incr(sets.size(), Eigen::Vector3d::Zero());
  for (int it = 0; it < opt.dykstra_iters; ++it)
  {
    const Eigen::Vector3d before = x;
    for (std::size_t i = 0; i < sets.size(); ++i)
    {
      const Eigen::Vector3d y = sets[i](x + incr[i]);
      incr[i] = x + incr[i] - y;
      x = y;
    }
    if ((x - before).norm() < 1e-9)
      break;
  }

  // Back off toward u0 until every constraint holds exactly.
  auto admissible = [&](const Eigen::Vector3d &p) {
    if (p.z() < h_min || p.z() > h_max)
      return false;
    if ((p - u0).norm() > radius * (1.0 + 1e-12))
      return false;
    for (const auto &r : regions)
      if (cone_margin(r, p) < 0.0)
        return false;
    for (std::size_t k = 0; k < K; ++k)
      if (std::isfinite(ball_r2[k]) && sq_dist(p, m.users[k]) > ball_r2[k])
        return false;
    return true;
  };
  Eigen::Vector3d cand = x;
  if (!admissible(cand))
  {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it)
    {
      const double midv = 0.5 * (lo + hi);
      if (admissible(u0 + midv * (x - u0)))
        lo = midv;
      else
        hi = midv;
    }
    cand = u0 + lo * (x - u0);
  }

  const double obj_new = user_rates(m, cand).sum();
  const double obj_old = user_rates(m, u0).sum();
  if (obj_new >= obj_old - 1e-9 && (cand - u0).norm() > 0.0)
  {
    next.u = Position3::from(cand);
    next.objective = obj_new;
    next.trust_radius = std::min(radius * 1.5, opt.trust_max);
    st.accepted = true;
  }
  else
  {
    next.objective = obj_old;
    next.trust_radius = radius * 0.5;
    st.accepted = (cand - u0).norm() == 0.0;
  }
  st.converged = next.trust_radius < opt.trust_min || (cand - u0).norm() < 1e-9;
  if (status)
    *status = st;
  return next;
}

PlacementState solve_udo(const Position3 &u0, const Allocation &alloc, const std::vector<FeasibleRegion> &regions,
                         const ScenarioConfig &cfg, const PlacementOptions &opt, std::vector<double> *trace)
{
  PlacementState state;
  state.u = u0;
  state.trust_radius = opt.trust_init;
  state.objective = user_rates(rate_model(alloc, cfg), u0.vec()).sum();
  if (trace)
    trace->push_back(state.objective);
  for (int i = 0; i < opt.max_steps; ++i)
  {
    SubproblemStatus st;
    const PlacementState next = sca_step(state, alloc, regions, cfg, opt, &st);
    const double gain = next.objective - state.objective;
    state = next;
    if (trace)
      trace->push_back(state.objective);
    if (st.converged)
      break;
    if (st.accepted && gain < opt.improve_tol)
      break;
  }
  return state;
}

} // namespace icl
