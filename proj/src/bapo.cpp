#include "icl/bapo.hpp"

#include "icl/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace icl
{

namespace
{

constexpr double kLn2 = std::numbers::ln2;
constexpr double kInf = std::numeric_limits<double>::infinity();

using ActiveMask = Eigen::Matrix<bool, kNumTx, Eigen::Dynamic>;

/// ln(1+t) - t/(1+t), accurate near zero.
double phi(double t)
{
  if (t < 1e-3)
  {
    // sum_{n>=2} (-1)^n (n-1)/n t^n
    double pow_t = t;
    double sum = 0.0;
    for (int n = 2; n <= 9; ++n)
    {
      pow_t *= t;
      sum += (n % 2 == 0 ? 1.0 : -1.0) * (n - 1.0) / n * pow_t;
    }
    return sum;
  }
  return std::log1p(t) - t / (1.0 + t);
}

double phi_prime(double t)
{
  return t / ((1.0 + t) * (1.0 + t));
}

/// Inverse of phi by Newton from a Lambert-W start.
double phi_inverse(double c)
{
  if (!(c > 0.0))
    throw Error("degenerate: zero bandwidth price gives t=0");
  double t = kInf;
  if (c < 700.0)
  {
    const double w = lambert_w0(-std::exp(-1.0 - c));
    t = -1.0 / w - 1.0;
  }
  if (!(std::isfinite(t) && t > 1e-6))
    t = c < 1e-6 ? std::sqrt(2.0 * c) : std::exp(1.0 + c);
  for (int it = 0; it < 40; ++it)
  {
    const double f = phi(t) - c;
    const double step = f / phi_prime(t);
    double next = t - step;
    if (!(next > 0.0))
      next = 0.5 * t;
    if (std::abs(next - t) <= 1e-15 * t)
    {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

struct RowResult
{
  double mu = 0.0;
  double lambda = 0.0;
  double value = 0.0;
  Eigen::RowVectorXd t;
  std::vector<bool> active;
};

double stationary_mu(double w, double h, double pc, double b)
{
  return w * b * phi(h * pc) / kLn2;
}

/// min over mu of Pc max_k lambda_k(mu) + mu for one transmitter.
RowResult solve_row(const Eigen::RowVectorXd &h, const Eigen::VectorXd &nu, double pc, double b)
{
  const Eigen::Index K = h.size();
  RowResult rr;
  rr.t = Eigen::RowVectorXd::Ones(K);
  rr.active.assign(static_cast<std::size_t>(K), false);
  if (!(pc > 0.0))
    return rr;

  double lo = kInf, hi = 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
  {
    const double m = stationary_mu(1.0 + nu(k), h(k), pc, b);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }

  auto eval = [&](double mu, Eigen::RowVectorXd &t, Eigen::Index &arg, double &lam) {
    lam = -kInf;
    arg = 0;
    for (Eigen::Index k = 0; k < K; ++k)
    {
      const double w = 1.0 + nu(k);
      t(k) = phi_inverse(mu * kLn2 / (b * w));
      const double l = w * h(k) * b / (kLn2 * (1.0 + t(k)));
      if (l > lam)
      {
        lam = l;
        arg = k;
      }
    }
  };

  Eigen::RowVectorXd t(K);
  Eigen::Index arg = 0;
  double lam = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it)
  {
    const double mid = std::sqrt(lo * hi);
    eval(mid, t, arg, lam);
    const double slope = 1.0 - pc * h(arg) / t(arg);
    if (slope < 0.0)
      lo = mid;
    else
      hi = mid;
    if (!(mid > lo && mid < hi) && mid != lo && mid != hi)
      break;
  }
  rr.mu = std::sqrt(lo * hi);
  eval(rr.mu, t, arg, lam);
  rr.t = t;
  rr.lambda = lam;
  rr.value = pc * lam + rr.mu;
  for (Eigen::Index k = 0; k < K; ++k)
  {
    const double w = 1.0 + nu(k);
    const double l = w * h(k) * b / (kLn2 * (1.0 + t(k)));
    rr.active[static_cast<std::size_t>(k)] = l >= lam * (1.0 - 1e-9);
  }
  return rr;
}

/// Minimum-norm nonnegative P with sum P = pc and sum r P = 1 over the given
/// index set, by enumeration of the sorted supports admitted by the KKT
/// conditions P_k = max(0, y1 + y2 r_k) / (1 + r_k^2).
std::optional<Eigen::VectorXd> min_norm_row(const Eigen::VectorXd &r, double pc)
{
  const Eigen::Index n = r.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return r(a) < r(b); });

  const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
  std::optional<Eigen::VectorXd> best;
  double best_norm = kInf;

  auto try_support = [&](std::size_t first, std::size_t last) {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    for (std::size_t i = first; i < last; ++i)
    {
      const double rk = r(order[i]);
      const double inv_w = 1.0 / (1.0 + rk * rk);
      m(0, 0) += inv_w;
      m(0, 1) += rk * inv_w;
      m(1, 1) += rk * rk * inv_w;
    }
    m(1, 0) = m(0, 1);
    const Eigen::Vector2d rhs(pc, 1.0);
    const Eigen::Vector2d y = m.completeOrthogonalDecomposition().solve(rhs);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (std::size_t i = first; i < last; ++i)
    {
      const double rk = r(order[i]);
      const double v = (y(0) + y(1) * rk) / (1.0 + rk * rk);
      if (v < -1e-12 * std::max(pc, 1e-300))
        return;
      p(order[i]) = std::max(0.0, v);
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
      if ((i < first || i >= last) && y(0) + y(1) * r(order[i]) > 1e-9 * scale * std::abs(y(1)) + 1e-12 * std::abs(y(0)))
        return;
    const double e1 = std::abs(p.sum() - pc);
    const double e2 = std::abs(r.dot(p) - 1.0);
    if (e1 > 1e-11 * std::max(pc, 1.0) || e2 > 1e-11)
      return;
    const double nrm = (p.array().square() * (1.0 + r.array().square())).sum();
    if (nrm < best_norm)
    {
      best_norm = nrm;
      best = p;
    }
  };

  const auto un = static_cast<std::size_t>(n);
  for (std::size_t len = 1; len <= un; ++len)
  {
    try_support(0, len);
    if (len < un)
      try_support(un - len, un);
  }
  return best;
}

Allocation lagrangian_maximizer(const std::vector<RowResult> &rows, const BapoInstance &inst)
{
  const Eigen::Index K = inst.users();
  Allocation a = Allocation::zeros(static_cast<std::size_t>(K));
  a.pos_power = inst.pos_power;
  for (int j = 0; j < kNumTx; ++j)
  {
    const double pc = inst.comm_budget(j);
    const RowResult &rr = rows[static_cast<std::size_t>(j)];
    if (!(pc > 0.0))
    {
      a.bandwidth.row(j).setConstant(1.0 / static_cast<double>(K));
      continue;
    }
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < K; ++k)
      if (rr.active[static_cast<std::size_t>(k)])
        idx.push_back(k);
    bool done = false;
    if (idx.size() > 1)
    {
      Eigen::VectorXd r(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i)
        r(static_cast<Eigen::Index>(i)) = inst.gains(j, idx[i]) / rr.t(idx[i]);
      if (auto p = min_norm_row(r, pc))
      {
        for (std::size_t i = 0; i < idx.size(); ++i)
        {
          const Eigen::Index k = idx[i];
          a.comm_power(j, k) = (*p)(static_cast<Eigen::Index>(i));
          a.bandwidth(j, k) = r(static_cast<Eigen::Index>(i)) * (*p)(static_cast<Eigen::Index>(i));
        }
        done = true;
      }
    }
    if (!done)
    {
      Eigen::Index best = 0;
      double lam = -kInf;
      for (Eigen::Index k = 0; k < K; ++k)
      {
        const double l = (1.0) * inst.gains(j, k) / (1.0 + rr.t(k));
        if (rr.active[static_cast<std::size_t>(k)] && l > lam)
        {
          lam = l;
          best = k;
        }
      }
      a.comm_power(j, best) = pc;
      a.bandwidth(j, best) = 1.0;
    }
  }
  return a;
}

double min_slack(const RateTable &rates, double r_th)
{
  return (rates.user_rates.array() - r_th).minCoeff();
}

} // namespace

BapoInstance make_bapo_instance(const Position3 &u, const TxVector &pos_power, const ScenarioConfig &cfg)
{
  BapoInstance inst;
  inst.gains = channel_gains(u, cfg);
  inst.pos_power = pos_power;
  inst.p_max = cfg.p_max;
  inst.comm_budget = (TxVector::Constant(cfg.p_max) - pos_power).cwiseMax(0.0);
  inst.b_comm = cfg.channel.b_comm;
  inst.r_th = cfg.r_th;
  return inst;
}

double lambert_w0(double x)
{
  constexpr double inv_e = 1.0 / std::numbers::e;
  if (std::isnan(x) || x < -inv_e - 1e-15)
    throw Error("lambert_w0: argument below -1/e");
  if (x == 0.0)
    return 0.0;
  if (x <= -inv_e)
    return -1.0;
  if (std::isinf(x))
    return x;

  double w;
  const double q = 2.0 * (std::numbers::e * x + 1.0);
  if (x < -0.25)
  {
    const double p = std::sqrt(std::max(q, 0.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p - 43.0 / 540.0 * p * p * p * p;
    if (p < 1e-4)
      return w;
  }
  else if (x < 3.0)
  {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  }
  else
  {
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }

  for (int it = 0; it < 60; ++it)
  {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double next = w - f / denom;
    if (!std::isfinite(next))
      break;
    if (std::abs(next - w) <= 1e-15 * (1.0 + std::abs(next)))
    {
      w = next;
      break;
    }
    w = next;
  }
  return w;
}

double kkt_ratio(double mu, double nu, double b)
{
  if (!(mu > 0.0))
    throw Error("degenerate: zero bandwidth price gives t=0");
  if (!(b > 0.0) || nu < 0.0)
    throw Error("kkt_ratio: bandwidth must be positive and nu nonnegative");
  return phi_inverse(mu * kLn2 / (b * (1.0 + nu)));
}

std::optional<Allocation> linear_stage(const TxUserMatrix &t, const TxUserMatrix &h, const TxVector &pos_power,
                                       double p_max, const ActiveMask *active)
{
  const Eigen::Index K = h.cols();
  if (t.cols() != K)
    throw Error("linear_stage: dimension mismatch");
  Allocation a = Allocation::zeros(static_cast<std::size_t>(K));
  a.pos_power = pos_power;
  for (int j = 0; j < kNumTx; ++j)
  {
    const double pc = std::max(0.0, p_max - pos_power(j));
    if (!(pc > 0.0))
    {
      a.bandwidth.row(j).setConstant(1.0 / static_cast<double>(K));
      continue;
    }
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < K; ++k)
      if (!active || (*active)(j, k))
      {
        if (!(t(j, k) > 0.0 && h(j, k) > 0.0))
          throw Error("linear_stage: t and h must be positive");
        idx.push_back(k);
      }
    if (idx.empty())
      return std::nullopt;
    Eigen::VectorXd r(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = h(j, idx[i]) / t(j, idx[i]);
    const auto p = min_norm_row(r, pc);
    if (!p)
      return std::nullopt;
    for (std::size_t i = 0; i < idx.size(); ++i)
    {
      const auto ii = static_cast<Eigen::Index>(i);
      a.comm_power(j, idx[i]) = (*p)(ii);
      a.bandwidth(j, idx[i]) = r(ii) * (*p)(ii);
    }
  }
  return a;
}

DualState subgradient_nu(const DualState &state, const RateTable &rates, double r_th, double step0)
{
  if (!(step0 > 0.0))
    throw Error("subgradient step must be positive");
  DualState next = state;
  next.iteration = state.iteration + 1;
  next.step = step0 / std::sqrt(static_cast<double>(next.iteration));
  next.nu = (state.nu.array() + next.step * (r_th - rates.user_rates.array())).cwiseMax(0.0);
  return next;
}

RowDuals row_duals(const Eigen::VectorXd &nu, const BapoInstance &inst)
{
  const Eigen::Index K = inst.users();
  if (nu.size() != K || (nu.array() < 0.0).any())
    throw Error("row_duals: nu must be a nonnegative K-vector");
  RowDuals rd;
  rd.t = TxUserMatrix::Ones(kNumTx, K);
  rd.active = ActiveMask::Constant(kNumTx, K, false);
  double value = -inst.r_th * nu.sum();
  for (int j = 0; j < kNumTx; ++j)
  {
    const RowResult rr = solve_row(inst.gains.row(j), nu, inst.comm_budget(j), inst.b_comm);
    rd.mu(j) = rr.mu;
    rd.lambda(j) = rr.lambda;
    rd.t.row(j) = rr.t;
    for (Eigen::Index k = 0; k < K; ++k)
      rd.active(j, k) = rr.active[static_cast<std::size_t>(k)];
    value += rr.value;
  }
  rd.dual_value = value;
  return rd;
}

double dual_objective(const Eigen::VectorXd &nu, const BapoInstance &inst)
{
  return row_duals(nu, inst).dual_value;
}

namespace
{

/// One LP column: power fraction x of transmitter j's budget given to user k
/// with bandwidth share (h Pc / t) x.
struct Column
{
  int j = 0;
  Eigen::Index k = 0;
  double t = 1.0;
};

struct ColumnLp
{
  lp::Result res;
  std::vector<int> rows; // transmitters with budget, in LP row order
  Eigen::Index n_cols = 0;
  Eigen::Index n_slack = 0;
  double penalty_used = 0.0;
};

/// LP over the given columns. With `penalty` > 0 every rate row gets an
/// elastic slack priced at `penalty`, which keeps the LP feasible.
ColumnLp solve_column_lp(const std::vector<Column> &cols, const BapoInstance &inst, double penalty,
                         const std::vector<int> *warm_basis = nullptr)
{
  const Eigen::Index K = inst.users();
  ColumnLp out;
  std::vector<int> row_of(kNumTx, -1);
  for (int j = 0; j < kNumTx; ++j)
    if (inst.comm_budget(j) > 0.0)
    {
      row_of[static_cast<std::size_t>(j)] = static_cast<int>(out.rows.size());
      out.rows.push_back(j);
    }
  const auto nr = static_cast<Eigen::Index>(out.rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index ns = penalty > 0.0 ? K : 0;
  out.n_cols = nc;

  lp::Problem prob;
  prob.a = Eigen::MatrixXd::Zero(2 * nr + K, nc + ns);
  prob.b = Eigen::VectorXd::Zero(2 * nr + K);
  prob.c = Eigen::VectorXd::Zero(nc + ns);
  prob.rows.assign(static_cast<std::size_t>(2 * nr + K), lp::RowType::Equal);
  prob.b.head(2 * nr).setOnes();
  const double rho = inst.r_th / inst.b_comm;
  for (Eigen::Index k = 0; k < K; ++k)
  {
    prob.b(2 * nr + k) = rho;
    prob.rows[static_cast<std::size_t>(2 * nr + k)] = lp::RowType::GreaterEq;
  }
  // Elastic slacks come first so appended columns keep their indices.
  for (Eigen::Index k = 0; k < ns; ++k)
  {
    prob.a(2 * nr + k, k) = 1.0;
    prob.c(k) = -penalty;
  }
  for (Eigen::Index c0 = 0; c0 < nc; ++c0)
  {
    const Eigen::Index v = ns + c0;
    const Column &c = cols[static_cast<std::size_t>(c0)];
    const Eigen::Index i = row_of[static_cast<std::size_t>(c.j)];
    const double r = inst.gains(c.j, c.k) * inst.comm_budget(c.j) / c.t;
    const double rate = r * std::log2(1.0 + c.t);
    prob.a(i, v) = 1.0;
    prob.a(nr + i, v) = r;
    prob.a(2 * nr + c.k, v) = rate;
    prob.c(v) = rate;
  }
  out.res = lp::solve(prob, 20000, warm_basis);
  out.n_slack = ns;
  if (out.res.status == lp::Status::Optimal && ns > 0)
    out.penalty_used = out.res.x.head(ns).sum();
  return out;
}

/// Aggregate LP columns into an allocation; row equalities are restored to
/// machine precision by renormalization.
BapoSolution assemble(const std::vector<Column> &cols, const ColumnLp &lpres, const BapoInstance &inst)
{
  const Eigen::Index K = inst.users();
  BapoSolution sol;
  sol.alloc = Allocation::zeros(static_cast<std::size_t>(K));
  sol.alloc.pos_power = inst.pos_power;
  for (int j = 0; j < kNumTx; ++j)
    if (!(inst.comm_budget(j) > 0.0))
      sol.alloc.bandwidth.row(j).setConstant(1.0 / static_cast<double>(K));
  for (std::size_t v = 0; v < cols.size(); ++v)
  {
    const double x = lpres.res.x(lpres.n_slack + static_cast<Eigen::Index>(v));
    if (x <= 0.0)
      continue;
    const Column &c = cols[v];
    const double pc = inst.comm_budget(c.j);
    sol.alloc.comm_power(c.j, c.k) += x * pc;
    sol.alloc.bandwidth(c.j, c.k) += x * inst.gains(c.j, c.k) * pc / c.t;
  }
  for (int j : lpres.rows)
  {
    sol.alloc.comm_power.row(j) *= inst.comm_budget(j) / sol.alloc.comm_power.row(j).sum();
    sol.alloc.bandwidth.row(j) /= sol.alloc.bandwidth.row(j).sum();
  }
  sol.rates = evaluate_rates(inst.gains, sol.alloc, inst.b_comm);
  sol.objective = sol.rates.sum_rate;
  const Eigen::Index nr = static_cast<Eigen::Index>(lpres.rows.size());
  sol.nu_final = (-lpres.res.duals.segment(2 * nr, K)).cwiseMax(0.0);
  return sol;
}

double pricing_ratio(double bw_dual, double w)
{
  // Maximizer over t of (w log2(1+t) - bw_dual)/t; unbounded toward t -> 0
  // when the bandwidth row is not priced.
  constexpr double t_floor = 1e-9;
  if (!(bw_dual > 0.0))
    return t_floor;
  return std::max(phi_inverse(bw_dual * kLn2 / w), t_floor);
}

} // namespace

std::optional<BapoSolution> lp_refine(const Eigen::VectorXd &nu_star, const TxUserMatrix &t,
                                      const BapoInstance &inst)
{
  const Eigen::Index K = inst.users();
  if (nu_star.size() != K || t.cols() != K)
    throw Error("lp_refine: dimension mismatch");
  std::vector<Column> cols;
  for (int j = 0; j < kNumTx; ++j)
    if (inst.comm_budget(j) > 0.0)
      for (Eigen::Index k = 0; k < K; ++k)
      {
        if (!(t(j, k) > 0.0))
          throw Error("lp_refine: ratios must be positive");
        cols.push_back({j, k, t(j, k)});
      }
  const ColumnLp lpres = solve_column_lp(cols, inst, 0.0);
  if (lpres.res.status != lp::Status::Optimal)
    return std::nullopt;
  return assemble(cols, lpres, inst);
}

BapoOutcome solve_bapo(const BapoInstance &inst, const BapoOptions &opt, const Eigen::VectorXd *warm_nu)
{
  const Eigen::Index K = inst.users();
  if (K < 1)
    throw Error("solve_bapo: no users");
  BapoOutcome out;
  const double need = static_cast<double>(K) * inst.r_th;
  const double rate_tol = 1e-6 * inst.r_th;

  // Full-row columns (t = h Pc) keep every row equality satisfiable.
  std::vector<Column> cols;
  for (int j = 0; j < kNumTx; ++j)
    if (inst.comm_budget(j) > 0.0)
      for (Eigen::Index k = 0; k < K; ++k)
        cols.push_back({j, k, inst.gains(j, k) * inst.comm_budget(j)});
  auto add_column = [&](int j, Eigen::Index k, double t) {
    for (const Column &c : cols)
      if (c.j == j && c.k == k && std::abs(c.t - t) <= 1e-12 * t)
        return false;
    cols.push_back({j, k, t});
    return true;
  };

  DualState st;
  st.nu = Eigen::VectorXd::Zero(K);
  if (warm_nu && warm_nu->size() == K)
    st.nu = warm_nu->cwiseMax(0.0);
  double best_dual = kInf;
  std::optional<BapoSolution> best;
  bool certified = false;
  bool certified_infeasible = false;
  int iters = 0;

  // Column generation: LP duals price new KKT-ratio columns until none
  // improves the LP, at which point the LP optimum is the problem optimum.
  std::vector<int> basis;
  auto refine = [&]() {
    for (int round = 0; round < opt.max_lp_rounds; ++round)
    {
      const ColumnLp lpres = solve_column_lp(cols, inst, opt.rate_penalty, basis.empty() ? nullptr : &basis);
      if (lpres.res.status != lp::Status::Optimal)
        return;
      basis = lpres.res.basis;
      const Eigen::Index nr = static_cast<Eigen::Index>(lpres.rows.size());
      const Eigen::VectorXd nu = (-lpres.res.duals.segment(2 * nr, K)).cwiseMax(0.0);
      bool added = false;
      const double scale = std::max(std::abs(lpres.res.objective), 1.0);
      for (Eigen::Index i = 0; i < nr; ++i)
      {
        const int j = lpres.rows[static_cast<std::size_t>(i)];
        const double a = lpres.res.duals(i);
        const double b = lpres.res.duals(nr + i);
        for (Eigen::Index k = 0; k < K; ++k)
        {
          const double w = 1.0 + nu(k);
          const double t = pricing_ratio(b, w);
          const double g = inst.gains(j, k) * inst.comm_budget(j);
          const double rc = g / t * (w * std::log2(1.0 + t) - b) - a;
          if (rc > opt.pricing_tol * scale && add_column(j, k, t))
            added = true;
        }
      }
      if (!added)
      {
        if (lpres.penalty_used > 1e-9 * std::max(1.0, inst.r_th / inst.b_comm))
          return;
        BapoSolution sol = assemble(cols, lpres, inst);
        if ((sol.rates.user_rates.array() - inst.r_th).minCoeff() >= -rate_tol)
        {
          best = sol;
          certified = true;
        }
        return;
      }
    }
  };

  for (int i = 1; i <= opt.max_subgradient_iters; ++i)
  {
    iters = i;
    const RowDuals rd = row_duals(st.nu, inst);
    best_dual = std::min(best_dual, rd.dual_value);
    if (inst.r_th > 0.0 && best_dual < need * (1.0 - 1e-9))
    {
      certified_infeasible = true;
      break;
    }
    for (int j = 0; j < kNumTx; ++j)
      if (inst.comm_budget(j) > 0.0)
        for (Eigen::Index k = 0; k < K; ++k)
          add_column(j, k, rd.t(j, k));
    if (i == 1 || i % opt.lp_check_every == 0)
    {
      refine();
      if (certified)
        break;
    }

    std::vector<RowResult> rows(kNumTx);
    for (int j = 0; j < kNumTx; ++j)
    {
      rows[static_cast<std::size_t>(j)].t = rd.t.row(j);
      rows[static_cast<std::size_t>(j)].active.resize(static_cast<std::size_t>(K));
      for (Eigen::Index k = 0; k < K; ++k)
        rows[static_cast<std::size_t>(j)].active[static_cast<std::size_t>(k)] = rd.active(j, k);
    }
    const Allocation lag = lagrangian_maximizer(rows, inst);
    const RateTable lr = evaluate_rates(inst.gains, lag, inst.b_comm);
    DualState next = subgradient_nu(st, lr, inst.r_th, opt.step0);
    next.mu = rd.mu;
    next.lambda = rd.lambda;
    const double change = (next.nu - st.nu).norm();
    st = next;
    if (change < opt.nu_tol && i > 1)
      break;
  }
  if (!certified && !certified_infeasible)
    refine();

  if (best)
  {
    const double d = dual_objective(best->nu_final, inst);
    best_dual = std::min(best_dual, d);
  }

  if (!best && !certified_infeasible && opt.reference_fallback)
  {
    BapoOutcome ref = solve_bapo_reference(inst);
    if (ref.feasible)
    {
      ref.solution.subgradient_iterations = iters;
      ref.solution.dual_bound = best_dual;
      ref.solution.kkt_residual =
          std::max(0.0, (best_dual - ref.solution.objective) / std::max(ref.solution.objective, 1.0));
      return ref;
    }
  }
  if (!best)
  {
    out.feasible = false;
    out.reason = "R_th unattainable at this u, P-bar";
    return out;
  }
  out.feasible = true;
  out.solution = *best;
  out.solution.dual_bound = best_dual;
  out.solution.kkt_residual = std::max(0.0, (best_dual - best->objective) / std::max(best->objective, 1.0));
  out.solution.subgradient_iterations = iters;
  return out;
}


BapoOutcome solve_bapo(const Position3 &u, const TxVector &pos_power, const ScenarioConfig &cfg,
                       const BapoOptions &opt)
{
  return solve_bapo(make_bapo_instance(u, pos_power, cfg), opt);
}

// ---------------------------------------------------------------------------
// Reference path

namespace
{

/// Generic barrier formulation over products of simplices. Each active
/// transmitter contributes a power block (unless powers are fixed) and a
/// bandwidth block of K fractions summing to one.
struct RefProblem
{
  const BapoInstance &inst;
  std::vector<int> rows;
  bool fixed_power = false;
  TxUserMatrix p_fixed; // fractions of the budget
  Eigen::Index K = 0;

  Eigen::Index block() const { return fixed_power ? K : 2 * K; }
  Eigen::Index nx() const { return static_cast<Eigen::Index>(rows.size()) * block(); }
  Eigen::Index n_blocks() const { return nx() / K; }
  Eigen::Index p_index(std::size_t i, Eigen::Index k) const
  {
    return fixed_power ? -1 : static_cast<Eigen::Index>(i) * block() + k;
  }
  Eigen::Index s_index(std::size_t i, Eigen::Index k) const
  {
    return static_cast<Eigen::Index>(i) * block() + (fixed_power ? 0 : K) + k;
  }
  double p(const Eigen::VectorXd &x, std::size_t i, Eigen::Index k) const
  {
    return fixed_power ? p_fixed(rows[i], k) : x(p_index(i, k));
  }
  double g(std::size_t i, Eigen::Index k) const { return inst.gains(rows[i], k) * inst.comm_budget(rows[i]); }

  Eigen::VectorXd rates(const Eigen::VectorXd &x) const
  {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(K);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (Eigen::Index k = 0; k < K; ++k)
      {
        const double sv = x(s_index(i, k));
        const double pv = p(x, i, k);
        if (sv > 0.0 && pv > 0.0)
          r(k) += sv * std::log2(1.0 + g(i, k) * pv / sv);
      }
    return r;
  }

  /// Gradients and Hessians of each user's rate (dense n x n, few users).
  void rate_derivatives(const Eigen::VectorXd &x, std::vector<Eigen::VectorXd> &grad,
                        std::vector<Eigen::MatrixXd> &hess) const
  {
    const Eigen::Index n = x.size();
    grad.assign(static_cast<std::size_t>(K), Eigen::VectorXd::Zero(n));
    hess.assign(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(n, n));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (Eigen::Index k = 0; k < K; ++k)
      {
        const double gk = g(i, k);
        const double pv = p(x, i, k);
        const double sv = x(s_index(i, k));
        const double xr = gk * pv / sv;
        const double q = 1.0 / (kLn2 * sv * (1.0 + xr) * (1.0 + xr));
        auto &gr = grad[static_cast<std::size_t>(k)];
        auto &h = hess[static_cast<std::size_t>(k)];
        const Eigen::Index is = s_index(i, k);
        gr(is) = phi(xr) / kLn2;
        h(is, is) = -xr * xr * q;
        if (!fixed_power)
        {
          const Eigen::Index ip = p_index(i, k);
          gr(ip) = gk / (kLn2 * (1.0 + xr));
          h(ip, ip) = -gk * gk * q;
          h(ip, is) = h(is, ip) = gk * xr * q;
        }
      }
  }
};

struct BarrierEval
{
  double value = -kInf;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

/// t * objective + sum log x + sum_k log(r_k - rho - tau). The objective is
/// the sum rate, or tau itself in phase one (tau is then the last variable).
BarrierEval barrier(const RefProblem &pr, const Eigen::VectorXd &z, double t, double rho, bool rate_terms,
                    bool phase1, bool derivatives)
{
  const Eigen::Index nx = pr.nx();
  const Eigen::Index n = z.size();
  const Eigen::VectorXd x = z.head(nx);
  const double tau = phase1 ? z(nx) : 0.0;
  BarrierEval e;
  if ((x.array() <= 0.0).any())
    return e;
  const Eigen::VectorXd r = pr.rates(x);
  const Eigen::VectorXd slack = r.array() - rho - tau;
  if (rate_terms && (slack.array() <= 0.0).any())
    return e;
  e.value = (phase1 ? t * tau : t * r.sum()) + x.array().log().sum();
  if (rate_terms)
    e.value += slack.array().log().sum();
  if (!derivatives)
    return e;

  std::vector<Eigen::VectorXd> gr;
  std::vector<Eigen::MatrixXd> hr;
  pr.rate_derivatives(x, gr, hr);
  e.grad = Eigen::VectorXd::Zero(n);
  e.hess = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < pr.K; ++k)
  {
    const auto uk = static_cast<std::size_t>(k);
    if (!phase1)
    {
      e.grad.head(nx) += t * gr[uk];
      e.hess.topLeftCorner(nx, nx) += t * hr[uk];
    }
    if (rate_terms)
    {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
      a.head(nx) = gr[uk];
      if (phase1)
        a(nx) = -1.0;
      const double sk = slack(k);
      e.grad += a / sk;
      e.hess.topLeftCorner(nx, nx) += hr[uk] / sk;
      e.hess -= a * a.transpose() / (sk * sk);
    }
  }
  if (phase1)
    e.grad(nx) += t;
  e.grad.head(nx) += x.cwiseInverse();
  e.hess.diagonal().head(nx) -= x.cwiseInverse().cwiseAbs2();
  return e;
}

/// Barrier path with equality-constrained Newton steps. Phase one returns as
/// soon as tau > 0. Returns the final duality-gap bound m / t.
double barrier_solve(const RefProblem &pr, Eigen::VectorXd &z, double rho, bool rate_terms, bool phase1,
                     const ReferenceOptions &opt)
{
  const Eigen::Index nx = pr.nx();
  const Eigen::Index n = z.size();
  const Eigen::Index nb = pr.n_blocks();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nb, n);
  for (Eigen::Index b = 0; b < nb; ++b)
    a.block(b, b * pr.K, 1, pr.K).setOnes();
  const double m = static_cast<double>(nx + (rate_terms ? pr.K : 0));

  double t = 1.0;
  for (int stage = 0; stage < opt.max_outer; ++stage)
  {
    for (int it = 0; it < opt.max_inner; ++it)
    {
      const BarrierEval e = barrier(pr, z, t, rho, rate_terms, phase1, true);
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + nb, n + nb);
      kkt.topLeftCorner(n, n) = e.hess;
      kkt.topRightCorner(n, nb) = a.transpose();
      kkt.bottomLeftCorner(nb, n) = a;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + nb);
      rhs.head(n) = -e.grad;
      const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
      Eigen::VectorXd dz = sol.head(n);
      // Exact null-space projection keeps the iterates on the simplices.
      for (Eigen::Index b = 0; b < nb; ++b)
        dz.segment(b * pr.K, pr.K).array() -= dz.segment(b * pr.K, pr.K).mean();
      const double decrement = -dz.dot(e.hess * dz);
      if (!(decrement > 1e-12))
        break;
      double step = 1.0;
      const double slope = e.grad.dot(dz);
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls)
      {
        const Eigen::VectorXd zn = z + step * dz;
        const double v = barrier(pr, zn, t, rho, rate_terms, phase1, false).value;
        if (v >= e.value + 0.25 * step * slope)
        {
          z = zn;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved)
        break;
      if (phase1 && z(nx) > 0.0)
        return m / t;
    }
    if (m / t <= opt.tol)
      break;
    t *= 8.0;
  }
  return m / t;
}

} // namespace

BapoOutcome solve_bapo_reference(const BapoInstance &inst, const ReferenceOptions &opt,
                                 const TxUserMatrix *fixed_power)
{
  const Eigen::Index K = inst.users();
  RefProblem pr{inst, {}, fixed_power != nullptr, {}, K};
  for (int j = 0; j < kNumTx; ++j)
    if (inst.comm_budget(j) > 0.0)
      pr.rows.push_back(j);
  if (fixed_power)
  {
    pr.p_fixed = TxUserMatrix::Zero(kNumTx, K);
    for (int j : pr.rows)
      pr.p_fixed.row(j) = fixed_power->row(j) / inst.comm_budget(j);
  }

  const double rho = inst.r_th / inst.b_comm;
  const bool rate_terms = rho > 0.0;
  BapoOutcome out;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(pr.nx(), 1.0 / static_cast<double>(K));

  if (rate_terms)
  {
    const Eigen::VectorXd r0 = pr.rates(x);
    if ((r0.array() - rho).minCoeff() <= 0.0)
    {
      Eigen::VectorXd z(pr.nx() + 1);
      z.head(pr.nx()) = x;
      z(pr.nx()) = (r0.array() - rho).minCoeff() - 1.0;
      barrier_solve(pr, z, rho, true, true, opt);
      if (!(z(pr.nx()) > 0.0))
      {
        out.feasible = false;
        out.reason = "R_th unattainable at this u, P-bar (reference path)";
        return out;
      }
      x = z.head(pr.nx());
    }
  }
  const double gap = barrier_solve(pr, x, rho, rate_terms, false, opt);
  for (Eigen::Index b = 0; b < pr.n_blocks(); ++b)
    x.segment(b * K, K) /= x.segment(b * K, K).sum();

  out.solution.alloc = Allocation::zeros(static_cast<std::size_t>(K));
  out.solution.alloc.pos_power = inst.pos_power;
  for (int j = 0; j < kNumTx; ++j)
    out.solution.alloc.bandwidth.row(j).setConstant(1.0 / static_cast<double>(K));
  for (std::size_t i = 0; i < pr.rows.size(); ++i)
  {
    const int j = pr.rows[i];
    for (Eigen::Index k = 0; k < K; ++k)
    {
      out.solution.alloc.comm_power(j, k) = pr.p(x, i, k) * inst.comm_budget(j);
      out.solution.alloc.bandwidth(j, k) = x(pr.s_index(i, k));
    }
  }
  out.solution.rates = evaluate_rates(inst.gains, out.solution.alloc, inst.b_comm);
  out.solution.objective = out.solution.rates.sum_rate;
  out.solution.nu_final = Eigen::VectorXd::Zero(K);
  out.solution.used_reference = true;
  out.solution.dual_bound = out.solution.objective + gap * inst.b_comm;
  out.solution.kkt_residual = gap * inst.b_comm / std::max(out.solution.objective, 1.0);
  out.feasible = min_slack(out.solution.rates, inst.r_th) >= -1e-6 * inst.r_th;
  if (!out.feasible)
    out.reason = "R_th unattainable at this u, P-bar (reference path)";
  return out;
}

// ---------------------------------------------------------------------------
// Bandwidth-only path

namespace
{

/// Bandwidth row for fixed powers: s_k = h P_k / t_k(eta), eta chosen so the
/// shares sum to one. Links without power receive no bandwidth.
Eigen::RowVectorXd bandwidth_row(const Eigen::RowVectorXd &h, const Eigen::RowVectorXd &p, const Eigen::VectorXd &nu,
                                 double b)
{
  const Eigen::Index K = h.size();
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(K);
  if (!(p.maxCoeff() > 0.0))
  {
    s.setConstant(1.0 / static_cast<double>(K));
    return s;
  }
  auto total = [&](double log_eta, Eigen::RowVectorXd &out) {
    const double eta = std::exp(log_eta);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < K; ++k)
    {
      if (p(k) > 0.0)
      {
        const double t = phi_inverse(eta * kLn2 / (b * (1.0 + nu(k))));
        out(k) = h(k) * p(k) / t;
        sum += out(k);
      }
      else
        out(k) = 0.0;
    }
    return std::log(sum);
  };
  // Bracket log(sum s) = 0 in log(eta); sum s decreases with eta.
  double lo = std::log(b), hi = lo;
  Eigen::RowVectorXd tmp(K);
  double flo = total(lo, tmp), fhi = flo;
  while (flo < 0.0)
  {
    lo -= 2.0;
    flo = total(lo, tmp);
  }
  while (fhi > 0.0)
  {
    hi += 2.0;
    fhi = total(hi, tmp);
  }
  // Illinois regula falsi.
  int side = 0;
  double x = lo;
  for (int it = 0; it < 200; ++it)
  {
    x = (lo * fhi - hi * flo) / (fhi - flo);
    const double fx = total(x, tmp);
    if (std::abs(fx) < 1e-15 || hi - lo < 1e-14)
      break;
    if (fx > 0.0)
    {
      lo = x;
      flo = fx;
      if (side == -1)
        fhi *= 0.5;
      side = -1;
    }
    else
    {
      hi = x;
      fhi = fx;
      if (side == 1)
        flo *= 0.5;
      side = 1;
    }
  }
  total(x, s);
  return s / s.sum();
}

Allocation bandwidth_allocation(const BapoInstance &inst, const TxUserMatrix &comm_power, const Eigen::VectorXd &nu)
{
  Allocation a = Allocation::zeros(static_cast<std::size_t>(inst.users()));
  a.pos_power = inst.pos_power;
  a.comm_power = comm_power;
  for (int j = 0; j < kNumTx; ++j)
    a.bandwidth.row(j) = bandwidth_row(inst.gains.row(j), comm_power.row(j), nu, inst.b_comm);
  return a;
}

} // namespace

BapoOutcome solve_bandwidth_only(const BapoInstance &inst, const TxUserMatrix &comm_power)
{
  const Eigen::Index K = inst.users();
  if (comm_power.cols() != K)
    throw Error("solve_bandwidth_only: dimension mismatch");
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(K);
  auto rate_of = [&](const Eigen::VectorXd &v, Eigen::Index k) {
    return evaluate_rates(inst.gains, bandwidth_allocation(inst, comm_power, v), inst.b_comm).user_rates(k);
  };
  const double tol = 1e-10 * std::max(inst.r_th, 1.0);
  constexpr double kNuCap = 1e9;

  BapoOutcome out;
  bool converged = false;
  for (int sweep = 0; sweep < 300 && !converged; ++sweep)
  {
    converged = true;
    for (Eigen::Index k = 0; k < K; ++k)
    {
      Eigen::VectorXd v = nu;
      v(k) = 0.0;
      double r0 = rate_of(v, k);
      double target_nu = 0.0;
      if (r0 < inst.r_th)
      {
        double lo = 0.0, flo = r0 - inst.r_th;
        double hi = std::max(1.0, 2.0 * nu(k));
        v(k) = hi;
        double fhi = rate_of(v, k) - inst.r_th;
        while (fhi < 0.0)
        {
          lo = hi;
          flo = fhi;
          hi *= 4.0;
          if (hi > kNuCap)
          {
            out.feasible = false;
            out.reason = "R_th unattainable with these powers";
            return out;
          }
          v(k) = hi;
          fhi = rate_of(v, k) - inst.r_th;
        }
        int side = 0;
        double xm = hi;
        for (int it = 0; it < 200; ++it)
        {
          xm = (lo * fhi - hi * flo) / (fhi - flo);
          v(k) = xm;
          const double fx = rate_of(v, k) - inst.r_th;
          if (std::abs(fx) <= 1e-3 * tol || hi - lo <= 1e-15 * hi)
            break;
          if (fx < 0.0)
          {
            lo = xm;
            flo = fx;
            if (side == -1)
              fhi *= 0.5;
            side = -1;
          }
          else
          {
            hi = xm;
            fhi = fx;
            if (side == 1)
              flo *= 0.5;
            side = 1;
          }
        }
        target_nu = xm;
      }
      if (std::abs(target_nu - nu(k)) > 1e-9 * (1.0 + nu(k)))
        converged = false;
      nu(k) = target_nu;
    }
  }

  out.solution.alloc = bandwidth_allocation(inst, comm_power, nu);
  out.solution.rates = evaluate_rates(inst.gains, out.solution.alloc, inst.b_comm);
  out.solution.objective = out.solution.rates.sum_rate;
  out.solution.nu_final = nu;
  out.feasible = min_slack(out.solution.rates, inst.r_th) >= -1e-6 * inst.r_th;
  if (!out.feasible)
    out.reason = "R_th unattainable with these powers";
  return out;
}

} // namespace icl
