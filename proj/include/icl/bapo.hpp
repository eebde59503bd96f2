#pragma once

#include "icl/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace icl
{

/// Bandwidth and communication-power allocation for a fixed UAV position and
/// fixed positioning powers.
///
/// The structured path follows the dual decomposition of the problem: for a
/// rate-price vector nu, each transmitter's Lagrangian is maximized in closed
/// form (the KKT ratio s/P = h/t with t from the Lambert-W expression and the
/// bandwidth price mu_j found by bisection), nu is updated by projected
/// subgradient steps, and the final primal point comes from a linear program
/// over the ratio manifold. An interior-point path on the concave objective
/// is kept as an independent reference and as a fallback.

struct BapoInstance
{
  TxUserMatrix gains;      // h_jk, per watt over the full band
  TxVector comm_budget;    // Pmax - pos_power_j
  TxVector pos_power;      // positioning powers, informational
  double p_max = 0.0;
  double b_comm = 0.0;
  double r_th = 0.0;

  Eigen::Index users() const { return gains.cols(); }
};

BapoInstance make_bapo_instance(const Position3 &u, const TxVector &pos_power, const ScenarioConfig &cfg);

struct DualState
{
  Eigen::VectorXd nu;
  TxVector mu = TxVector::Zero();
  TxVector lambda = TxVector::Zero();
  double step = 0.0;
  int iteration = 0;
};

struct BapoSolution
{
  Allocation alloc;
  RateTable rates;
  double objective = 0.0;
  Eigen::VectorXd nu_final;
  double kkt_residual = 0.0; // relative duality gap at nu_final's best bound
  double dual_bound = 0.0;
  int subgradient_iterations = 0;
  bool used_reference = false;
};

struct BapoOutcome
{
  bool feasible = false;
  BapoSolution solution;
  std::string reason;
};

struct BapoOptions
{
  int max_subgradient_iters = 500;
  double step0 = 1e-7;
  double nu_tol = 1e-4;
  int lp_check_every = 10;
  int max_lp_rounds = 200;
  double pricing_tol = 1e-10;
  double rate_penalty = 1e4; // price of an elastic rate-row slack in the LP
  bool reference_fallback = true;
};

/// Principal branch of the Lambert-W function; Halley iteration.
double lambert_w0(double x);

/// SNR-like ratio t > 0 solving ln(1+t) - t/(1+t) = mu ln2 / (B (1+nu)).
double kkt_ratio(double mu, double nu, double b);

/// One nonnegative solution of the row equalities on the ratio manifold
/// s_jk = h_jk P_jk / t_jk: the minimum-norm one. Links with active(j,k) false
/// are held at zero. Returns nullopt when no nonnegative solution exists.
std::optional<Allocation> linear_stage(const TxUserMatrix &t, const TxUserMatrix &h, const TxVector &pos_power,
                                       double p_max,
                                       const Eigen::Matrix<bool, kNumTx, Eigen::Dynamic> *active = nullptr);

DualState subgradient_nu(const DualState &state, const RateTable &rates, double r_th, double step0);

/// Per-transmitter dual minimization for rate prices nu. Fills mu, lambda,
/// t and the Lagrangian maximizer; returns the dual function value d(nu).
struct RowDuals
{
  TxVector mu = TxVector::Zero();
  TxVector lambda = TxVector::Zero();
  TxUserMatrix t;
  Eigen::Matrix<bool, kNumTx, Eigen::Dynamic> active;
  double dual_value = 0.0;
};
RowDuals row_duals(const Eigen::VectorXd &nu, const BapoInstance &inst);

/// d(nu) = max over the row constraints of sum_k (1+nu_k) R_k - R_th sum nu.
/// An upper bound on the optimum for any nu >= 0.
double dual_objective(const Eigen::VectorXd &nu, const BapoInstance &inst);

/// Linear program over P with s fixed to the KKT ratio; returns nullopt if
/// the rate rows cannot be met on this manifold. LP shadow prices of the
/// rate rows are returned in nu_final. solve_bapo generalizes this LP by
/// pricing in further KKT-ratio columns from its own duals until none
/// improves it.
std::optional<BapoSolution> lp_refine(const Eigen::VectorXd &nu_star, const TxUserMatrix &t,
                                      const BapoInstance &inst);

BapoOutcome solve_bapo(const BapoInstance &inst, const BapoOptions &opt = {},
                       const Eigen::VectorXd *warm_nu = nullptr);
BapoOutcome solve_bapo(const Position3 &u, const TxVector &pos_power, const ScenarioConfig &cfg,
                       const BapoOptions &opt = {});

struct ReferenceOptions
{
  int max_outer = 40;  // barrier stages
  int max_inner = 100; // Newton steps per stage
  double tol = 1e-9;   // duality-gap bound m/t, in bit/s/Hz
};

/// Generic reference path: log-barrier interior-point ascent of the concave
/// objective with Newton steps projected onto the simplex equalities, and a
/// phase-one search for a strictly rate-feasible start. Independent of the
/// KKT-ratio structure. With fixed_power set only bandwidth is optimized.
BapoOutcome solve_bapo_reference(const BapoInstance &inst, const ReferenceOptions &opt = {},
                                 const TxUserMatrix *fixed_power = nullptr);

/// Bandwidth-only allocation for fixed communication powers: per-row
/// water-filling through the KKT ratio and cyclic dual coordinate updates on
/// the rate prices.
BapoOutcome solve_bandwidth_only(const BapoInstance &inst, const TxUserMatrix &comm_power);

} // namespace icl
