#pragma once

#include "icl/locgeom.hpp"
#include "icl/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace icl
{

/// UAV position update for fixed allocations by successive convex
/// approximation. Each UAV link rate is convex in e = |u - w_k|^2, so its
/// tangent in e is a global lower bound; the surrogate is then a concave
/// quadratic in u and each subproblem is the Euclidean projection of a
/// weighted centroid onto the cones, the altitude slab, a trust ball and the
/// linearized rate balls (Dykstra's alternating projections).

struct PlacementState
{
  Position3 u;
  double objective = 0.0; // bit/s
  int iterate = 0;
  double trust_radius = 100.0;
};

struct PlacementOptions
{
  int max_steps = 100;
  double improve_tol = 1e-3; // bit/s
  double trust_init = 100.0;
  double trust_min = 1e-3;
  double trust_max = 2000.0;
  int dykstra_iters = 3000;
};

struct SubproblemStatus
{
  bool accepted = false;
  bool converged = false; // trust radius fell below its floor
};

/// Sum rate at u with the allocation held fixed.
double placement_objective(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg);

/// Analytic gradient of the sum rate with respect to the UAV position.
Eigen::Vector3d rate_gradient(const Position3 &u, const Allocation &alloc, const ScenarioConfig &cfg);

/// Smallest normalized cone margin over the regions (>= 0 inside all).
double min_cone_margin(const std::vector<FeasibleRegion> &regions, const Eigen::Vector3d &u);

bool placement_feasible(const std::vector<FeasibleRegion> &regions, const Position3 &u, double h_min, double h_max);

/// Maximizes the minimum normalized cone margin over a coarse grid and
/// polishes by coordinate ascent; grid ties resolve toward mid-altitude. Returns
/// nullopt when the best margin is not positive.
std::optional<Position3> find_feasible_u(const std::vector<FeasibleRegion> &regions, double h_min, double h_max);

/// Euclidean projection onto {u : axis.(u-w) >= cos |u-w|}.
Eigen::Vector3d project_cone(const FeasibleRegion &region, const Eigen::Vector3d &u);

PlacementState sca_step(const PlacementState &state, const Allocation &alloc, const std::vector<FeasibleRegion> &regions,
                        const ScenarioConfig &cfg, const PlacementOptions &opt = {},
                        SubproblemStatus *status = nullptr);

/// Iterates sca_step until the improvement drops below improve_tol or the
/// step budget is spent. `trace` receives the objective of every iterate.
PlacementState solve_udo(const Position3 &u0, const Allocation &alloc, const std::vector<FeasibleRegion> &regions,
                         const ScenarioConfig &cfg, const PlacementOptions &opt = {},
                         std::vector<double> *trace = nullptr);

} // namespace icl
