#pragma once

#include "icl/gibbs.hpp"
#include "icl/solution.hpp"

#include <array>
#include <optional>
#include <vector>

namespace icl
{

struct PsoConfig
{
  int swarm_size = 30;
  int iterations = 300;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  unsigned long long seed = 1;
  int threads = 1;
  std::optional<double> stop_at; // stop once the best feasible fitness reaches this

  void validate() const;
};

/// Particle layout: UAV (x, y, h) followed by the three BS positioning powers.
using Particle = std::array<double, 6>;

struct PsoProgress
{
  int iteration = 0;
  long evaluations = 0;
  double best = 0.0;
  double wall_s = 0.0;
};

struct PsoResult
{
  Solution solution;
  std::vector<PsoProgress> progress; // one row per iteration
};

/// Fitness: BAPO objective when every accuracy region contains u, else a
/// large negative value graded by the total cone violation.
double pso_fitness(const Particle &x, const ScenarioConfig &cfg, const std::vector<double> &thresholds,
                   Solution *out = nullptr);

/// `seeds` replace the first random particles.
PsoResult pso_solve(const ScenarioConfig &cfg, const PsoConfig &pso, const std::vector<Particle> &seeds = {});

/// Half of each transmitter's power to positioning, the rest split equally
/// over the users; bandwidth and the UAV position are then optimized.
Solution epa_solve(const ScenarioConfig &cfg, const PlacementOptions &placement = {});

/// UAV fixed above the users' centroid at 500 m; positioning powers by the
/// Gibbs search and allocation by BAPO.
Solution ucd_solve(const ScenarioConfig &cfg, const GibbsConfig &gibbs);

Position3 ucd_position(const ScenarioConfig &cfg, double altitude = 500.0);

enum class FourthAnchor
{
  Uav,
  Ground
};

struct GridStudyConfig
{
  double cell = 50.0;          // target grid pitch, m
  double search_pitch = 50.0;  // fourth-anchor search pitch, m
  double half_extent = 500.0;  // square area [-e, e]^2
  double anchor_pos_power = 1.0;
  double uav_alt = 100.0;
  double ground_alt = 10.0;
  double target_alt = 0.0;

  void validate() const;
};

struct GridCell
{
  double x = 0.0;
  double y = 0.0;
  double err_h = 0.0;
  double err_v = 0.0;
  double anchor_x = 0.0;
  double anchor_y = 0.0;
  bool singular = false;
};

struct GridMap
{
  FourthAnchor scheme = FourthAnchor::Uav;
  std::vector<GridCell> cells;
};

/// For each target cell, the fourth-anchor horizontal position minimizing
/// the 3D CRLB error, with the horizontal and vertical errors there.
GridMap crlb_grid_study(const ScenarioConfig &cfg, const GridStudyConfig &study, FourthAnchor scheme,
                        int threads = 1);

} // namespace icl
