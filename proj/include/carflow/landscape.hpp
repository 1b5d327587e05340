#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "carflow/fields.hpp"
#include "carflow/guidance.hpp"
#include "carflow/rewards.hpp"

namespace carflow {

enum class GridKind { kEnergy, kConflictW, kDeltaE, kLearnedValue };

std::string grid_kind_name(GridKind kind);
GridKind grid_kind_from_name(const std::string& name);

/// Uniform lattice including both endpoints; spacing (max - min) / (n - 1).
/// Default window covers every benchmark mode plus 6 sigma of margin.
struct GridSpec {
  double x_min = -14.0, x_max = 16.0;
  double y_min = -14.0, y_max = 16.0;
  int nx = 120, ny = 120;
  double t = 1.0;  // time slice for the flow-routed grid kinds
};

struct Grid {
  GridSpec spec;
  GridKind kind = GridKind::kEnergy;
  Eigen::MatrixXd values;  // (ny, nx); row iy fixes y, column ix fixes x
};

double grid_x(const GridSpec& spec, int ix);
double grid_y(const GridSpec& spec, int iy);

/// Evaluates the chosen field on the lattice. kEnergy is -r(x) of the
/// composite reward. kConflictW / kDeltaE score per-reward gradients of the
/// raw reward field at the lattice point itself (vel = nullptr, the default
/// reading); passing a velocity routes them through the one-step terminal
/// prediction at spec.t instead. kLearnedValue needs `value`.
Grid landscape_grid(GridKind kind, const RewardSet& rewards, const GuidanceConfig& gcfg,
                    const Velocity* vel, const ValueFunction* value, const GridSpec& spec);

/// CSV with a 4-line header (bounds / resolution / kind / t) then ny rows of
/// nx values; shortest round-trip doubles, so save -> load is bit-exact.
std::string grid_to_csv(const Grid& grid);
Grid grid_from_csv(const std::string& text);
void save_grid(const Grid& grid, const std::string& path);
Grid load_grid(const std::string& path);

struct Minimum {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  double energy = 0.0;
  Eigen::Vector2d hess_eigs = Eigen::Vector2d::Zero();  // ascending
  bool spurious = false;  // not near any intended optimum of a reward term
};

struct MinimaConfig {
  double grad_tol = 1e-3;         // ||grad E|| below this counts as stationary
  double exclusion_radius = 1.0;  // distance to a known optimum that clears a minimum
  int max_iters = 200;            // descent iterations per grid candidate
  double merge_radius = 1e-3;     // duplicates within this distance collapse
};

/// Local minima of the composite energy E = -r. Grid candidates are the
/// discrete 8-neighborhood minima plus any cell already under grad_tol; each
/// is refined by descent, kept if the gradient vanishes and the finite-
/// difference Hessian is positive definite, then deduplicated and flagged
/// spurious unless it sits within exclusion_radius of a known optimum.
std::vector<Minimum> find_minima(const RewardSet& rewards, const GridSpec& spec,
                                 const MinimaConfig& cfg,
                                 const std::vector<Eigen::Vector2d>& known_optima);

/// Just the spurious ones; never returns a point within exclusion_radius of a
/// known optimum. Requires the grid cell diameter to be below
/// exclusion_radius so no basin can hide between lattice points.
std::vector<Minimum> find_spurious_minima(const RewardSet& rewards, const GridSpec& spec,
                                          const MinimaConfig& cfg,
                                          const std::vector<Eigen::Vector2d>& known_optima);

/// Default known-optimum list: goal centers and the mode means matching each
/// classifier term's target label (obstacles repel and contribute none).
std::vector<Eigen::Vector2d> intended_optima(const RewardSet& rewards);

}  // namespace carflow
