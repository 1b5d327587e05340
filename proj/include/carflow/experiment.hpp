#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "carflow/cfm.hpp"
#include "carflow/config.hpp"
#include "carflow/sampler.hpp"

namespace carflow {

struct MetricsRow {
  std::string method;
  std::string constraint;
  double pc = 0.0;
  double cs = 0.0;
  long n = 0;
  std::uint64_t seed = 0;
  double time_ms_per_sample = 0.0;
  long data_usage = 0;  // guidance-training trajectories consumed for this cell
};

inline constexpr const char* kMetricsHeader =
    "method,constraint,pc,cs,n,seed,time_ms_per_sample,data_usage";

std::string metrics_row_csv(const MetricsRow& row);
MetricsRow metrics_row_from_csv(const std::string& line);

struct CellFailure {
  std::string method;
  std::string constraint;
  std::uint64_t seed = 0;
  std::string stage;
  std::string error;
};

struct CalibrationPoint {
  std::string target;
  double scale = 0.0;
  double cs = 0.0;
};

struct CalibrationResult {
  double scale = 1.0;
  bool reached = false;  // some grid scale hit CS >= 99 on every single constraint
  std::vector<CalibrationPoint> table;
};

/// Smallest grid scale whose cov_g sampling reaches CS >= 99 on every
/// single-classifier target; falls back to the largest grid entry.
CalibrationResult calibrate_scale(const VelocityField& field, const ExperimentConfig& cfg,
                                  std::uint64_t seed);

/// Velocity RMSE against the analytic field over t in {0.1..0.9} x a 40x40
/// lattice on [-12,14]^2, keeping per-slice cells whose log p_t is within
/// 8 nats of the slice peak (the high-density tube the transport crosses).
double flow_grid_rmse(const VelocityField& field, const GaussianMixture& gm);

/// Mean |x + (1-t) v - oracle terminal mean| over the same filtered grid.
double terminal_grid_mean_error(const VelocityField& field, const GaussianMixture& gm);

struct ExperimentReport {
  std::vector<MetricsRow> rows;
  std::vector<CellFailure> failures;
  std::map<std::uint64_t, CalibrationResult> calibration;  // per seed
  std::map<std::uint64_t, double> flow_rmse;               // per seed
  std::string out_dir;
};

/// Full benchmark run: per seed, train or load the flow field, calibrate the
/// guidance scale, then run every (method, target) cell -- value training for
/// car, guided sampling, metrics, landscape grids, and figures. Cells that
/// already have results on disk are reused byte-for-byte, so a rerun into the
/// same directory reproduces metrics.csv exactly; per-cell errors land in
/// failures.csv instead of aborting the run.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

void write_terminals_csv(const std::vector<Eigen::Vector2d>& terminals, const std::string& path);

}  // namespace carflow
