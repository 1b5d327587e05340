#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "carflow/fields.hpp"
#include "carflow/guidance.hpp"
#include "carflow/rewards.hpp"

namespace carflow {

struct SamplerConfig {
  int steps = 100;            // uniform Euler grid on [0, 1]
  double abort_radius = 1e6;  // blow-up guard on ||x||
};

struct Trajectory {
  std::vector<Eigen::Vector2d> states;  // steps + 1 points, x(0) through x(1)
  std::vector<StepDiagnostics> diags;   // one per Euler step
};

/// Forward Euler x += (1/N)(v + g) from a given start. Throws AbortedTrajectory
/// when the state goes non-finite or leaves the abort radius.
Trajectory euler_sample(const Velocity& vel, const RewardSet& rewards, const GuidanceConfig& gcfg,
                        const ValueFunction* value, const SamplerConfig& scfg,
                        const Eigen::Vector2d& x0, StreamRng& guidance_rng);

/// Row sink for streaming per-step diagnostics (sample index, step, t, diag).
using DiagSink = std::function<void(std::size_t, int, double, const StepDiagnostics&)>;

struct SampleReport {
  std::vector<Eigen::Vector2d> terminals;
  double misalignment_integral = 0.0;  // mean over steps of (1 - mean pairwise cos)
  double mean_delta_e = 0.0;
  double mean_w = 0.0;
  double time_ms_per_sample = 0.0;
  std::size_t aborted = 0;
  std::size_t attempted = 0;
};

/// Draws n standard-normal starts on per-index streams and integrates each.
/// Aborted trajectories are dropped from the report; more than 1% of them
/// fails the run with NumericError.
SampleReport batch_sample(const Velocity& vel, const RewardSet& rewards, const GuidanceConfig& gcfg,
                          const ValueFunction* value, const SamplerConfig& scfg, int n,
                          std::uint64_t seed, const DiagSink& sink = nullptr);

}  // namespace carflow
