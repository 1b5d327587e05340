#include "carflow/sampler.hpp"

#include <chrono>
#include <cmath>

#include "carflow/errors.hpp"

namespace carflow {

Trajectory euler_sample(const Velocity& vel, const RewardSet& rewards, const GuidanceConfig& gcfg,
                        const ValueFunction* value, const SamplerConfig& scfg,
                        const Eigen::Vector2d& x0, StreamRng& guidance_rng) {
  if (scfg.steps <= 0) throw ConfigError("sampler needs steps > 0");
  const int n = scfg.steps;
  const double dt = 1.0 / static_cast<double>(n);
  Trajectory traj;
  traj.states.reserve(n + 1);
  traj.diags.reserve(n);
  Eigen::Vector2d x = x0;
  traj.states.push_back(x);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Eigen::Vector2d v = vel(x, t);
    GuidanceResult gr = guidance_step(vel, rewards, gcfg, value, x, t, guidance_rng);
    x += dt * (v + gr.g);
    if (!x.allFinite() || x.norm() > scfg.abort_radius)
      throw AbortedTrajectory(static_cast<std::size_t>(i));
    traj.states.push_back(x);
    traj.diags.push_back(std::move(gr.diag));
  }
  return traj;
}

SampleReport batch_sample(const Velocity& vel, const RewardSet& rewards, const GuidanceConfig& gcfg,
                          const ValueFunction* value, const SamplerConfig& scfg, int n,
                          std::uint64_t seed, const DiagSink& sink) {
  if (n <= 0) throw ConfigError("batch_sample needs n > 0");
  SampleReport report;
  report.attempted = static_cast<std::size_t>(n);
  report.terminals.reserve(n);
  double acc_mis = 0.0, acc_de = 0.0, acc_w = 0.0;
  const auto t_begin = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    StreamRng start(seed, stream::kRollout, idx);
    const Eigen::Vector2d x0(start.normal(), start.normal());
    StreamRng shuffle(seed, stream::kPcgradShuffle, idx);
    Trajectory traj;
    try {
      traj = euler_sample(vel, rewards, gcfg, value, scfg, x0, shuffle);
    } catch (const AbortedTrajectory&) {
      ++report.aborted;
      continue;
    }
    double mis = 0.0, de = 0.0, w = 0.0;
    for (int s = 0; s < scfg.steps; ++s) {
      const StepDiagnostics& d = traj.diags[static_cast<std::size_t>(s)];
      mis += 1.0 - d.mean_cos;
      de += d.delta_e;
      w += d.w;
      if (sink) sink(static_cast<std::size_t>(i), s, static_cast<double>(s) / scfg.steps, d);
    }
    const double inv = 1.0 / static_cast<double>(scfg.steps);
    acc_mis += mis * inv;
    acc_de += de * inv;
    acc_w += w * inv;
    report.terminals.push_back(traj.states.back());
  }
  const auto t_end = std::chrono::steady_clock::now();
  const double total_ms = std::chrono::duration<double, std::milli>(t_end - t_begin).count();
  report.time_ms_per_sample = total_ms / static_cast<double>(n);

  const double frac = static_cast<double>(report.aborted) / static_cast<double>(n);
  if (frac > 0.01)
    throw NumericError("aborted trajectory fraction " + std::to_string(frac) + " exceeds 1%");
  if (!report.terminals.empty()) {
    const double m = static_cast<double>(report.terminals.size());
    report.misalignment_integral = acc_mis / m;
    report.mean_delta_e = acc_de / m;
    report.mean_w = acc_w / m;
  }
  return report;
}

}  // namespace carflow
