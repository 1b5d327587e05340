#include "carflow/value.hpp"

#include <cmath>
#include <algorithm>

#include "carflow/errors.hpp"

namespace carflow {

namespace {

// The spatial inputs span roughly +/-12 while the N(0, 1/fan_in) init assumes
// O(1) scale; shrinking the first layer's x-columns keeps the tanh units in
// their linear range at the start instead of saturating immediately.
constexpr double kSpatialInitScale = 0.125;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::vector<RolloutTuple> collect_rollouts(const Velocity& vel, const RewardSet& rewards,
                                           const GuidanceConfig& gcfg, const ValueFunction* value,
                                           int n, int steps, std::uint64_t seed,
                                           std::uint64_t index_offset, std::size_t* attempted,
                                           std::size_t* terminal_conflicted,
                                           std::size_t* max_conflicted, double tau) {
  if (n <= 0 || steps <= 0) throw ConfigError("collect_rollouts needs n > 0 and steps > 0");
  std::vector<RolloutTuple> tuples;
  tuples.reserve(static_cast<std::size_t>(n) * (steps + 1));
  SamplerConfig scfg;
  scfg.steps = steps;
  if (attempted) *attempted = static_cast<std::size_t>(n);
  if (terminal_conflicted) *terminal_conflicted = 0;
  if (max_conflicted) *max_conflicted = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t idx = index_offset + static_cast<std::uint64_t>(i);
    StreamRng start(seed, stream::kRollout, idx);
    const Eigen::Vector2d x0(start.normal(), start.normal());
    StreamRng shuffle(seed, stream::kPcgradShuffle, idx);
    Trajectory traj;
    try {
      traj = euler_sample(vel, rewards, gcfg, value, scfg, x0, shuffle);
    } catch (const AbortedTrajectory&) {
      continue;
    }
    const Eigen::Vector2d x1 = traj.states.back();
    const double reward = composite_value_grad(rewards, x1).value;
    if (!std::isfinite(reward)) continue;

    // The step diagnostics already scored every pre-step state; the boundary
    // score is recomputed at the terminal point itself.
    const ConflictScore boundary =
        conflict_score(per_reward_guidance(vel, rewards, x1, 1.0, gcfg.scale), gcfg.epsilon);
    double w_max = boundary.w;
    for (int s = 0; s < steps; ++s) {
      const StepDiagnostics& d = traj.diags[static_cast<std::size_t>(s)];
      tuples.push_back({traj.states[static_cast<std::size_t>(s)],
                        static_cast<double>(s) / static_cast<double>(steps), x1, d.w, reward});
      w_max = std::max(w_max, d.w);
    }
    tuples.push_back({x1, 1.0, x1, boundary.w, reward});
    if (terminal_conflicted && boundary.w > tau) ++*terminal_conflicted;
    if (max_conflicted && w_max > tau) ++*max_conflicted;
  }
  return tuples;
}

double tvr_loss(const NetworkParams& params, const std::vector<RolloutTuple>& tuples,
                const RewardSet& rewards, double tau) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const RolloutTuple& tup : tuples) {
    if (!(tup.w > tau || tup.t == 1.0)) continue;
    const Eigen::Vector3d in(tup.x(0), tup.x(1), tup.t);
    const double err = composite_value_grad(rewards, tup.x1).value - net_forward(params, in)(0);
    acc += err * err;
    ++count;
  }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

GuidanceTrainResult train_guidance(const Velocity& vel, const RewardSet& rewards,
                                   const GuidanceConfig& gcfg, const GuidanceTrainConfig& cfg) {
  if (cfg.rounds_max <= 0) throw ConfigError("guidance training needs rounds_max > 0");
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = cfg.hidden_dims;
  spec.output_dim = 1;
  spec.activation = cfg.activation;
  spec.seed = cfg.seed;

  GuidanceTrainResult result;
  result.value.spec = spec;
  result.value.params = net_init(spec);
  result.value.clip_norm = gcfg.clip_norm;
  if (!result.value.params.layers.empty()) {
    Eigen::MatrixXd& w0 = result.value.params.layers.front().w;
    w0.col(0) *= kSpatialInitScale;
    w0.col(1) *= kSpatialInitScale;
  }
  OptimizerState opt = adam_init(result.value.params, cfg.lr);

  GuidanceConfig policy = gcfg;  // rollouts always run the blended engine
  policy.engine = Engine::kCar;
  const double tau = gcfg.conflict_threshold;
  std::vector<double> stop_window;

  for (int round = 0; round < cfg.rounds_max; ++round) {
    std::size_t attempted = 0, terminal_conflicted = 0, max_conflicted = 0;
    const std::uint64_t offset =
        static_cast<std::uint64_t>(round) * static_cast<std::uint64_t>(cfg.rollouts_per_round);
    const std::vector<RolloutTuple> tuples = collect_rollouts(
        vel, rewards, policy, &result.value, cfg.rollouts_per_round, cfg.rollout_steps, cfg.seed,
        offset, &attempted, &terminal_conflicted, &max_conflicted, tau);
    result.trajectories_used += static_cast<long>(attempted);

    const std::size_t kept = tuples.size() / (static_cast<std::size_t>(cfg.rollout_steps) + 1);
    RoundLog log;
    log.round = round;
    log.trajectories_consumed = result.trajectories_used;
    if (kept > 0) {
      log.conflict_fraction = static_cast<double>(terminal_conflicted) / static_cast<double>(kept);
      log.max_state_fraction = static_cast<double>(max_conflicted) / static_cast<double>(kept);
    }

    // Early stop is decided on the fresh batch before any update touches it.
    // A single round's fraction is a small-sample binomial estimate and dips
    // transiently while V is still moving, so the halt requires the recent
    // rounds to sit below epsilon together rather than any one of them.
    stop_window.push_back(log.conflict_fraction);
    if (stop_window.size() > 3) stop_window.erase(stop_window.begin());
    const bool settled = std::all_of(stop_window.begin(), stop_window.end(),
                                     [&](double f) { return f < cfg.early_stop_epsilon; });
    if (settled) {
      result.rounds.push_back(log);
      result.converged = true;
      break;
    }

    std::vector<const RolloutTuple*> masked;
    masked.reserve(tuples.size());
    for (const RolloutTuple& tup : tuples)
      if (tup.w > tau || tup.t == 1.0) masked.push_back(&tup);
    if (masked.empty()) {  // every rollout aborted; nothing to regress on
      result.rounds.push_back(log);
      continue;
    }

    // cosine decay to 5% of the base lr over the round budget, mirroring the
    // flow trainer; fresh rollouts otherwise keep late rounds thrashing the
    // settled landscape
    const double frac = static_cast<double>(round) / static_cast<double>(cfg.rounds_max);
    opt.lr = cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(kPi * frac)));

    double loss_acc = 0.0;
    const int b = cfg.batch_size;
    Eigen::MatrixXd inputs(3, b);
    Eigen::MatrixXd targets(1, b);
    for (int u = 0; u < cfg.grad_updates_per_round; ++u) {
      StreamRng pick(cfg.seed, stream::kValueBatch,
                     static_cast<std::uint64_t>(round) *
                             static_cast<std::uint64_t>(cfg.grad_updates_per_round) +
                         static_cast<std::uint64_t>(u));
      for (int i = 0; i < b; ++i) {
        const RolloutTuple& tup = *masked[pick.below(static_cast<std::uint32_t>(masked.size()))];
        inputs(0, i) = tup.x(0);
        inputs(1, i) = tup.x(1);
        inputs(2, i) = tup.t;
        targets(0, i) = tup.reward;
      }
      const Eigen::MatrixXd pred = net_forward_batch(result.value.params, inputs);
      const Eigen::MatrixXd residual = pred - targets;
      const double loss = residual.squaredNorm() / static_cast<double>(b);
      if (!std::isfinite(loss)) throw TrainingError("value loss diverged in round " +
                                                    std::to_string(round));
      loss_acc += loss;
      const Eigen::MatrixXd upstream = (2.0 / static_cast<double>(b)) * residual;
      const BackwardResult back = net_backward_batch(result.value.params, inputs, upstream);
      adam_step(result.value.params, opt, back.param_grads);
    }
    log.loss = loss_acc / static_cast<double>(cfg.grad_updates_per_round);
    result.rounds.push_back(log);
  }
  return result;
}

Checkpoint value_checkpoint(const GuidanceTrainResult& result, const GuidanceConfig& gcfg) {
  Checkpoint ckpt;
  ckpt.spec = result.value.spec;
  ckpt.params = result.value.params;
  ckpt.kind = "value_function";
  ckpt.extras["clip_norm"] = gcfg.clip_norm;
  ckpt.extras["rounds"] = static_cast<double>(result.rounds.size());
  ckpt.extras["converged"] = result.converged ? 1.0 : 0.0;
  ckpt.extras["trajectories_used"] = static_cast<double>(result.trajectories_used);
  return ckpt;
}

ValueFunction value_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "value_function") throw ConfigError("checkpoint is not a value function");
  ValueFunction value{ckpt.spec, ckpt.params, 10.0};
  const auto it = ckpt.extras.find("clip_norm");
  if (it != ckpt.extras.end()) value.clip_norm = it->second;
  return value;
}

}  // namespace carflow
