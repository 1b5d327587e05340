#include "carflow/cfm.hpp"

#include <cmath>

#include "carflow/errors.hpp"
#include "carflow/rng.hpp"

namespace carflow {

FlowBatch make_flow_batch(const GaussianMixture& gm, int batch_size, std::uint64_t seed,
                          long step) {
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  FlowBatch batch;
  batch.inputs.resize(3, batch_size);
  batch.targets.resize(2, batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const std::uint64_t idx =
        static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
        static_cast<std::uint64_t>(i);
    const Eigen::Vector2d x1 = mog_sample_at(gm, seed, idx);
    StreamRng src(seed, stream::kSourceDraw, idx);
    const Eigen::Vector2d x0(src.normal(), src.normal());
    StreamRng tdraw(seed, stream::kCfmBatch, idx);
    const double t = tdraw.uniform();
    const Eigen::Vector2d xt = (1.0 - t) * x0 + t * x1;
    batch.inputs(0, i) = xt(0);
    batch.inputs(1, i) = xt(1);
    batch.inputs(2, i) = t;
    batch.targets.col(i) = x1 - x0;
  }
  return batch;
}

double cfm_batch_loss(const NetworkParams& params, const GaussianMixture& gm, int batch_size,
                      std::uint64_t seed, long step) {
  const FlowBatch batch = make_flow_batch(gm, batch_size, seed, step);
  const Eigen::MatrixXd pred = net_forward_batch(params, batch.inputs);
  return (pred - batch.targets).squaredNorm() / static_cast<double>(batch_size);
}

FlowTrainResult train_flow(const GaussianMixture& gm, const FlowTrainConfig& cfg) {
  validate(gm);
  if (cfg.steps <= 0) throw ConfigError("flow training needs steps > 0");
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = cfg.hidden_dims;
  spec.output_dim = 2;
  spec.activation = cfg.activation;
  spec.seed = cfg.seed;

  FlowTrainResult result;
  result.field.spec = spec;
  result.field.params = net_init(spec);
  OptimizerState opt = adam_init(result.field.params, cfg.lr);

  const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
  for (long step = 0; step < cfg.steps; ++step) {
    // cosine decay to 5% of the base lr; a constant 1e-3 keeps the loss
    // bouncing around the CFM floor instead of settling into the field
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps);
    opt.lr = cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac)));
    const FlowBatch batch = make_flow_batch(gm, cfg.batch_size, cfg.seed, step);
    const Eigen::MatrixXd pred = net_forward_batch(result.field.params, batch.inputs);
    const Eigen::MatrixXd residual = pred - batch.targets;
    const double loss = residual.squaredNorm() * inv_b;
    if (!std::isfinite(loss) || loss > 1e6)
      throw TrainingError("flow loss diverged at step " + std::to_string(step));
    if (step % cfg.curve_every == 0) result.curve.push_back({step, loss});
    const Eigen::MatrixXd upstream = (2.0 * inv_b) * residual;
    const BackwardResult back = net_backward_batch(result.field.params, batch.inputs, upstream);
    adam_step(result.field.params, opt, back.param_grads);
    result.final_loss = loss;
  }
  result.curve.push_back({cfg.steps, result.final_loss});
  return result;
}

Checkpoint velocity_checkpoint(const FlowTrainResult& result, const FlowTrainConfig& cfg) {
  Checkpoint ckpt;
  ckpt.spec = result.field.spec;
  ckpt.params = result.field.params;
  ckpt.kind = "velocity_field";
  ckpt.extras["final_loss"] = result.final_loss;
  ckpt.extras["steps"] = static_cast<double>(cfg.steps);
  ckpt.extras["batch_size"] = static_cast<double>(cfg.batch_size);
  return ckpt;
}

VelocityField velocity_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "velocity_field") throw ConfigError("checkpoint is not a velocity field");
  return VelocityField{ckpt.spec, ckpt.params};
}

}  // namespace carflow
