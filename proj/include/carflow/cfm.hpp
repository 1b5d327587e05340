#pragma once

#include <cstdint>
#include <vector>

#include "carflow/fields.hpp"
#include "carflow/mog.hpp"
#include "carflow/nn.hpp"

namespace carflow {

struct FlowTrainConfig {
  int batch_size = 256;
  int steps = 30000;
  double lr = 1e-3;
  int curve_every = 100;  // loss-curve sampling stride
  std::uint64_t seed = 0;
  std::vector<int> hidden_dims = {64, 64};
  Activation activation = Activation::kTanh;
};

struct CurvePoint {
  long step = 0;
  double loss = 0.0;
};

struct FlowTrainResult {
  VelocityField field;
  std::vector<CurvePoint> curve;
  double final_loss = 0.0;
};

/// The regression batch for one optimizer step, all keyed by (seed, step):
/// x1 ~ mixture, x0 ~ N(0, I), t ~ U(0, 1), x_t on the straight path, and the
/// target x1 - x0. Columns are samples; inputs stack (x_t, t).
struct FlowBatch {
  Eigen::MatrixXd inputs;   // 3 x B
  Eigen::MatrixXd targets;  // 2 x B
};

FlowBatch make_flow_batch(const GaussianMixture& gm, int batch_size, std::uint64_t seed, long step);

/// Mean squared velocity-matching error of `params` on the (seed, step) batch.
double cfm_batch_loss(const NetworkParams& params, const GaussianMixture& gm, int batch_size,
                      std::uint64_t seed, long step);

/// Adam on the conditional flow-matching loss. Throws TrainingError if the
/// loss diverges (non-finite or > 1e6).
FlowTrainResult train_flow(const GaussianMixture& gm, const FlowTrainConfig& cfg);

Checkpoint velocity_checkpoint(const FlowTrainResult& result, const FlowTrainConfig& cfg);
VelocityField velocity_from_checkpoint(const Checkpoint& ckpt);

}  // namespace carflow
