#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace carflow {

enum class Activation { kTanh, kSoftplus, kRelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;
};

/// Stable hash of a spec's architecture + seed; stored in params so checkpoints
/// can be matched against the config that produced them.
std::uint64_t spec_hash(const NetworkSpec& spec);

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

/// Gradients mirror the parameter layout exactly.
using LayerGrads = std::vector<Layer>;

struct NetworkParams {
  std::vector<Layer> layers;
  Activation activation = Activation::kTanh;  // applied to all but the last layer
  std::uint64_t hash = 0;
};

/// Weights ~ N(0, 1/fan_in) drawn from the (seed, layer) stream, biases zero.
NetworkParams net_init(const NetworkSpec& spec);

std::size_t param_count(const NetworkParams& params);

/// MLP forward pass; hidden layers use params.activation, output layer is linear.
Eigen::VectorXd net_forward(const NetworkParams& params, const Eigen::VectorXd& x);

/// Batched forward; columns are samples.
Eigen::MatrixXd net_forward_batch(const NetworkParams& params, const Eigen::MatrixXd& xs);

struct BackwardResult {
  LayerGrads param_grads;      // d/dtheta sum_i <upstream_i, f(x_i)>
  Eigen::MatrixXd input_grads;  // per-column d/dx_i <upstream_i, f(x_i)>
};

/// Exact reverse-mode gradients for both parameters and inputs. The forward
/// pass is recomputed internally; columns are samples.
BackwardResult net_backward_batch(const NetworkParams& params, const Eigen::MatrixXd& xs,
                                  const Eigen::MatrixXd& upstream);

struct BackwardSingle {
  LayerGrads param_grads;
  Eigen::VectorXd input_grad;
};

BackwardSingle net_backward(const NetworkParams& params, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& upstream);

struct OptimizerState {
  LayerGrads m;  // first moments
  LayerGrads v;  // second moments
  long step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerState adam_init(const NetworkParams& params, double lr);

/// One bias-corrected Adam update in place. Throws NumericError on non-finite grads.
void adam_step(NetworkParams& params, OptimizerState& opt, const LayerGrads& grads);

// ---- checkpoint io ---------------------------------------------------------

struct Checkpoint {
  NetworkSpec spec;
  NetworkParams params;
  std::string kind;  // e.g. "velocity_field", "value_function"
  std::map<std::string, double> extras;
};

/// JSON with full-precision weights; loading the produced text restores the
/// exact same doubles (shortest round-trip decimal representation).
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace carflow
