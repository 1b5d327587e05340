#include <cmath>

#include "carflow/cfm.hpp"
#include "carflow/errors.hpp"
#include "carflow/rng.hpp"
#include "doctest.h"

using namespace carflow;

namespace {

NetworkParams zero_net() {
  NetworkParams p;
  Layer l;
  l.w = Eigen::MatrixXd::Zero(2, 3);
  l.b = Eigen::VectorXd::Zero(2);
  p.layers = {l};
  return p;
}

}  // namespace

TEST_CASE("flow batches reconstruct their endpoints") {
  const GaussianMixture gm = benchmark_mixture();
  const int b = 64;
  const long step = 3;
  const FlowBatch batch = make_flow_batch(gm, b, 17, step);
  REQUIRE(batch.inputs.rows() == 3);
  REQUIRE(batch.inputs.cols() == b);
  REQUIRE(batch.targets.rows() == 2);
  for (int i = 0; i < b; ++i) {
    const double t = batch.inputs(2, i);
    CHECK(t > 0.0);
    CHECK(t < 1.0);
    // x_t + (1-t)(x1-x0) recovers the mixture draw keyed by the global index
    const Eigen::Vector2d xt(batch.inputs(0, i), batch.inputs(1, i));
    const Eigen::Vector2d x1 = xt + (1.0 - t) * batch.targets.col(i);
    const Eigen::Vector2d want =
        mog_sample_at(gm, 17, static_cast<std::uint64_t>(step) * b + i);
    CHECK((x1 - want).norm() < 1e-12);
  }
}

TEST_CASE("flow batches are deterministic in (seed, step)") {
  const GaussianMixture gm = benchmark_mixture();
  const FlowBatch a = make_flow_batch(gm, 32, 9, 5);
  const FlowBatch b = make_flow_batch(gm, 32, 9, 5);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  const FlowBatch c = make_flow_batch(gm, 32, 9, 6);
  CHECK(a.inputs != c.inputs);
  CHECK_THROWS_AS(make_flow_batch(gm, 0, 9, 5), ConfigError);
}

TEST_CASE("zero-velocity loss sits at the analytic baseline") {
  // E||x1 - x0||^2 = E||x1||^2 + E||x0||^2 = (mean mode norm^2 + 2 sigma^2) + 2
  //                = (128 + 128 + 100)/3 + 2 + 2 = 122.667
  const GaussianMixture gm = benchmark_mixture();
  const double loss = cfm_batch_loss(zero_net(), gm, 8192, 23, 0);
  CHECK(loss == doctest::Approx(122.6667).epsilon(0.05));
}

TEST_CASE("batch loss matches a direct forward evaluation") {
  const GaussianMixture gm = benchmark_mixture();
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {8};
  spec.output_dim = 2;
  spec.seed = 4;
  const NetworkParams p = net_init(spec);
  const FlowBatch batch = make_flow_batch(gm, 50, 3, 2);
  const double want =
      (net_forward_batch(p, batch.inputs) - batch.targets).squaredNorm() / 50.0;
  CHECK(cfm_batch_loss(p, gm, 50, 3, 2) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("short training run reduces the loss and logs the curve") {
  FlowTrainConfig cfg;
  cfg.batch_size = 64;
  cfg.steps = 400;
  cfg.curve_every = 100;
  cfg.hidden_dims = {16, 16};
  cfg.seed = 1;
  const FlowTrainResult res = train_flow(benchmark_mixture(), cfg);
  REQUIRE(res.curve.size() == 5);  // steps 0,100,200,300 plus the final point
  CHECK(res.curve.front().step == 0);
  CHECK(res.curve.back().step == 400);
  CHECK(res.curve.back().loss == res.final_loss);
  CHECK(res.final_loss < 0.7 * res.curve.front().loss);
  CHECK(res.final_loss < 80.0);

  // same config, same weights
  const FlowTrainResult res2 = train_flow(benchmark_mixture(), cfg);
  CHECK(res2.final_loss == res.final_loss);
  for (std::size_t li = 0; li < res.field.params.layers.size(); ++li)
    CHECK(res.field.params.layers[li].w == res2.field.params.layers[li].w);
}

TEST_CASE("velocity checkpoints restore the exact field") {
  FlowTrainConfig cfg;
  cfg.batch_size = 32;
  cfg.steps = 50;
  cfg.hidden_dims = {8};
  cfg.seed = 2;
  const FlowTrainResult res = train_flow(benchmark_mixture(), cfg);
  const Checkpoint ckpt = velocity_checkpoint(res, cfg);
  CHECK(ckpt.kind == "velocity_field");
  CHECK(ckpt.extras.at("steps") == 50.0);

  const VelocityField back = velocity_from_checkpoint(checkpoint_from_json(
      checkpoint_to_json(ckpt)));
  for (double t : {0.0, 0.4, 1.0}) {
    const Eigen::Vector2d x(0.7, -1.1);
    CHECK(velocity(back, x, t) == velocity(res.field, x, t));
  }

  Checkpoint wrong = ckpt;
  wrong.kind = "value_function";
  CHECK_THROWS_AS(velocity_from_checkpoint(wrong), ConfigError);
}
