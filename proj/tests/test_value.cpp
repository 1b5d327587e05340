#include <cmath>

#include "carflow/errors.hpp"
#include "carflow/value.hpp"
#include "doctest.h"

using namespace carflow;

namespace {

Velocity zero_vel() {
  return [](const Eigen::Vector2d&, double) { return Eigen::Vector2d::Zero(); };
}

Velocity const_vel(double vx, double vy) {
  return [vx, vy](const Eigen::Vector2d&, double) { return Eigen::Vector2d(vx, vy); };
}

RewardSet goals(std::vector<Eigen::Vector2d> centers_a,
                std::vector<Eigen::Vector2d> centers_b = {}) {
  std::vector<RewardTerm> terms;
  GoalReward a;
  a.centers = std::move(centers_a);
  terms.push_back(a);
  if (!centers_b.empty()) {
    GoalReward b;
    b.centers = std::move(centers_b);
    terms.push_back(b);
  }
  return make_reward_set(benchmark_mixture(), benchmark_labels(), std::move(terms));
}

NetworkParams zero_value_net() {
  NetworkParams p;
  Layer l;
  l.w = Eigen::MatrixXd::Zero(1, 3);
  l.b = Eigen::VectorXd::Zero(1);
  p.layers = {l};
  return p;
}

}  // namespace

TEST_CASE("rollout collection flattens trajectories into (steps+1) tuples each") {
  const RewardSet set = goals({{4.0, 0.0}});
  GuidanceConfig gcfg;
  gcfg.engine = Engine::kNone;
  std::size_t attempted = 0, term_conf = 0, max_conf = 0;
  const auto tuples = collect_rollouts(const_vel(1.0, 0.0), set, gcfg, nullptr, 3, 10, 5, 0,
                                       &attempted, &term_conf, &max_conf, 0.5);
  REQUIRE(tuples.size() == 33);
  CHECK(attempted == 3);
  CHECK(term_conf == 0);  // single reward term never conflicts
  CHECK(max_conf == 0);

  for (int traj = 0; traj < 3; ++traj) {
    const std::size_t base = static_cast<std::size_t>(traj) * 11;
    const RolloutTuple& boundary = tuples[base + 10];
    CHECK(boundary.t == 1.0);
    CHECK(boundary.x == boundary.x1);
    // constant velocity (1,0): terminal is start + (1,0)
    CHECK((boundary.x1 - (tuples[base].x + Eigen::Vector2d(1, 0))).norm() < 1e-12);
    for (int s = 0; s <= 10; ++s) {
      const RolloutTuple& tup = tuples[base + static_cast<std::size_t>(s)];
      CHECK(tup.t == doctest::Approx(s / 10.0).epsilon(1e-15));
      CHECK(tup.x1 == boundary.x1);
      CHECK(tup.reward ==
            doctest::Approx(composite_value_grad(set, boundary.x1).value).epsilon(1e-14));
    }
  }
}

TEST_CASE("opposing goals mark every trajectory as conflicted") {
  const RewardSet set = goals({{5.0, 0.0}}, {{-5.0, 0.0}});
  GuidanceConfig gcfg;
  gcfg.engine = Engine::kCovG;  // collection honors whatever engine it is given
  std::size_t attempted = 0, term_conf = 0, max_conf = 0;
  const auto tuples = collect_rollouts(zero_vel(), set, gcfg, nullptr, 8, 6, 2, 0, &attempted,
                                       &term_conf, &max_conf, 0.5);
  CHECK(tuples.size() == 8 * 7);
  // standard-normal starts sit between the bumps, where the pulls oppose
  CHECK(term_conf >= 6);
  CHECK(max_conf >= term_conf);
}

TEST_CASE("regression loss masks on conflict score and the boundary") {
  // two stacked bumps at the origin give r(0,0) = 2; V identically 0
  const RewardSet set = goals({{0.0, 0.0}}, {{0.0, 0.0}});
  const NetworkParams params = zero_value_net();
  const Eigen::Vector2d origin(0, 0);

  std::vector<RolloutTuple> tuples;
  tuples.push_back({origin, 0.5, origin, 0.9, 2.0});  // masked by w
  CHECK(tvr_loss(params, tuples, set, 0.5) == doctest::Approx(4.0).epsilon(1e-12));

  tuples[0].w = 0.3;  // below tau, not boundary -> empty mask
  CHECK(tvr_loss(params, tuples, set, 0.5) == 0.0);

  tuples.push_back({origin, 1.0, origin, 0.0, 2.0});  // boundary always counts
  CHECK(tvr_loss(params, tuples, set, 0.5) == doctest::Approx(4.0).epsilon(1e-12));

  // the reward is recomputed from x1, not read from the cached field
  tuples[1].reward = -123.0;
  CHECK(tvr_loss(params, tuples, set, 0.5) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("aligned rewards stop guidance training in the first round") {
  const RewardSet set = goals({{3.0, 0.0}}, {{3.0, 0.0}});
  GuidanceConfig gcfg;
  GuidanceTrainConfig cfg;
  cfg.rounds_max = 4;
  cfg.rollouts_per_round = 16;
  cfg.rollout_steps = 5;
  cfg.grad_updates_per_round = 10;
  cfg.batch_size = 32;
  cfg.hidden_dims = {8};
  cfg.seed = 3;
  const GuidanceTrainResult res = train_guidance(zero_vel(), set, gcfg, cfg);
  CHECK(res.converged);
  REQUIRE(res.rounds.size() == 1);
  CHECK(res.rounds[0].conflict_fraction == 0.0);
  CHECK(res.rounds[0].loss == 0.0);  // stopped before any update
  CHECK(res.trajectories_used == 16);
}

TEST_CASE("conflicting rewards run the full loop deterministically") {
  const RewardSet set = goals({{3.0, 0.0}}, {{-3.0, 0.0}});
  GuidanceConfig gcfg;
  gcfg.scale = 1.0;
  GuidanceTrainConfig cfg;
  cfg.rounds_max = 3;
  cfg.rollouts_per_round = 24;
  cfg.rollout_steps = 8;
  cfg.grad_updates_per_round = 15;
  cfg.batch_size = 32;
  cfg.hidden_dims = {8, 8};
  cfg.seed = 7;

  const GuidanceTrainResult res = train_guidance(zero_vel(), set, gcfg, cfg);
  REQUIRE(!res.rounds.empty());
  CHECK(res.rounds[0].round == 0);
  CHECK(res.rounds[0].conflict_fraction > 0.5);  // opposing pulls around the origin
  for (std::size_t i = 0; i < res.rounds.size(); ++i) {
    CHECK(res.rounds[i].round == static_cast<int>(i));
    CHECK(res.rounds[i].trajectories_consumed == 24 * (static_cast<long>(i) + 1));
    CHECK(std::isfinite(res.rounds[i].loss));
  }
  CHECK(res.trajectories_used == res.rounds.back().trajectories_consumed);

  const GuidanceTrainResult again = train_guidance(zero_vel(), set, gcfg, cfg);
  REQUIRE(again.rounds.size() == res.rounds.size());
  for (std::size_t i = 0; i < res.rounds.size(); ++i) {
    CHECK(again.rounds[i].conflict_fraction == res.rounds[i].conflict_fraction);
    CHECK(again.rounds[i].loss == res.rounds[i].loss);
  }
}

TEST_CASE("value checkpoints keep the clip norm and restore exactly") {
  const RewardSet set = goals({{3.0, 0.0}}, {{3.0, 0.0}});
  GuidanceConfig gcfg;
  gcfg.clip_norm = 7.5;
  GuidanceTrainConfig cfg;
  cfg.rounds_max = 1;
  cfg.rollouts_per_round = 8;
  cfg.rollout_steps = 4;
  cfg.grad_updates_per_round = 5;
  cfg.batch_size = 16;
  cfg.hidden_dims = {8};
  cfg.seed = 1;
  const GuidanceTrainResult res = train_guidance(zero_vel(), set, gcfg, cfg);
  const Checkpoint ckpt = value_checkpoint(res, gcfg);
  CHECK(ckpt.kind == "value_function");
  CHECK(ckpt.extras.at("trajectories_used") == static_cast<double>(res.trajectories_used));

  const ValueFunction back = value_from_checkpoint(checkpoint_from_json(
      checkpoint_to_json(ckpt)));
  CHECK(back.clip_norm == 7.5);
  const Eigen::Vector2d x(0.4, -0.9);
  CHECK(value_of(back, x, 0.25) == value_of(res.value, x, 0.25));
  CHECK(value_input_grad(back, x, 0.25) == value_input_grad(res.value, x, 0.25));

  Checkpoint wrong = ckpt;
  wrong.kind = "velocity_field";
  CHECK_THROWS_AS(value_from_checkpoint(wrong), ConfigError);
}
