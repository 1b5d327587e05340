#include <cmath>

#include "carflow/errors.hpp"
#include "carflow/rewards.hpp"
#include "carflow/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace carflow;

namespace {

RewardSet one_term(RewardTerm term) {
  return make_reward_set(benchmark_mixture(), benchmark_labels(), {std::move(term)});
}

}  // namespace

TEST_CASE("goal bump value and gradient at sigma distance") {
  GoalReward goal;
  goal.centers = {{3.0, -1.0}};
  goal.sigma = 2.0;
  const RewardSet set = one_term(goal);

  CHECK(reward_value(set, 0, {3.0, -1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  // at x = c + (sigma, 0): r = e^-1, grad = -(2/sigma) e^-1 (1, 0)
  const Eigen::Vector2d x(5.0, -1.0);
  CHECK(reward_value(set, 0, x) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  const Eigen::Vector2d g = reward_grad(set, 0, x);
  CHECK(g(0) == doctest::Approx(-std::exp(-1.0)).epsilon(1e-12));
  CHECK(g(1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("obstacle bump is the negated goal") {
  ObstacleReward obs;
  obs.centers = {{0.0, 0.0}, {4.0, 0.0}};
  obs.sigma = 2.0;
  const RewardSet set = one_term(obs);
  CHECK(reward_value(set, 0, {0.0, 0.0}) ==
        doctest::Approx(-1.0 - std::exp(-4.0)).epsilon(1e-12));
  // center of a lone bump is a critical point
  ObstacleReward lone;
  lone.centers = {{1.0, 2.0}};
  const RewardSet set2 = one_term(lone);
  CHECK(reward_grad(set2, 0, {1.0, 2.0}).norm() < 1e-15);
}

TEST_CASE("classifier term is the weighted log posterior") {
  ClassifierReward cls;
  cls.classifier = 1;
  cls.target_label = 0;
  cls.weight = 2.5;
  const RewardSet set = one_term(cls);
  const Eigen::Vector2d x(2.0, 3.0);
  const double want =
      2.5 * bayes_log_prob_label(benchmark_mixture(), benchmark_labels(), 1, 0, x);
  CHECK(reward_value(set, 0, x) == doctest::Approx(want).epsilon(1e-12));
  const Eigen::Vector2d g = reward_grad(set, 0, x);
  const Eigen::Vector2d base =
      bayes_log_prob_grad(benchmark_mixture(), benchmark_labels(), 1, 0, x);
  CHECK((g - 2.5 * base).norm() < 1e-12);
}

TEST_CASE("reward set construction validates terms") {
  // empty sets are legal: they drive the unguided coverage cell
  CHECK(make_reward_set(benchmark_mixture(), benchmark_labels(), {}).num_terms() == 0);
  ClassifierReward bad;
  bad.classifier = 7;
  CHECK_THROWS_AS(one_term(bad), ConfigError);
  GoalReward empty;
  CHECK_THROWS_AS(one_term(empty), ConfigError);
  GoalReward neg;
  neg.centers = {{0, 0}};
  neg.sigma = -1.0;
  CHECK_THROWS_AS(one_term(neg), ConfigError);
}

TEST_CASE("classifier_reward_set expands constrained entries in order") {
  const RewardSet set = classifier_reward_set(benchmark_mixture(), benchmark_labels(),
                                              parse_target("10"), 1.0);
  REQUIRE(set.num_terms() == 2);
  const auto& c0 = std::get<ClassifierReward>(set.terms[0]);
  const auto& c1 = std::get<ClassifierReward>(set.terms[1]);
  CHECK(c0.classifier == 0);
  CHECK(c0.target_label == 1);
  CHECK(c1.classifier == 1);
  CHECK(c1.target_label == 0);

  const RewardSet single = classifier_reward_set(benchmark_mixture(), benchmark_labels(),
                                                 parse_target("x0"), 3.0);
  REQUIRE(single.num_terms() == 1);
  CHECK(std::get<ClassifierReward>(single.terms[0]).classifier == 1);
  CHECK(std::get<ClassifierReward>(single.terms[0]).weight == 3.0);
}

TEST_CASE("every term gradient matches finite differences") {
  GoalReward goal;
  goal.centers = {{8.0, 8.0}, {0.0, 10.0}};
  goal.sigma = 3.0;
  ObstacleReward obs;
  obs.centers = {{4.0, 4.0}};
  obs.sigma = 2.0;
  ClassifierReward cls0;
  cls0.classifier = 0;
  cls0.target_label = 1;
  ClassifierReward cls1;
  cls1.classifier = 1;
  cls1.target_label = 0;
  const RewardSet set = make_reward_set(benchmark_mixture(), benchmark_labels(),
                                        {goal, obs, cls0, cls1});

  StreamRng rng(21, stream::kSourceDraw, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Vector2d x(rng.uniform() * 25 - 12, rng.uniform() * 25 - 12);
    for (int term = 0; term < set.num_terms(); ++term) {
      const auto f = [&](const Eigen::Vector2d& p) { return reward_value(set, term, p); };
      const Eigen::Vector2d fd = testutil::fd_grad2(f, x);
      const Eigen::Vector2d an = reward_grad(set, term, x);
      CHECK(testutil::rel_err(Eigen::VectorXd(fd), Eigen::VectorXd(an)) < 1e-6);
    }
  }
}

TEST_CASE("composite eval sums values and keeps per-term gradients") {
  GoalReward goal;
  goal.centers = {{1.0, 1.0}};
  ObstacleReward obs;
  obs.centers = {{-1.0, 2.0}};
  const RewardSet set = make_reward_set(benchmark_mixture(), benchmark_labels(), {goal, obs});
  const Eigen::Vector2d x(0.5, 0.5);
  const CompositeEval ev = composite_value_grad(set, x);
  CHECK(ev.value ==
        doctest::Approx(reward_value(set, 0, x) + reward_value(set, 1, x)).epsilon(1e-14));
  REQUIRE(ev.grads.size() == 2);
  CHECK((ev.grads[0] - reward_grad(set, 0, x)).norm() == 0.0);
  CHECK((ev.grads[1] - reward_grad(set, 1, x)).norm() == 0.0);
}
