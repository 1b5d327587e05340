#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "carflow/mog.hpp"

namespace carflow {

/// r(x) = -sum_k exp(-||x - c_k||^2 / sigma^2)
struct ObstacleReward {
  std::vector<Eigen::Vector2d> centers;
  double sigma = 2.0;
};

/// r(x) = +sum_k exp(-||x - g_k||^2 / sigma^2)
struct GoalReward {
  std::vector<Eigen::Vector2d> centers;
  double sigma = 2.0;
};

/// r(x) = weight * log p(y_j = target_label | x) under the Bayes posterior.
struct ClassifierReward {
  int classifier = 0;
  int target_label = 1;
  double weight = 1.0;
};

using RewardTerm = std::variant<ObstacleReward, GoalReward, ClassifierReward>;

/// A reward composition plus the mixture/label context classifier terms need.
struct RewardSet {
  GaussianMixture gm;
  LabelTable labels;
  std::vector<RewardTerm> terms;

  int num_terms() const { return static_cast<int>(terms.size()); }
};

/// Validates term parameters against the context; throws ConfigError.
RewardSet make_reward_set(GaussianMixture gm, LabelTable labels, std::vector<RewardTerm> terms);

/// One classifier term per constrained entry of the target, in classifier order.
RewardSet classifier_reward_set(const GaussianMixture& gm, const LabelTable& table,
                                const ConstraintTarget& target, double weight = 1.0);

double reward_value(const RewardSet& set, int term, const Eigen::Vector2d& x);

/// Analytic gradient of a single term.
Eigen::Vector2d reward_grad(const RewardSet& set, int term, const Eigen::Vector2d& x);

struct CompositeEval {
  double value = 0.0;                    // sum of term values
  std::vector<Eigen::Vector2d> grads;    // per-term gradients, in term order
};

/// Total reward value and the per-term gradient list (not pre-summed: the
/// guidance layer needs the individual gradients).
CompositeEval composite_value_grad(const RewardSet& set, const Eigen::Vector2d& x);

}  // namespace carflow
