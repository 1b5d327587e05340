#include "carflow/rewards.hpp"

#include <cmath>

#include "carflow/errors.hpp"

namespace carflow {

namespace {

void validate_term(const RewardTerm& term, const RewardSet& set) {
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ClassifierReward>) {
          if (t.classifier < 0 || t.classifier >= set.labels.num_classifiers())
            throw ConfigError("classifier reward references unknown classifier");
          if (t.target_label != 0 && t.target_label != 1)
            throw ConfigError("classifier target label must be 0 or 1");
          if (!(t.weight > 0.0)) throw ConfigError("classifier reward weight must be positive");
        } else {
          if (t.centers.empty()) throw ConfigError("bump reward needs at least one center");
          if (!(t.sigma > 0.0)) throw ConfigError("bump reward sigma must be positive");
        }
      },
      term);
}

// sum_k exp(-||x-c||^2/s^2) and its gradient -sum_k (2(x-c)/s^2) exp(...)
struct BumpEval {
  double value;
  Eigen::Vector2d grad;
};

BumpEval bump(const std::vector<Eigen::Vector2d>& centers, double sigma,
              const Eigen::Vector2d& x) {
  BumpEval out{0.0, Eigen::Vector2d::Zero()};
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (const Eigen::Vector2d& c : centers) {
    const double e = std::exp(-(x - c).squaredNorm() * inv_s2);
    out.value += e;
    out.grad -= 2.0 * inv_s2 * e * (x - c);
  }
  return out;
}

}  // namespace

RewardSet make_reward_set(GaussianMixture gm, LabelTable labels, std::vector<RewardTerm> terms) {
  validate(gm);
  if (!labels.labels.empty()) validate(labels, gm);
  RewardSet set{std::move(gm), std::move(labels), std::move(terms)};
  for (const RewardTerm& t : set.terms) validate_term(t, set);
  return set;
}

RewardSet classifier_reward_set(const GaussianMixture& gm, const LabelTable& table,
                                const ConstraintTarget& target, double weight) {
  if (static_cast<int>(target.required.size()) != table.num_classifiers())
    throw ConfigError("target length must equal classifier count");
  std::vector<RewardTerm> terms;
  for (int j = 0; j < table.num_classifiers(); ++j)
    if (target.constrained(j))
      terms.push_back(ClassifierReward{j, target.required[j], weight});
  return make_reward_set(gm, table, std::move(terms));
}

double reward_value(const RewardSet& set, int term, const Eigen::Vector2d& x) {
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ObstacleReward>) {
          return -bump(t.centers, t.sigma, x).value;
        } else if constexpr (std::is_same_v<T, GoalReward>) {
          return bump(t.centers, t.sigma, x).value;
        } else {
          return t.weight * bayes_log_prob_label(set.gm, set.labels, t.classifier,
                                                 t.target_label, x);
        }
      },
      set.terms.at(static_cast<std::size_t>(term)));
}

Eigen::Vector2d reward_grad(const RewardSet& set, int term, const Eigen::Vector2d& x) {
  return std::visit(
      [&](const auto& t) -> Eigen::Vector2d {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ObstacleReward>) {
          return -bump(t.centers, t.sigma, x).grad;
        } else if constexpr (std::is_same_v<T, GoalReward>) {
          return bump(t.centers, t.sigma, x).grad;
        } else {
          return t.weight *
                 bayes_log_prob_grad(set.gm, set.labels, t.classifier, t.target_label, x);
        }
      },
      set.terms.at(static_cast<std::size_t>(term)));
}

CompositeEval composite_value_grad(const RewardSet& set, const Eigen::Vector2d& x) {
  CompositeEval out;
  out.grads.reserve(set.terms.size());
  for (int i = 0; i < set.num_terms(); ++i) {
    out.value += reward_value(set, i, x);
    out.grads.push_back(reward_grad(set, i, x));
  }
  return out;
}

}  // namespace carflow
