#include "carflow/metrics.hpp"

#include "carflow/errors.hpp"

namespace carflow {

double metric_pc(const std::vector<Eigen::Vector2d>& samples, const GaussianMixture& gm,
                 const LabelTable& labels, const ConstraintTarget& target) {
  if (samples.empty()) throw ConfigError("metric_pc needs samples");
  const std::vector<int> modes = matching_modes(labels, target);
  if (modes.empty()) throw InfeasibleTargetError("no mode satisfies target " + target_name(target));
  const double r = 2.0 * gm.sigma;
  std::size_t hit = 0;
  for (const auto& x : samples) {
    for (int k : modes) {
      if ((x - gm.means[static_cast<std::size_t>(k)]).norm() <= r) {
        ++hit;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(samples.size());
}

double metric_cs(const std::vector<Eigen::Vector2d>& samples, const GaussianMixture& gm,
                 const LabelTable& labels, const ConstraintTarget& target) {
  if (samples.empty()) throw ConfigError("metric_cs needs samples");
  if (target.num_constrained() == 0)
    throw ConfigError("metric_cs needs at least one constrained classifier");
  double acc = 0.0;
  for (const auto& x : samples) {
    double per_sample = 0.0;
    int count = 0;
    for (std::size_t j = 0; j < target.required.size(); ++j) {
      if (!target.constrained(j)) continue;
      per_sample += bayes_prob_label(gm, labels, static_cast<int>(j), target.required[j], x);
      ++count;
    }
    acc += per_sample / static_cast<double>(count);
  }
  return 100.0 * acc / static_cast<double>(samples.size());
}

}  // namespace carflow
