#pragma once

#include <Eigen/Dense>
#include <vector>

#include "carflow/mog.hpp"

namespace carflow {

/// Precision-to-constraint: percent of samples within 2 sigma of some mode
/// whose labels satisfy the target. With nothing constrained every mode
/// matches, so this doubles as a coverage metric. Throws InfeasibleTargetError
/// when no mode matches.
double metric_pc(const std::vector<Eigen::Vector2d>& samples, const GaussianMixture& gm,
                 const LabelTable& labels, const ConstraintTarget& target);

/// Constraint satisfaction: 100 x mean over samples of the mean posterior
/// probability of the required class over the constrained classifiers.
/// At least one classifier must be constrained.
double metric_cs(const std::vector<Eigen::Vector2d>& samples, const GaussianMixture& gm,
                 const LabelTable& labels, const ConstraintTarget& target);

}  // namespace carflow
