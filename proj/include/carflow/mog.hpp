#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace carflow {

/// Isotropic 2-D Gaussian mixture: shared scalar sigma, weights summing to 1.
struct GaussianMixture {
  std::vector<Eigen::Vector2d> means;
  std::vector<double> weights;
  double sigma = 1.0;
};

/// Throws ConfigError unless means/weights sizes match, weights sum to 1
/// (1e-12), every weight is positive and sigma > 0.
void validate(const GaussianMixture& gm);

/// labels[j][k] in {0,1}: ground-truth label of mode k under classifier j.
struct LabelTable {
  std::vector<std::vector<int>> labels;

  int num_classifiers() const { return static_cast<int>(labels.size()); }
  int num_modes() const { return labels.empty() ? 0 : static_cast<int>(labels[0].size()); }
};

void validate(const LabelTable& table, const GaussianMixture& gm);

/// Per-classifier requirement: -1 unconstrained, else required label 0/1.
struct ConstraintTarget {
  std::vector<int> required;

  bool constrained(int j) const { return required[j] >= 0; }
  int num_constrained() const;
};

/// Parses targets like "10", "1x", "x0" ('x' or '_' = unconstrained).
ConstraintTarget parse_target(const std::string& text);
std::string target_name(const ConstraintTarget& target);

/// Modes whose labels match every constrained entry. Unconstrained target
/// matches all modes.
std::vector<int> matching_modes(const LabelTable& table, const ConstraintTarget& target);

/// n draws from the mixture; draw i depends only on (seed, i).
std::vector<Eigen::Vector2d> mog_sample(const GaussianMixture& gm, int n, std::uint64_t seed);

/// The single draw the batch version would put at position `index`.
Eigen::Vector2d mog_sample_at(const GaussianMixture& gm, std::uint64_t seed, std::uint64_t index);

/// log p1(x), evaluated with log-sum-exp (no underflow for any x in range).
double mog_logpdf(const GaussianMixture& gm, const Eigen::Vector2d& x);

/// log p_t(x) of the linear-interpolation marginal at time t:
/// mixture of N(t*mu_k, a_t^2 I) with a_t^2 = (1-t)^2 + t^2 sigma^2.
double mog_logpdf_t(const GaussianMixture& gm, const Eigen::Vector2d& x, double t);

/// Exact Bayes posterior p(y_j = 1 | x) under the mixture + label table.
double bayes_prob(const GaussianMixture& gm, const LabelTable& table, int j,
                  const Eigen::Vector2d& x);

/// p(y_j = label | x); the label-0 case is returned as 1 - p1 so the two
/// probabilities sum to exactly 1.
double bayes_prob_label(const GaussianMixture& gm, const LabelTable& table, int j, int label,
                        const Eigen::Vector2d& x);

/// log p(y_j = label | x) computed in log-space (accurate for tiny posteriors),
/// floored at log(1e-300).
double bayes_log_prob_label(const GaussianMixture& gm, const LabelTable& table, int j,
                            int label, const Eigen::Vector2d& x);

/// d/dx of bayes_log_prob_label; zero when the value sits at the floor.
Eigen::Vector2d bayes_log_prob_grad(const GaussianMixture& gm, const LabelTable& table, int j,
                                    int label, const Eigen::Vector2d& x);

/// Seam for the shift-invariance property: posterior from raw per-mode
/// log-densities (already including log-weights).
double bayes_prob_from_logdens(const std::vector<double>& logdens,
                               const std::vector<int>& labels_row, int label);

/// E[x1 | x_t = x] under the independent linear coupling.
Eigen::Vector2d oracle_terminal_mean(const GaussianMixture& gm, const Eigen::Vector2d& x,
                                     double t);

/// E[x0 | x_t = x].
Eigen::Vector2d oracle_source_mean(const GaussianMixture& gm, const Eigen::Vector2d& x,
                                   double t);

/// Exact marginal velocity E[x1 - x0 | x_t = x]; equals the terminal mean
/// minus the source mean.
Eigen::Vector2d oracle_velocity(const GaussianMixture& gm, const Eigen::Vector2d& x, double t);

/// Ground-truth tilted samples: mixture draws accepted w.p. prod_j p(y_j=c_j|x).
/// Throws InfeasibleTargetError when the acceptance rate vanishes (< 1e-6).
std::vector<Eigen::Vector2d> rejection_sample_posterior(const GaussianMixture& gm,
                                                        const LabelTable& table,
                                                        const ConstraintTarget& target, int n,
                                                        std::uint64_t seed);

/// The benchmark world: three unit-variance modes at (8,8), (8,-8), (0,10),
/// equal weights, and two Bayes classifiers with labels (1,1), (1,0), (0,0).
GaussianMixture benchmark_mixture();
LabelTable benchmark_labels();

}  // namespace carflow
