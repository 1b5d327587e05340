#include "carflow/mog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "carflow/errors.hpp"
#include "carflow/rng.hpp"

namespace carflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogFloor = -690.77552789821368;  // log(1e-300)

double logsumexp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// log w_k + log N(x; c*mu_k, var I) for all modes; the common constant is kept
/// so values are true log-densities.
std::vector<double> log_components(const GaussianMixture& gm, const Eigen::Vector2d& x,
                                   double mean_scale, double var) {
  const double lognorm = -std::log(2.0 * std::numbers::pi * var);
  std::vector<double> out(gm.means.size());
  for (std::size_t k = 0; k < gm.means.size(); ++k)
    out[k] = std::log(gm.weights[k]) + lognorm -
             (x - mean_scale * gm.means[k]).squaredNorm() / (2.0 * var);
  return out;
}

/// Responsibilities over an index subset: softmax of logdens restricted to sel.
/// Returns pairs aligned with sel.
std::vector<double> subset_resp(const std::vector<double>& logdens, const std::vector<int>& sel) {
  double m = kNegInf;
  for (int k : sel) m = std::max(m, logdens[k]);
  std::vector<double> r(sel.size(), 0.0);
  if (m == kNegInf) return r;
  double s = 0.0;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    r[i] = std::exp(logdens[sel[i]] - m);
    s += r[i];
  }
  for (double& v : r) v /= s;
  return r;
}

std::vector<int> all_modes(const GaussianMixture& gm) {
  std::vector<int> idx(gm.means.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<int>(k);
  return idx;
}

std::vector<int> label_modes(const LabelTable& table, int j, int label) {
  std::vector<int> sel;
  for (int k = 0; k < table.num_modes(); ++k)
    if (table.labels[j][k] == label) sel.push_back(k);
  return sel;
}

void check_classifier(const LabelTable& table, int j) {
  if (j < 0 || j >= table.num_classifiers())
    throw ConfigError("classifier index out of range: " + std::to_string(j));
}

// gradient of logsumexp over the subset: -sum_k rho_k (x - mu_k) / sigma^2
Eigen::Vector2d grad_lse(const GaussianMixture& gm, const std::vector<double>& logdens,
                         const std::vector<int>& sel, const Eigen::Vector2d& x) {
  const std::vector<double> rho = subset_resp(logdens, sel);
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  const double inv_var = 1.0 / (gm.sigma * gm.sigma);
  for (std::size_t i = 0; i < sel.size(); ++i)
    g -= rho[i] * inv_var * (x - gm.means[sel[i]]);
  return g;
}

}  // namespace

void validate(const GaussianMixture& gm) {
  if (gm.means.empty()) throw ConfigError("mixture needs at least one mode");
  if (gm.means.size() != gm.weights.size())
    throw ConfigError("mixture means/weights size mismatch");
  if (!(gm.sigma > 0.0)) throw ConfigError("mixture sigma must be positive");
  double s = 0.0;
  for (double w : gm.weights) {
    if (!(w > 0.0)) throw ConfigError("mixture weights must be positive");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
}

void validate(const LabelTable& table, const GaussianMixture& gm) {
  if (table.labels.empty()) throw ConfigError("label table needs at least one classifier");
  for (const auto& row : table.labels) {
    if (row.size() != gm.means.size())
      throw ConfigError("label table row size must equal mode count");
    for (int v : row)
      if (v != 0 && v != 1) throw ConfigError("labels must be 0 or 1");
  }
}

int ConstraintTarget::num_constrained() const {
  int n = 0;
  for (int v : required) n += (v >= 0);
  return n;
}

ConstraintTarget parse_target(const std::string& text) {
  ConstraintTarget t;
  for (char c : text) {
    if (c == '0') t.required.push_back(0);
    else if (c == '1') t.required.push_back(1);
    else if (c == 'x' || c == 'X' || c == '_') t.required.push_back(-1);
    else if (c == '[' || c == ']' || c == ',' || c == ' ') continue;
    else throw ConfigError(std::string("bad target character '") + c + "'");
  }
  if (t.required.empty()) throw ConfigError("empty constraint target");
  return t;
}

std::string target_name(const ConstraintTarget& target) {
  std::string s;
  for (int v : target.required) s += (v < 0) ? 'x' : static_cast<char>('0' + v);
  return s;
}

std::vector<int> matching_modes(const LabelTable& table, const ConstraintTarget& target) {
  if (static_cast<int>(target.required.size()) != table.num_classifiers())
    throw ConfigError("target length must equal classifier count");
  std::vector<int> out;
  for (int k = 0; k < table.num_modes(); ++k) {
    bool ok = true;
    for (int j = 0; j < table.num_classifiers(); ++j)
      if (target.constrained(j) && table.labels[j][k] != target.required[j]) ok = false;
    if (ok) out.push_back(k);
  }
  return out;
}

Eigen::Vector2d mog_sample_at(const GaussianMixture& gm, std::uint64_t seed,
                              std::uint64_t index) {
  StreamRng rng(seed, stream::kMogSample, index);
  const double u = rng.uniform();
  std::size_t k = 0;
  double acc = 0.0;
  for (; k + 1 < gm.weights.size(); ++k) {
    acc += gm.weights[k];
    if (u < acc) break;
  }
  return {gm.means[k].x() + gm.sigma * rng.normal(),
          gm.means[k].y() + gm.sigma * rng.normal()};
}

std::vector<Eigen::Vector2d> mog_sample(const GaussianMixture& gm, int n, std::uint64_t seed) {
  validate(gm);
  if (n < 0) throw ConfigError("sample count must be >= 0");
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(mog_sample_at(gm, seed, static_cast<std::uint64_t>(i)));
  return out;
}

double mog_logpdf(const GaussianMixture& gm, const Eigen::Vector2d& x) {
  return logsumexp(log_components(gm, x, 1.0, gm.sigma * gm.sigma));
}

double mog_logpdf_t(const GaussianMixture& gm, const Eigen::Vector2d& x, double t) {
  const double a2 = (1.0 - t) * (1.0 - t) + t * t * gm.sigma * gm.sigma;
  return logsumexp(log_components(gm, x, t, a2));
}

double bayes_prob_from_logdens(const std::vector<double>& logdens,
                               const std::vector<int>& labels_row, int label) {
  if (logdens.size() != labels_row.size())
    throw DimensionError("logdens/labels size mismatch");
  std::vector<double> sel;
  for (std::size_t k = 0; k < logdens.size(); ++k)
    if (labels_row[k] == 1) sel.push_back(logdens[k]);
  const double lse1 = logsumexp(sel);
  const double lse_all = logsumexp(logdens);
  const double p1 = (lse1 == kNegInf) ? 0.0 : std::exp(lse1 - lse_all);
  return label == 1 ? p1 : 1.0 - p1;
}

double bayes_prob(const GaussianMixture& gm, const LabelTable& table, int j,
                  const Eigen::Vector2d& x) {
  check_classifier(table, j);
  return bayes_prob_from_logdens(log_components(gm, x, 1.0, gm.sigma * gm.sigma),
                                 table.labels[j], 1);
}

double bayes_prob_label(const GaussianMixture& gm, const LabelTable& table, int j, int label,
                        const Eigen::Vector2d& x) {
  check_classifier(table, j);
  return bayes_prob_from_logdens(log_components(gm, x, 1.0, gm.sigma * gm.sigma),
                                 table.labels[j], label);
}

double bayes_log_prob_label(const GaussianMixture& gm, const LabelTable& table, int j,
                            int label, const Eigen::Vector2d& x) {
  check_classifier(table, j);
  const std::vector<double> logdens = log_components(gm, x, 1.0, gm.sigma * gm.sigma);
  std::vector<double> sel;
  for (std::size_t k = 0; k < logdens.size(); ++k)
    if (table.labels[j][k] == label) sel.push_back(logdens[k]);
  const double lse_sel = logsumexp(sel);
  if (lse_sel == kNegInf) return kLogFloor;
  return std::max(lse_sel - logsumexp(logdens), kLogFloor);
}

Eigen::Vector2d bayes_log_prob_grad(const GaussianMixture& gm, const LabelTable& table, int j,
                                    int label, const Eigen::Vector2d& x) {
  check_classifier(table, j);
  if (bayes_log_prob_label(gm, table, j, label, x) <= kLogFloor)
    return Eigen::Vector2d::Zero();  // clamped region: the value is constant
  const std::vector<double> logdens = log_components(gm, x, 1.0, gm.sigma * gm.sigma);
  return grad_lse(gm, logdens, label_modes(table, j, label), x) -
         grad_lse(gm, logdens, all_modes(gm), x);
}

Eigen::Vector2d oracle_terminal_mean(const GaussianMixture& gm, const Eigen::Vector2d& x,
                                     double t) {
  const double s2 = gm.sigma * gm.sigma;
  const double a2 = (1.0 - t) * (1.0 - t) + t * t * s2;
  const std::vector<double> logdens = log_components(gm, x, t, a2);
  const std::vector<int> sel = all_modes(gm);
  const std::vector<double> rho = subset_resp(logdens, sel);
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (std::size_t k = 0; k < gm.means.size(); ++k)
    out += rho[k] * (gm.means[k] + (t * s2 / a2) * (x - t * gm.means[k]));
  return out;
}

Eigen::Vector2d oracle_source_mean(const GaussianMixture& gm, const Eigen::Vector2d& x,
                                   double t) {
  const double s2 = gm.sigma * gm.sigma;
  const double a2 = (1.0 - t) * (1.0 - t) + t * t * s2;
  const std::vector<double> logdens = log_components(gm, x, t, a2);
  const std::vector<int> sel = all_modes(gm);
  const std::vector<double> rho = subset_resp(logdens, sel);
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (std::size_t k = 0; k < gm.means.size(); ++k)
    out += rho[k] * ((1.0 - t) / a2) * (x - t * gm.means[k]);
  return out;
}

Eigen::Vector2d oracle_velocity(const GaussianMixture& gm, const Eigen::Vector2d& x, double t) {
  return oracle_terminal_mean(gm, x, t) - oracle_source_mean(gm, x, t);
}

std::vector<Eigen::Vector2d> rejection_sample_posterior(const GaussianMixture& gm,
                                                        const LabelTable& table,
                                                        const ConstraintTarget& target, int n,
                                                        std::uint64_t seed) {
  validate(gm);
  validate(table, gm);
  if (n < 1) throw ConfigError("need n >= 1");
  if (static_cast<int>(target.required.size()) != table.num_classifiers())
    throw ConfigError("target length must equal classifier count");
  if (target.num_constrained() == 0)
    throw InfeasibleTargetError("rejection sampling needs at least one constrained classifier");

  const std::uint64_t budget =
      std::max<std::uint64_t>(2'000'000, 4000ull * static_cast<std::uint64_t>(n));
  std::vector<Eigen::Vector2d> accepted;
  accepted.reserve(static_cast<std::size_t>(n));
  std::uint64_t draws = 0;
  while (accepted.size() < static_cast<std::size_t>(n)) {
    if (draws >= budget) {
      const double rate = static_cast<double>(accepted.size()) / static_cast<double>(draws);
      throw InfeasibleTargetError("acceptance rate " + std::to_string(rate) +
                                  " too low after " + std::to_string(draws) + " draws");
    }
    StreamRng rng(seed, stream::kRejection, draws);
    ++draws;
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = 0.0;
    for (; k + 1 < gm.weights.size(); ++k) {
      acc += gm.weights[k];
      if (u < acc) break;
    }
    const Eigen::Vector2d x(gm.means[k].x() + gm.sigma * rng.normal(),
                            gm.means[k].y() + gm.sigma * rng.normal());
    double p = 1.0;
    for (int j = 0; j < table.num_classifiers(); ++j)
      if (target.constrained(j)) p *= bayes_prob_label(gm, table, j, target.required[j], x);
    if (rng.uniform() < p) accepted.push_back(x);
    // fail fast on plainly infeasible targets
    if (draws == 2'000'000 && accepted.size() < 2 &&
        static_cast<double>(accepted.size()) / 2e6 < 1e-6)
      throw InfeasibleTargetError("acceptance rate below 1e-6; target has no posterior mass");
  }
  return accepted;
}

GaussianMixture benchmark_mixture() {
  GaussianMixture gm;
  gm.means = {{8.0, 8.0}, {8.0, -8.0}, {0.0, 10.0}};
  gm.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  gm.sigma = 1.0;
  return gm;
}

LabelTable benchmark_labels() {
  // classifier 0: modes 1,2 positive; classifier 1: only mode 1 positive
  return LabelTable{{{1, 1, 0}, {1, 0, 0}}};
}

}  // namespace carflow
