#include "carflow/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "carflow/errors.hpp"

namespace carflow {

std::string engine_name(Engine e) {
  switch (e) {
    case Engine::kNone: return "none";
    case Engine::kCovG: return "cov_g";
    case Engine::kPcgrad: return "pcgrad";
    case Engine::kCar: return "car";
  }
  throw ConfigError("bad engine enum");
}

Engine engine_from_name(const std::string& name) {
  if (name == "none") return Engine::kNone;
  if (name == "cov_g") return Engine::kCovG;
  if (name == "pcgrad") return Engine::kPcgrad;
  if (name == "car") return Engine::kCar;
  throw ConfigError("unknown guidance engine: " + name);
}

Eigen::Vector2d predict_terminal(const Velocity& vel, const Eigen::Vector2d& x, double t) {
  return x + (1.0 - t) * vel(x, t);
}

std::vector<Eigen::Vector2d> per_reward_guidance(const Velocity& vel, const RewardSet& rewards,
                                                 const Eigen::Vector2d& x, double t, double scale) {
  const Eigen::Vector2d x_hat = predict_terminal(vel, x, t);
  std::vector<Eigen::Vector2d> grads;
  grads.reserve(rewards.terms.size());
  for (int j = 0; j < rewards.num_terms(); ++j)
    grads.push_back(scale * reward_grad(rewards, j, x_hat));
  return grads;
}

namespace {

// Damped cosine used by the conflict score: cos * p / (p + eps) with
// p = ||a|| ||b||. Vanishing-norm pairs contribute 0 rather than NaN.
double damped_cos(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double eps) {
  const double p = a.norm() * b.norm();
  if (p == 0.0) return 0.0;
  const double cos = std::clamp(a.dot(b) / p, -1.0, 1.0);
  return cos * (p / (p + eps));
}

}  // namespace

ConflictScore conflict_score(const std::vector<Eigen::Vector2d>& grads, double epsilon) {
  if (epsilon < 0.0) throw ConfigError("conflict epsilon must be >= 0");
  ConflictScore out;
  const std::size_t n = grads.size();
  if (n < 2) return out;  // w = 0, mean_cos = 1 by convention
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k) acc += damped_cos(grads[j], grads[k], epsilon);
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  out.mean_cos = acc / pairs;
  out.w_raw = 1.0 - out.mean_cos;
  out.w = std::clamp(0.5 * out.w_raw, 0.0, 1.0);
  return out;
}

double energy_dissipation(const std::vector<Eigen::Vector2d>& grads) {
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < grads.size(); ++j) {
    for (std::size_t k = j + 1; k < grads.size(); ++k) {
      const double p = grads[j].norm() * grads[k].norm();
      if (p == 0.0) continue;
      const double cos = std::clamp(grads[j].dot(grads[k]) / p, -1.0, 1.0);
      acc += p * (1.0 - cos);
    }
  }
  return 2.0 * acc;
}

Eigen::Vector2d compose_sum(const std::vector<Eigen::Vector2d>& grads) {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const auto& gi : grads) g += gi;
  return g;
}

Eigen::Vector2d compose_pcgrad(const std::vector<Eigen::Vector2d>& grads, StreamRng& rng) {
  const std::size_t n = grads.size();
  Eigen::Vector2d total = Eigen::Vector2d::Zero();
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) {
    Eigen::Vector2d gj = grads[j];
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    // Fisher-Yates; a fresh shuffle per projected gradient.
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
    for (std::size_t k : order) {
      if (k == j) continue;
      const double nk2 = grads[k].squaredNorm();
      if (nk2 == 0.0) continue;
      const double dot = gj.dot(grads[k]);
      if (dot < 0.0) gj -= (dot / nk2) * grads[k];
    }
    total += gj;
  }
  return total;
}

Eigen::Vector2d compose_car(const Eigen::Vector2d& g_sum, const Eigen::Vector2d& g_psi, double w) {
  if (w < 0.0 || w > 1.0) throw ConfigError("car blend weight outside [0, 1]");
  if (w == 0.0) return g_sum;
  if (w == 1.0) return g_psi;
  return g_sum + w * (g_psi - g_sum);
}

GuidanceResult guidance_step(const Velocity& vel, const RewardSet& rewards,
                             const GuidanceConfig& cfg, const ValueFunction* value,
                             const Eigen::Vector2d& x, double t, StreamRng& rng) {
  GuidanceResult out;
  if (cfg.engine == Engine::kNone) return out;  // never touches the rewards

  const std::vector<Eigen::Vector2d> grads = per_reward_guidance(vel, rewards, x, t, cfg.scale);
  const ConflictScore score = conflict_score(grads, cfg.epsilon);
  out.diag.w_raw = score.w_raw;
  out.diag.w = score.w;
  out.diag.mean_cos = score.mean_cos;
  out.diag.delta_e = energy_dissipation(grads);
  out.diag.grad_norms.reserve(grads.size());
  for (const auto& g : grads) out.diag.grad_norms.push_back(g.norm());

  switch (cfg.engine) {
    case Engine::kCovG:
      out.g = compose_sum(grads);
      break;
    case Engine::kPcgrad:
      out.g = compose_pcgrad(grads, rng);
      break;
    case Engine::kCar: {
      if (value == nullptr) throw ConfigError("car engine needs a trained value function");
      const Eigen::Vector2d g_psi = eval_g_psi(*value, x, t);
      out.g = compose_car(compose_sum(grads), g_psi, score.w);
      break;
    }
    case Engine::kNone:
      break;  // unreachable
  }
  return out;
}

}  // namespace carflow
