#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "carflow/fields.hpp"
#include "carflow/rewards.hpp"
#include "carflow/rng.hpp"

namespace carflow {

enum class Engine { kNone, kCovG, kPcgrad, kCar };

std::string engine_name(Engine e);
Engine engine_from_name(const std::string& name);

struct GuidanceConfig {
  Engine engine = Engine::kNone;
  double scale = 1.0;               // s in g_j = s * grad r_j(x_hat)
  double conflict_threshold = 0.5;  // tau for the value trainer's relevance mask
  double clip_norm = 10.0;          // cap on ||g_psi||
  double epsilon = 1e-30;           // zero-norm guard in the cosine denominator
};

/// Per-step conflict diagnostics, also streamed into diagnostics.csv.
struct StepDiagnostics {
  double w_raw = 0.0;
  double w = 0.0;        // clamp(w_raw / 2, 0, 1)
  double delta_e = 0.0;  // additive-composition energy dissipation
  double mean_cos = 1.0; // mean damped pairwise cosine; 1 when fewer than 2 terms
  std::vector<double> grad_norms;
};

struct GuidanceResult {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  StepDiagnostics diag;
};

/// One-step terminal prediction x + (1 - t) v(x, t).
Eigen::Vector2d predict_terminal(const Velocity& vel, const Eigen::Vector2d& x, double t);

/// g_j = scale * grad r_j evaluated at the predicted terminal point. The
/// gradient is taken at x_hat only; no differentiation through the velocity.
std::vector<Eigen::Vector2d> per_reward_guidance(const Velocity& vel, const RewardSet& rewards,
                                                 const Eigen::Vector2d& x, double t, double scale);

struct ConflictScore {
  double w_raw = 0.0;
  double w = 0.0;
  double mean_cos = 1.0;
};

/// w_raw = 1 - mean over pairs of cos(g_j, g_k) * p / (p + epsilon) with
/// p = ||g_j|| ||g_k||; w clamps w_raw / 2 to [0, 1]. Fewer than two terms
/// score zero conflict.
ConflictScore conflict_score(const std::vector<Eigen::Vector2d>& grads, double epsilon);

/// delta_E = 2 sum_{j<k} ||g_j|| ||g_k|| (1 - cos) >= 0; equals
/// (sum ||g_j||)^2 - ||sum g_j||^2.
double energy_dissipation(const std::vector<Eigen::Vector2d>& grads);

Eigen::Vector2d compose_sum(const std::vector<Eigen::Vector2d>& grads);

/// Projects each gradient off the conflicting originals, visiting the others
/// in an rng-shuffled order per gradient, then sums.
Eigen::Vector2d compose_pcgrad(const std::vector<Eigen::Vector2d>& grads, StreamRng& rng);

/// (1 - w) g_sum + w g_psi, exact at the w = 0 and w = 1 endpoints.
Eigen::Vector2d compose_car(const Eigen::Vector2d& g_sum, const Eigen::Vector2d& g_psi, double w);

/// Full per-step guidance for one state. Engine kNone short-circuits to zero
/// without evaluating any reward. kCar requires a value function. The rng is
/// consumed only by kPcgrad's shuffles.
GuidanceResult guidance_step(const Velocity& vel, const RewardSet& rewards,
                             const GuidanceConfig& cfg, const ValueFunction* value,
                             const Eigen::Vector2d& x, double t, StreamRng& rng);

}  // namespace carflow
