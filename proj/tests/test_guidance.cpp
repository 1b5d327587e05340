#include <cmath>

#include "carflow/errors.hpp"
#include "carflow/guidance.hpp"
#include "carflow/rng.hpp"
#include "doctest.h"

using namespace carflow;

namespace {

const Eigen::Vector2d ex(1.0, 0.0);
const Eigen::Vector2d ey(0.0, 1.0);

Velocity zero_vel() {
  return [](const Eigen::Vector2d&, double) { return Eigen::Vector2d::Zero(); };
}

ValueFunction linear_value(double ax, double ay) {
  // V(x, t) = ax*x1 + ay*x2 via a single linear layer (weights on t are 0)
  ValueFunction v;
  v.spec.input_dim = 3;
  v.spec.output_dim = 1;
  Layer l;
  l.w.resize(1, 3);
  l.w << ax, ay, 0.0;
  l.b = Eigen::VectorXd::Zero(1);
  v.params.layers = {l};
  return v;
}

}  // namespace

TEST_CASE("conflict score on the frozen three-gradient example") {
  // pairs: cos 0, cos -1, cos 0 -> mean -1/3, w_raw 4/3, w 2/3
  const ConflictScore s = conflict_score({ex, ey, -ex}, 0.0);
  CHECK(s.mean_cos == doctest::Approx(-1.0 / 3).epsilon(1e-15));
  CHECK(s.w_raw == doctest::Approx(4.0 / 3).epsilon(1e-15));
  CHECK(s.w == doctest::Approx(2.0 / 3).epsilon(1e-15));
}

TEST_CASE("conflict score conventions and range") {
  CHECK(conflict_score({}, 1e-30).w == 0.0);
  CHECK(conflict_score({}, 1e-30).mean_cos == 1.0);
  CHECK(conflict_score({ex}, 1e-30).w == 0.0);
  CHECK(conflict_score({ex, ex}, 0.0).w_raw == 0.0);
  CHECK(conflict_score({ex, -ex}, 0.0).w_raw == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(conflict_score({ex, -ex}, 0.0).w == 1.0);
  CHECK(conflict_score({ex, ey}, 0.0).w == doctest::Approx(0.5).epsilon(1e-15));
  // zero-norm members contribute a zero damped cosine, not NaN
  const ConflictScore z = conflict_score({ex, Eigen::Vector2d::Zero()}, 1e-30);
  CHECK(z.mean_cos == 0.0);
  CHECK(z.w == 0.5);
  CHECK_THROWS_AS(conflict_score({ex, ey}, -1.0), ConfigError);
}

TEST_CASE("epsilon damping keeps faint aligned gradients aligned") {
  // norms 1e-10 -> pair product 1e-20; with eps 1e-30 the damping factor is ~1,
  // so alignment is still read correctly deep in the saturated regions.
  const Eigen::Vector2d tiny = 1e-10 * ex;
  CHECK(conflict_score({tiny, tiny}, 1e-30).w_raw < 1e-6);
  // a coarse epsilon of the same magnitude as p would wash it out to w = 0.5
  CHECK(conflict_score({tiny, tiny}, 1e-8).w == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("energy dissipation frozen examples and closed form") {
  CHECK(energy_dissipation({ex, -ex}) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(energy_dissipation({ex, ey}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(energy_dissipation({ex, 2 * ex}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(energy_dissipation({}) == 0.0);
  CHECK(energy_dissipation({5 * ey}) == 0.0);

  StreamRng rng(31, stream::kSourceDraw, 0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Eigen::Vector2d> grads;
    const int n = 2 + static_cast<int>(rng.below(4));
    double norm_sum = 0.0;
    Eigen::Vector2d total = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
      grads.emplace_back(rng.normal() * 3, rng.normal() * 3);
      norm_sum += grads.back().norm();
      total += grads.back();
    }
    const double de = energy_dissipation(grads);
    const double closed = norm_sum * norm_sum - total.squaredNorm();
    CHECK(std::abs(de - closed) < 1e-9 * std::max(1.0, closed));
    CHECK(de >= -1e-12);
  }
}

TEST_CASE("pcgrad projects conflicting pairs") {
  StreamRng rng(1, stream::kPcgradShuffle, 0);
  // frozen two-gradient example: {(1,0), (-1,1)} -> (1/2, 3/2)
  const Eigen::Vector2d got = compose_pcgrad({ex, Eigen::Vector2d(-1.0, 1.0)}, rng);
  CHECK(got(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(got(1) == doctest::Approx(1.5).epsilon(1e-15));

  CHECK(compose_pcgrad({ex, -ex}, rng).norm() < 1e-15);           // anti-parallel cancels
  CHECK((compose_pcgrad({ex, ey}, rng) - (ex + ey)).norm() == 0); // aligned passes through
  CHECK((compose_pcgrad({ex, Eigen::Vector2d::Zero()}, rng) - ex).norm() == 0.0);
}

TEST_CASE("pcgrad is deterministic under the stream key") {
  const std::vector<Eigen::Vector2d> grads = {ex, Eigen::Vector2d(-0.8, 0.6), -ey};
  StreamRng a(7, stream::kPcgradShuffle, 3);
  StreamRng b(7, stream::kPcgradShuffle, 3);
  const Eigen::Vector2d ga = compose_pcgrad(grads, a);
  const Eigen::Vector2d gb = compose_pcgrad(grads, b);
  CHECK(ga == gb);
  CHECK(std::isfinite(ga.norm()));
}

TEST_CASE("car blend endpoints are exact") {
  const Eigen::Vector2d g_sum(0.1 + 0.2, -1.0);  // deliberately inexact decimal
  const Eigen::Vector2d g_psi(5.0, 7.0);
  CHECK(compose_car(g_sum, g_psi, 0.0) == g_sum);
  CHECK(compose_car(g_sum, g_psi, 1.0) == g_psi);
  const Eigen::Vector2d mid = compose_car(g_sum, g_psi, 0.5);
  CHECK((mid - 0.5 * (g_sum + g_psi)).norm() < 1e-15);
  CHECK_THROWS_AS(compose_car(g_sum, g_psi, -0.01), ConfigError);
  CHECK_THROWS_AS(compose_car(g_sum, g_psi, 1.01), ConfigError);
}

TEST_CASE("terminal prediction is one Euler step to t=1") {
  const Velocity vel = [](const Eigen::Vector2d& x, double) {
    return Eigen::Vector2d(2 * x(0), -x(1));
  };
  const Eigen::Vector2d x(1.0, 3.0);
  const Eigen::Vector2d want = x + 0.75 * Eigen::Vector2d(2.0, -3.0);
  CHECK((predict_terminal(vel, x, 0.25) - want).norm() < 1e-15);
}

TEST_CASE("per-reward guidance scales gradients at the predicted terminal") {
  GoalReward goal;
  goal.centers = {{5.0, 0.0}};
  const RewardSet set = make_reward_set(benchmark_mixture(), benchmark_labels(), {goal});
  const Eigen::Vector2d x(1.0, 1.0);
  const Velocity vel = [](const Eigen::Vector2d&, double) { return Eigen::Vector2d(2.0, 0.0); };
  const double t = 0.5;
  const Eigen::Vector2d x_hat = x + 0.5 * Eigen::Vector2d(2.0, 0.0);
  const auto grads = per_reward_guidance(vel, set, x, t, 2.5);
  REQUIRE(grads.size() == 1);
  CHECK((grads[0] - 2.5 * reward_grad(set, 0, x_hat)).norm() < 1e-15);
}

TEST_CASE("guidance_step dispatches per engine") {
  GoalReward a;
  a.centers = {{5.0, 0.0}};
  GoalReward b;
  b.centers = {{-5.0, 0.0}};
  const RewardSet set = make_reward_set(benchmark_mixture(), benchmark_labels(), {a, b});
  const Velocity vel = zero_vel();
  const Eigen::Vector2d x(0.0, 1.0);
  GuidanceConfig cfg;
  StreamRng rng(2, stream::kPcgradShuffle, 0);

  cfg.engine = Engine::kNone;
  const GuidanceResult none = guidance_step(vel, RewardSet{}, cfg, nullptr, x, 0.3, rng);
  CHECK(none.g == Eigen::Vector2d::Zero());
  CHECK(none.diag.w == 0.0);
  CHECK(none.diag.mean_cos == 1.0);

  cfg.engine = Engine::kCovG;
  cfg.scale = 2.0;
  const GuidanceResult cov = guidance_step(vel, set, cfg, nullptr, x, 0.3, rng);
  const auto grads = per_reward_guidance(vel, set, x, 0.3, 2.0);
  CHECK((cov.g - (grads[0] + grads[1])).norm() < 1e-15);
  CHECK(cov.diag.w == doctest::Approx(conflict_score(grads, cfg.epsilon).w).epsilon(1e-15));
  CHECK(cov.diag.delta_e == doctest::Approx(energy_dissipation(grads)).epsilon(1e-12));
  REQUIRE(cov.diag.grad_norms.size() == 2);

  cfg.engine = Engine::kPcgrad;
  StreamRng r1(9, stream::kPcgradShuffle, 4);
  StreamRng r2(9, stream::kPcgradShuffle, 4);
  const GuidanceResult p1 = guidance_step(vel, set, cfg, nullptr, x, 0.3, r1);
  const Eigen::Vector2d p2 = compose_pcgrad(grads, r2);
  CHECK(p1.g == p2);

  cfg.engine = Engine::kCar;
  CHECK_THROWS_AS(guidance_step(vel, set, cfg, nullptr, x, 0.3, rng), ConfigError);
  const ValueFunction value = linear_value(3.0, -4.0);
  const GuidanceResult car = guidance_step(vel, set, cfg, &value, x, 0.3, rng);
  const Eigen::Vector2d g_psi = eval_g_psi(value, x, 0.3);
  const double w = conflict_score(grads, cfg.epsilon).w;
  CHECK((car.g - compose_car(grads[0] + grads[1], g_psi, w)).norm() < 1e-14);
}

TEST_CASE("value gradient clipping") {
  const ValueFunction steep = [] {
    ValueFunction v = linear_value(30.0, -40.0);  // gradient norm 50
    v.clip_norm = 10.0;
    return v;
  }();
  const Eigen::Vector2d g = eval_g_psi(steep, {0.7, -0.2}, 0.5);
  CHECK(g.norm() == doctest::Approx(10.0).epsilon(1e-12));
  // direction preserved
  CHECK(g(0) * -40.0 == doctest::Approx(g(1) * 30.0).epsilon(1e-9));

  const ValueFunction mild = linear_value(0.3, 0.4);
  const Eigen::Vector2d gm = eval_g_psi(mild, {1.0, 1.0}, 0.1);
  CHECK(gm == Eigen::Vector2d(0.3, 0.4));
  CHECK_THROWS_AS(clip_to_norm(ex, 0.0), ConfigError);
}
