#include "carflow/fields.hpp"

#include "carflow/errors.hpp"

namespace carflow {

namespace {

Eigen::Vector3d stack_xt(const Eigen::Vector2d& x, double t) {
  return Eigen::Vector3d(x(0), x(1), t);
}

}  // namespace

Eigen::Vector2d velocity(const VelocityField& field, const Eigen::Vector2d& x, double t) {
  if (field.spec.input_dim != 3 || field.spec.output_dim != 2)
    throw DimensionError("velocity field must map R^3 -> R^2");
  const Eigen::VectorXd out = net_forward(field.params, stack_xt(x, t));
  return Eigen::Vector2d(out(0), out(1));
}

Velocity velocity_fn(const VelocityField& field) {
  const VelocityField* f = &field;
  return [f](const Eigen::Vector2d& x, double t) { return velocity(*f, x, t); };
}

Velocity oracle_velocity_fn(const GaussianMixture& gm) {
  return [gm](const Eigen::Vector2d& x, double t) { return oracle_velocity(gm, x, t); };
}

double value_of(const ValueFunction& value, const Eigen::Vector2d& x, double t) {
  if (value.spec.input_dim != 3 || value.spec.output_dim != 1)
    throw DimensionError("value net must map R^3 -> R^1");
  return net_forward(value.params, stack_xt(x, t))(0);
}

Eigen::Vector2d value_input_grad(const ValueFunction& value, const Eigen::Vector2d& x, double t) {
  if (value.spec.input_dim != 3 || value.spec.output_dim != 1)
    throw DimensionError("value net must map R^3 -> R^1");
  Eigen::VectorXd upstream = Eigen::VectorXd::Ones(1);
  const BackwardSingle back = net_backward(value.params, stack_xt(x, t), upstream);
  return Eigen::Vector2d(back.input_grad(0), back.input_grad(1));
}

Eigen::Vector2d eval_g_psi(const ValueFunction& value, const Eigen::Vector2d& x, double t) {
  return clip_to_norm(value_input_grad(value, x, t), value.clip_norm);
}

Eigen::Vector2d clip_to_norm(const Eigen::Vector2d& v, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip norm must be positive");
  const double n = v.norm();
  if (n > max_norm) return v * (max_norm / n);
  return v;
}

}  // namespace carflow
