#pragma once

#include <Eigen/Dense>
#include <functional>

#include "carflow/mog.hpp"
#include "carflow/nn.hpp"

namespace carflow {

/// Any velocity source the sampler/guidance can integrate: (x, t) -> dx/dt.
using Velocity = std::function<Eigen::Vector2d(const Eigen::Vector2d&, double)>;

/// Learned marginal velocity field: MLP over (x1, x2, t), output 2-D.
struct VelocityField {
  NetworkSpec spec;
  NetworkParams params;
};

Eigen::Vector2d velocity(const VelocityField& field, const Eigen::Vector2d& x, double t);

/// Wraps the field; the field must outlive the returned callable.
Velocity velocity_fn(const VelocityField& field);

/// Exact mixture velocity as a callable (for oracle-driven sampling in tests).
Velocity oracle_velocity_fn(const GaussianMixture& gm);

/// Learned scalar value net V(x, t); its x-gradient is the learned guidance
/// term, norm-clipped at clip_norm. Being a gradient field it is curl-free by
/// construction.
struct ValueFunction {
  NetworkSpec spec;
  NetworkParams params;
  double clip_norm = 10.0;
};

double value_of(const ValueFunction& value, const Eigen::Vector2d& x, double t);

/// Unclipped d V / dx (exact reverse-mode input gradient).
Eigen::Vector2d value_input_grad(const ValueFunction& value, const Eigen::Vector2d& x, double t);

/// Norm-clipped learned guidance g_psi(x, t).
Eigen::Vector2d eval_g_psi(const ValueFunction& value, const Eigen::Vector2d& x, double t);

/// Rescales v to norm max_norm when ||v|| > max_norm, else returns v unchanged.
Eigen::Vector2d clip_to_norm(const Eigen::Vector2d& v, double max_norm);

}  // namespace carflow
