#include "carflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace carflow {

double StreamRng::normal() {
  if (cached_) {
    cached_ = false;
    return cache_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cache_ = r * std::sin(a);
  cached_ = true;
  return r * std::cos(a);
}

}  // namespace carflow
