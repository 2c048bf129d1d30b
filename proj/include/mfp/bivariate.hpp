// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "mfp/geometry.hpp"

namespace mfp {

/// Per-step predictive density over a 2-d position.
struct BivariateNormalParams {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;

  bool valid() const;
  Point2 mean() const { return {mu_x, mu_y}; }
  /// The same density after a rotation by `angle` and a translation.
  BivariateNormalParams rotated(double angle, Point2 translation) const;
};

inline constexpr double kLogSigmaClamp = 8.0;
inline constexpr double kRhoScale = 0.999;

/// mu = raw[0:2], sigma = exp(clamp(raw[2:4], -8, 8)), rho = 0.999 tanh(raw[4]).
BivariateNormalParams constrain_output(const std::array<double, 5>& raw);

/// Negative log-density of `target` in nats. Throws NumericError on invalid
/// parameters.
double bivariate_nll(const BivariateNormalParams& p, Point2 target);

}  // namespace mfp
