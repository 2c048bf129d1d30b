// SPDX-License-Identifier: Apache-2.0
#include "mfp/bivariate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfp/error.hpp"

namespace mfp {

bool BivariateNormalParams::valid() const {
  return std::isfinite(mu_x) && std::isfinite(mu_y) && std::isfinite(sigma_x) && std::isfinite(sigma_y) &&
         sigma_x > 0.0 && sigma_y > 0.0 && std::abs(rho) < 1.0;
}

BivariateNormalParams BivariateNormalParams::rotated(double angle, Point2 translation) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double sxx = sigma_x * sigma_x, syy = sigma_y * sigma_y, sxy = rho * sigma_x * sigma_y;
  // R S R^T
  const double wxx = c * c * sxx - 2.0 * c * s * sxy + s * s * syy;
  const double wyy = s * s * sxx + 2.0 * c * s * sxy + c * c * syy;
  const double wxy = c * s * (sxx - syy) + (c * c - s * s) * sxy;
  BivariateNormalParams out;
  out.mu_x = c * mu_x - s * mu_y + translation.x;
  out.mu_y = s * mu_x + c * mu_y + translation.y;
  out.sigma_x = std::sqrt(wxx);
  out.sigma_y = std::sqrt(wyy);
  out.rho = std::clamp(wxy / (out.sigma_x * out.sigma_y), -kRhoScale, kRhoScale);
  return out;
}

BivariateNormalParams constrain_output(const std::array<double, 5>& raw) {
  BivariateNormalParams p;
  p.mu_x = raw[0];
  p.mu_y = raw[1];
  p.sigma_x = std::exp(std::clamp(raw[2], -kLogSigmaClamp, kLogSigmaClamp));
  p.sigma_y = std::exp(std::clamp(raw[3], -kLogSigmaClamp, kLogSigmaClamp));
  p.rho = kRhoScale * std::tanh(raw[4]);
  return p;
}

double bivariate_nll(const BivariateNormalParams& p, Point2 target) {
  if (!p.valid()) throw NumericError("bivariate_nll: invalid sigma or rho");
  const double om = 1.0 - p.rho * p.rho;
  const double zx = (target.x - p.mu_x) / p.sigma_x;
  const double zy = (target.y - p.mu_y) / p.sigma_y;
  const double q = zx * zx - 2.0 * p.rho * zx * zy + zy * zy;
  return std::log(2.0 * std::numbers::pi * p.sigma_x * p.sigma_y * std::sqrt(om)) + q / (2.0 * om);
}

}  // namespace mfp
