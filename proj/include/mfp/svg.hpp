// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mfp/decoder.hpp"

namespace mfp {

/// Axes and angle of the `k`-sigma ellipse of a bivariate normal, angle in
/// radians from +x to the major axis.
struct Ellipse {
  Point2 center;
  double major = 0.0;
  double minor = 0.0;
  double angle = 0.0;
};
Ellipse density_ellipse(const BivariateNormalParams& p, double k);

/// Standalone SVG of one scene: each agent's past (blue) and ground-truth
/// future (orange) as one path per track, plus the predictive ellipses of
/// every rollout in `predictions`, coloured by the agent's mode (red,
/// purple, green, then further colours).
std::string scene_svg(const Scene& scene, const std::vector<RolloutResult>& predictions, double sigma_k = 1.0);

}  // namespace mfp
