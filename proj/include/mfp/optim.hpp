// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mfp/autodiff.hpp"

namespace mfp {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat> m;  // first moments, one per parameter
  std::vector<Mat> v;  // second moments
};

AdamState make_adam_state(std::span<Param* const> params);

/// One bias-corrected Adam step using the gradients stored in each Param.
void adam_update(std::span<Param* const> params, AdamState& state, double lr);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

void zero_grads(std::span<Param* const> params);

/// Rounds parameter values (and moments, when given) to 32-bit precision.
void round_to_f32(std::span<Param* const> params, AdamState* state = nullptr);

}  // namespace mfp
