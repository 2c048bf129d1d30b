// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mfp/autodiff.hpp"
#include "mfp/geometry.hpp"

namespace mfp {

/// Per-agent state features fed to the attention encoder:
/// position, velocity, acceleration (each 2-d) and heading as (cos, sin).
inline constexpr int kFeatureDim = 8;

struct ModelConfig {
  int modes = 3;
  int enc_hidden = 64;
  int dec_hidden = 128;
  int slots = 8;
  int key_dim = 8;
  int value_dim = 16;
  int key_hidden = 32;
  int dyn_hidden = 64;
  int dyn_out = 32;
  int context_dim = 32;
  double temperature = 1.0;
  double pos_scale = 10.0;  // metres (and m/s, m/s^2) per feature unit

  int fused_dim() const { return enc_hidden + dyn_out + context_dim; }
  void validate() const;
};

struct ModelParams {
  // history encoder GRU
  Param enc_wx, enc_wh, enc_b;
  // per-agent key/value net: two hidden layers, then key and value heads
  Param key_w1, key_b1, key_w2, key_b2, key_wk, key_bk, key_wv, key_bv;
  Param slot_keys;  // key_dim x slots
  // slot encoder: [ego slot | pooled slots] -> dyn_out
  Param dyn_w1, dyn_b1, dyn_w2, dyn_b2;
  // latent mode prior
  Param prior_w, prior_b;
  // decoder
  Param dec_init_w, dec_init_b;
  Param dec_wx_e, dec_wx_z, dec_wx_f, dec_wh, dec_b;
  Param out_w, out_b;

  std::vector<Param*> list();
  std::vector<const Param*> list() const;
};

struct Model {
  ModelConfig config;
  ModelParams params;
  // Dataset-mean future in PoV frames; entry d is d+1 steps after t. Empty
  // means no centring.
  std::vector<Point2> mean_future;

  std::vector<Param*> parameters() { return params.list(); }
  /// Mean displacement added to the decoder output at future step `step`
  /// (1-based), in the agent's PoV frame.
  Point2 mean_increment(int step) const;
};

ModelParams allocate_params(const ModelConfig& config);

/// Weights uniform(-a, a) with a = 1/sqrt(fan_in), biases zero, slot keys
/// standard normal.
Model make_model(const ModelConfig& config, std::uint64_t seed);

/// Uniform double in [0, 1) from a 64-bit generator, independent of the
/// standard library's distribution implementations.
template <class Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
double standard_normal(Rng& rng);

}  // namespace mfp

#include <cmath>
#include <numbers>

template <class Rng>
double mfp::standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
