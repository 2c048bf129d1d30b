// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures: small model configurations and random scenes.
#pragma once

#include <cmath>
#include <random>
#include <span>

#include "mfp/model.hpp"
#include "mfp/scene.hpp"

namespace mfp::test {

/// A model small enough for finite-difference checks.
inline ModelConfig tiny_config(int modes = 2) {
  ModelConfig c;
  c.modes = modes;
  c.enc_hidden = 6;
  c.dec_hidden = 8;
  c.slots = 3;
  c.key_dim = 3;
  c.value_dim = 4;
  c.key_hidden = 5;
  c.dyn_hidden = 6;
  c.dyn_out = 4;
  c.context_dim = 3;
  return c;
}

/// Agents on gently curving paths with a little jitter, all within ~20 m.
inline Scene random_scene(std::mt19937_64& rng, int agents, int past, int future, double dt = 0.2,
                          std::int64_t id = 0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Scene s;
  s.scene_id = id;
  s.dt = dt;
  for (int a = 0; a < agents; ++a) {
    AgentTrack t;
    t.id = a;
    Point2 p{10.0 * u(rng), 10.0 * u(rng)};
    double h = 3.14159 * u(rng);
    const double v = 5.0 + 3.0 * u(rng);
    const double turn = 0.15 * u(rng);
    for (int i = 0; i < past + future; ++i) {
      const Point2 q = p + Point2{0.02 * u(rng), 0.02 * u(rng)};
      (i < past ? t.past : t.future).push_back(q);
      h += turn;
      p = p + (v * dt) * Point2{std::cos(h), std::sin(h)};
    }
    s.agents.push_back(std::move(t));
  }
  return s;
}

/// Single agent moving in a straight line at constant speed.
inline AgentTrack straight_track(int id, Point2 start, Point2 velocity, int past, int future, double dt) {
  AgentTrack t;
  t.id = id;
  for (int i = 0; i < past + future; ++i)
    (i < past ? t.past : t.future).push_back(start + (i * dt) * velocity);
  return t;
}

/// Adds uniform noise in [-scale, scale] to every parameter entry.
inline void jitter(std::span<Param* const> params, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Param* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += u(rng);
}

}  // namespace mfp::test
