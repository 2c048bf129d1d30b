// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfp/geometry.hpp"

namespace mfp {

struct AgentTrack {
  int id = 0;
  std::vector<Point2> past;    // tau+1 points; the last one is the split time t
  std::vector<Point2> future;  // T points after t, empty when unknown
  // Generator metadata. Only evaluation code reads these.
  int role = -1;
  int mode = -1;
};

/// A time-aligned cluster of agent tracks split at time t.
struct Scene {
  std::int64_t scene_id = 0;
  double dt = 0.2;
  std::vector<AgentTrack> agents;

  int num_agents() const { return static_cast<int>(agents.size()); }
  int past_len() const;
  int future_len() const;
  bool has_future() const;

  /// Throws DataError unless all tracks share lengths and hold finite points.
  void validate() const;
};

struct NormalizedScene {
  Scene scene;
  std::vector<Point2> offsets;  // per agent position at time t
};

/// Translates every agent so that its own position at time t is the origin.
NormalizedScene normalize_scene(const Scene& scene);
Scene denormalize_scene(const NormalizedScene& normalized);

/// PoV frame of an agent at the split time, heading estimated from its past.
PovFrame agent_frame(const AgentTrack& agent);

/// Mean future trajectory over all agents, expressed in each agent's own PoV
/// frame at time t. Entry d is the mean position d+1 steps after t.
std::vector<Point2> dataset_mean_future(std::span<const Scene> scenes);

}  // namespace mfp
