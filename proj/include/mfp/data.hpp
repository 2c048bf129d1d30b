// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfp/scene.hpp"

namespace mfp {

/// One agent's observed positions at consecutive frames.
struct Track {
  std::int64_t scene_id = 0;
  int agent_id = 0;
  int first_frame = 0;
  std::vector<Point2> points;
  int role = -1;  // generator labels, -1 when unknown
  int mode = -1;
};

struct TrackSet {
  double dt = 0.05;
  std::vector<Track> tracks;  // sorted by (scene_id, agent_id)
};

// Synthetic intersection. Role A turns right across the path of B; C
// follows B and either continues or turns off.
enum Role { kRoleA = 0, kRoleB = 1, kRoleC = 2 };
enum ModeA { kAFast = 0, kAYield = 1, kAStop = 2 };
enum ModeC { kCStraight = 0, kCRight = 1 };

struct ScenarioConfig {
  double rate = 20.0;      // Hz
  double duration = 5.0;   // s
  double init_noise = 0.2; // m, std of the start point along and across the path
  double obs_noise = 0.05; // m, per-sample observation noise
  std::array<double, 3> weights_a = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<double, 2> weights_c = {0.5, 0.5};
  int num_scenes = 100;
  std::uint64_t seed = 1;
  // Modes are held at the nominal speed until this time, so the history
  // window does not reveal them.
  double mode_onset = 1.2;

  int samples() const;
  void validate() const;
};

/// Labelled full-rate tracks, three agents per scene. Runs the generator
/// self-checks and throws DataError if one fails.
TrackSet generate_synthetic(const ScenarioConfig& config);

struct WindowSpec {
  int past_steps = 6;     // points up to and including the split time
  int future_steps = 19;
  int stride = 25;        // in subsampled frames
  int subsample = 4;
  double cluster_radius = 60.0;  // m, at the split time

  void validate() const;
};

/// Sliding windows over every scene_id. Frames are subsampled first (frame %
/// subsample == 0); agents covering the full window are grouped into clusters
/// of co-located agents, one Scene per cluster.
std::vector<Scene> window_scenes(const TrackSet& tracks, const WindowSpec& spec);

/// CSV with header scene_id,agent_id,frame,x,y. Rows may come in any order.
TrackSet load_trajectories(const std::string& path, double dt);
TrackSet parse_trajectories(const std::string& text, double dt);
std::string format_trajectories(const TrackSet& tracks);
/// Sidecar with header scene_id,agent_id,role,mode.
std::string format_labels(const TrackSet& tracks);
void apply_labels(TrackSet& tracks, const std::string& text);

struct Split {
  std::vector<Scene> train, val, test;
};

/// Deterministic shuffle by scene_id, then cut by `fractions`.
Split split_dataset(const std::vector<Scene>& scenes, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace mfp
