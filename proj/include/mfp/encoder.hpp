// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "mfp/autodiff.hpp"
#include "mfp/model.hpp"
#include "mfp/scene.hpp"

namespace mfp {

/// State of one agent as seen from an ego frame.
struct AgentFeature {
  Point2 position;
  Point2 velocity;
  Point2 acceleration;
  double heading = 0.0;  // relative to the ego heading
};

/// exp(-|k - k'|^2 / T). No normalisation across slots.
double rbf_match(std::span<const double> key, std::span<const double> slot_key, double temperature);

/// kFeatureDim x n matrix, motion terms divided by `pos_scale`.
Mat feature_matrix(std::span<const AgentFeature> features, double pos_scale);

struct KeyValue {
  Var keys;    // key_dim x n
  Var values;  // value_dim x n
};

/// Shared trunk (two ReLU layers) with separate key and value heads.
KeyValue key_value_net(Tape& tape, Model& model, Var features);

/// Attention encoder over (column, agent) pairs. Ego pairs fill the
/// dedicated slot of their column; every other pair is routed into the
/// learned slots by RBF key matching, accumulated in pair order.
Var dyn_encode_pairs(Tape& tape, Model& model, Var features, const std::vector<int>& pair_col,
                     const std::vector<char>& pair_is_ego, int num_cols);

/// Positions needed to build features for a batch of query columns. Entry
/// [lag][col * N + m] is agent m at time s - lag in the world of `col`.
struct FeatureQuery {
  std::vector<int> ego_of_col;
  std::array<std::vector<ad::PointRef>, 3> positions;
};

/// Features (kFeatureDim x cols*N, laid out col * N + m) in each column's
/// ego frame: origin at the ego's current position, axes from its heading.
Var agent_features(Tape& tape, const Model& model, std::span<const PovFrame> frames, const FeatureQuery& query,
                   double dt);

/// dyn_out x cols encoding. Non-ego agents are pooled in ascending id order.
Var dyn_encode_batch(Tape& tape, Model& model, std::span<const PovFrame> frames, std::span<const int> ids,
                     const FeatureQuery& query, double dt);

/// Single-query helpers evaluated without recording gradients.
Vec dyn_encode(Model& model, int ego_index, std::span<const AgentFeature> features, std::span<const int> ids);
/// Pooled slot inputs [ego slot | slot 0 .. slot S-1] before the encoder net.
Vec dyn_slots(Model& model, int ego_index, std::span<const AgentFeature> features, std::span<const int> ids);

/// Shared-weight GRU over each agent's past in its own PoV frame.
Var encode_history(Tape& tape, Model& model, const Scene& scene, std::span<const PovFrame> frames);

/// [history | dyn | context] with the context block fixed at zero.
Var fuse_features(Tape& tape, const Model& model, Var history, Var dyn);

struct SceneEncoding {
  std::vector<PovFrame> frames;
  std::vector<int> ids;
  Var history;       // enc_hidden x N
  Var dyn;           // dyn_out x N
  Var fused;         // fused_dim x N
  Var prior_logits;  // modes x N
};

SceneEncoding encode_scene(Tape& tape, Model& model, const Scene& scene);

/// Point references for agent m at past index i (constants).
ad::PointRef past_ref(const Scene& scene, int agent, int index);

}  // namespace mfp
