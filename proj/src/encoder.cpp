// SPDX-License-Identifier: Apache-2.0
#include "mfp/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfp/latent.hpp"

namespace mfp {

double rbf_match(std::span<const double> key, std::span<const double> slot_key, double temperature) {
  if (key.size() != slot_key.size()) throw ShapeError("rbf_match: key size mismatch");
  if (!(temperature > 0.0)) throw Error("rbf_match: temperature must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < key.size(); ++i) sq += (key[i] - slot_key[i]) * (key[i] - slot_key[i]);
  return std::exp(-sq / temperature);
}

Mat feature_matrix(std::span<const AgentFeature> features, double pos_scale) {
  Mat out(kFeatureDim, static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    const AgentFeature& f = features[j];
    out.col(j) << f.position.x / pos_scale, f.position.y / pos_scale, f.velocity.x / pos_scale,
        f.velocity.y / pos_scale, f.acceleration.x / pos_scale, f.acceleration.y / pos_scale, std::cos(f.heading),
        std::sin(f.heading);
  }
  return out;
}

KeyValue key_value_net(Tape& tape, Model& model, Var features) {
  ModelParams& p = model.params;
  Var h = ad::relu(ad::affine(tape.param(p.key_w1), features, tape.param(p.key_b1)));
  h = ad::relu(ad::affine(tape.param(p.key_w2), h, tape.param(p.key_b2)));
  return {ad::affine(tape.param(p.key_wk), h, tape.param(p.key_bk)),
          ad::affine(tape.param(p.key_wv), h, tape.param(p.key_bv))};
}

Var dyn_encode_pairs(Tape& tape, Model& model, Var features, const std::vector<int>& pair_col,
                     const std::vector<char>& pair_is_ego, int num_cols) {
  const ModelConfig& c = model.config;
  ModelParams& p = model.params;
  const KeyValue kv = key_value_net(tape, model, features);

  std::vector<int> ego_idx(static_cast<std::size_t>(num_cols), -1);
  std::vector<int> other_idx, other_col;
  for (std::size_t j = 0; j < pair_col.size(); ++j) {
    if (pair_is_ego[j]) {
      ego_idx[pair_col[j]] = static_cast<int>(j);
    } else {
      other_idx.push_back(static_cast<int>(j));
      other_col.push_back(pair_col[j]);
    }
  }
  for (int e : ego_idx)
    if (e < 0) throw Error("dyn_encode: every column needs exactly one ego pair");

  Var ego_slot = ad::gather_cols(kv.values, ego_idx);
  Var pooled;
  if (other_idx.empty()) {
    pooled = tape.constant(Mat::Zero(c.slots * c.value_dim, num_cols));
  } else {
    pooled = ad::rbf_slot_pool(ad::gather_cols(kv.keys, other_idx), ad::gather_cols(kv.values, other_idx),
                               tape.param(p.slot_keys), other_col, num_cols, c.temperature);
  }
  Var slots = ad::concat_rows({ego_slot, pooled});
  Var h = ad::relu(ad::affine(tape.param(p.dyn_w1), slots, tape.param(p.dyn_b1)));
  return ad::affine(tape.param(p.dyn_w2), h, tape.param(p.dyn_b2));
}

Var agent_features(Tape& tape, const Model& model, std::span<const PovFrame> frames, const FeatureQuery& query,
                   double dt) {
  const int n = static_cast<int>(frames.size());
  const int cols = static_cast<int>(query.ego_of_col.size());
  const std::size_t m = static_cast<std::size_t>(cols) * n;
  for (const auto& lag : query.positions)
    if (lag.size() != m) throw ShapeError("agent_features: position table has the wrong size");

  std::vector<ad::PointRef> ego_refs(m);
  std::vector<double> unrotate(m);
  Mat heading(2, static_cast<Eigen::Index>(m));
  for (int col = 0; col < cols; ++col) {
    const int ego = query.ego_of_col[col];
    for (int a = 0; a < n; ++a) {
      const std::size_t j = static_cast<std::size_t>(col) * n + a;
      ego_refs[j] = query.positions[0][static_cast<std::size_t>(col) * n + ego];
      unrotate[j] = -frames[ego].heading;
      const double rel = frames[a].heading - frames[ego].heading;
      heading(0, j) = std::cos(rel);
      heading(1, j) = std::sin(rel);
    }
  }
  Var p0 = ad::gather_points(tape, query.positions[0]);
  Var p1 = ad::gather_points(tape, query.positions[1]);
  Var p2 = ad::gather_points(tape, query.positions[2]);
  Var origin = ad::gather_points(tape, ego_refs);

  const double inv = 1.0 / model.config.pos_scale;
  Var d01 = ad::sub(p0, p1);
  Var rel = ad::scale(ad::rotate_cols(ad::sub(p0, origin), unrotate), inv);
  Var vel = ad::scale(ad::rotate_cols(d01, unrotate), inv / dt);
  Var acc = ad::scale(ad::rotate_cols(ad::sub(d01, ad::sub(p1, p2)), unrotate), inv / (dt * dt));
  return ad::concat_rows({rel, vel, acc, tape.constant(std::move(heading))});
}

Var dyn_encode_batch(Tape& tape, Model& model, std::span<const PovFrame> frames, std::span<const int> ids,
                     const FeatureQuery& query, double dt) {
  const int n = static_cast<int>(frames.size());
  const int cols = static_cast<int>(query.ego_of_col.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ids[a] < ids[b]; });

  Var feats = agent_features(tape, model, frames, query, dt);
  std::vector<int> perm, pair_col;
  std::vector<char> is_ego;
  for (int col = 0; col < cols; ++col)
    for (int a : order) {
      perm.push_back(col * n + a);
      pair_col.push_back(col);
      is_ego.push_back(a == query.ego_of_col[col] ? 1 : 0);
    }
  return dyn_encode_pairs(tape, model, ad::gather_cols(feats, perm), pair_col, is_ego, cols);
}

namespace {

std::vector<int> id_order(std::span<const int> ids) {
  std::vector<int> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ids[a] < ids[b]; });
  return order;
}

}  // namespace

Vec dyn_encode(Model& model, int ego_index, std::span<const AgentFeature> features, std::span<const int> ids) {
  if (features.size() != ids.size() || ego_index < 0 || ego_index >= static_cast<int>(features.size()))
    throw ShapeError("dyn_encode: bad ego index or id list");
  Tape tape(false);
  std::vector<AgentFeature> sorted;
  std::vector<int> col;
  std::vector<char> ego;
  for (int a : id_order(ids)) {
    sorted.push_back(features[a]);
    col.push_back(0);
    ego.push_back(a == ego_index ? 1 : 0);
  }
  Var f = tape.constant(feature_matrix(sorted, model.config.pos_scale));
  return dyn_encode_pairs(tape, model, f, col, ego, 1).value().col(0);
}

Vec dyn_slots(Model& model, int ego_index, std::span<const AgentFeature> features, std::span<const int> ids) {
  if (features.size() != ids.size() || ego_index < 0 || ego_index >= static_cast<int>(features.size()))
    throw ShapeError("dyn_slots: bad ego index or id list");
  const ModelConfig& c = model.config;
  Tape tape(false);
  std::vector<AgentFeature> sorted;
  for (int a : id_order(ids)) sorted.push_back(features[a]);
  const KeyValue kv = key_value_net(tape, model, tape.constant(feature_matrix(sorted, c.pos_scale)));
  Vec out = Vec::Zero((c.slots + 1) * c.value_dim);
  const auto order = id_order(ids);
  for (std::size_t j = 0; j < order.size(); ++j) {
    if (order[j] == ego_index) {
      out.head(c.value_dim) = kv.values.value().col(j);
      continue;
    }
    for (int s = 0; s < c.slots; ++s) {
      const Vec k = kv.keys.value().col(j);
      const Vec sk = model.params.slot_keys.value.col(s);
      const double w = rbf_match(std::span(k.data(), k.size()), std::span(sk.data(), sk.size()), c.temperature);
      out.segment((s + 1) * c.value_dim, c.value_dim) += w * kv.values.value().col(j);
    }
  }
  return out;
}

ad::PointRef past_ref(const Scene& scene, int agent, int index) {
  const int clamped = std::max(index, 0);
  const Point2 p = scene.agents[agent].past[clamped];
  return ad::PointRef::constant(p.x, p.y);
}

Var encode_history(Tape& tape, Model& model, const Scene& scene, std::span<const PovFrame> frames) {
  const int n = scene.num_agents();
  const int steps = scene.past_len();
  if (steps < 2) throw DataError("encode_history: need at least 2 past points");
  ModelParams& p = model.params;
  Var wx = tape.param(p.enc_wx), wh = tape.param(p.enc_wh), b = tape.param(p.enc_b);
  Var h = tape.constant(Mat::Zero(model.config.enc_hidden, n));
  const double inv = 1.0 / model.config.pos_scale;
  for (int i = 0; i < steps; ++i) {
    Mat x(2, n);
    for (int a = 0; a < n; ++a) {
      const Point2 q = frames[a].to_local(scene.agents[a].past[i]);
      x(0, a) = q.x * inv;
      x(1, a) = q.y * inv;
    }
    h = ad::gru_cell(ad::affine(wx, tape.constant(std::move(x)), b), h, wh);
  }
  return h;
}

Var fuse_features(Tape& tape, const Model& model, Var history, Var dyn) {
  const ModelConfig& c = model.config;
  if (history.rows() != c.enc_hidden || dyn.rows() != c.dyn_out || history.cols() != dyn.cols())
    throw ShapeError("fuse_features: dimension mismatch");
  return ad::concat_rows({history, dyn, tape.constant(Mat::Zero(c.context_dim, history.cols()))});
}

SceneEncoding encode_scene(Tape& tape, Model& model, const Scene& scene) {
  const int n = scene.num_agents();
  if (n < 1) throw DataError("encode_scene: scene has no agents");
  SceneEncoding enc;
  for (const AgentTrack& a : scene.agents) {
    enc.frames.push_back(agent_frame(a));
    enc.ids.push_back(a.id);
  }
  enc.history = encode_history(tape, model, scene, enc.frames);

  const int t = scene.past_len() - 1;
  FeatureQuery q;
  for (int col = 0; col < n; ++col) {
    q.ego_of_col.push_back(col);
    for (int lag = 0; lag < 3; ++lag)
      for (int a = 0; a < n; ++a) q.positions[lag].push_back(past_ref(scene, a, t - lag));
  }
  enc.dyn = dyn_encode_batch(tape, model, enc.frames, enc.ids, q, scene.dt);
  enc.fused = fuse_features(tape, model, enc.history, enc.dyn);
  enc.prior_logits = prior_logits(tape, model, enc.fused);
  return enc;
}

}  // namespace mfp
