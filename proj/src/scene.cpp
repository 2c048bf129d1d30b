// SPDX-License-Identifier: Apache-2.0
#include "mfp/scene.hpp"

#include <cmath>
#include <string>

namespace mfp {

int Scene::past_len() const { return agents.empty() ? 0 : static_cast<int>(agents.front().past.size()); }

int Scene::future_len() const {
  return agents.empty() ? 0 : static_cast<int>(agents.front().future.size());
}

bool Scene::has_future() const { return future_len() > 0; }

void Scene::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DataError("scene " + std::to_string(scene_id) + ": invalid dt");
  const int p = past_len();
  const int f = future_len();
  for (const AgentTrack& a : agents) {
    if (static_cast<int>(a.past.size()) != p || static_cast<int>(a.future.size()) != f)
      throw DataError("scene " + std::to_string(scene_id) + ": ragged agent tracks");
    for (const auto* track : {&a.past, &a.future})
      for (const Point2& q : *track)
        if (!std::isfinite(q.x) || !std::isfinite(q.y))
          throw DataError("scene " + std::to_string(scene_id) + ": non-finite position");
  }
}

NormalizedScene normalize_scene(const Scene& scene) {
  NormalizedScene out{scene, {}};
  for (AgentTrack& a : out.scene.agents) {
    const Point2 origin = a.past.back();
    out.offsets.push_back(origin);
    for (Point2& q : a.past) q = q - origin;
    for (Point2& q : a.future) q = q - origin;
  }
  return out;
}

Scene denormalize_scene(const NormalizedScene& normalized) {
  Scene out = normalized.scene;
  for (std::size_t i = 0; i < out.agents.size(); ++i) {
    const Point2 origin = normalized.offsets[i];
    for (Point2& q : out.agents[i].past) q = q + origin;
    for (Point2& q : out.agents[i].future) q = q + origin;
  }
  return out;
}

PovFrame agent_frame(const AgentTrack& agent) {
  return PovFrame(agent.past.back(), estimate_heading(agent.past));
}

std::vector<Point2> dataset_mean_future(std::span<const Scene> scenes) {
  std::vector<Point2> sum;
  long count = 0;
  for (const Scene& s : scenes) {
    if (!s.has_future()) continue;
    if (sum.empty()) sum.assign(s.future_len(), Point2{});
    if (static_cast<int>(sum.size()) != s.future_len()) throw DataError("dataset_mean_future: mixed horizons");
    for (const AgentTrack& a : s.agents) {
      const PovFrame frame = agent_frame(a);
      for (std::size_t d = 0; d < a.future.size(); ++d) sum[d] = sum[d] + frame.to_local(a.future[d]);
      ++count;
    }
  }
  if (count > 0)
    for (Point2& q : sum) q = (1.0 / static_cast<double>(count)) * q;
  return sum;
}

}  // namespace mfp
