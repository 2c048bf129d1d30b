// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mfp/data.hpp"

namespace mfp {

void WindowSpec::validate() const {
  if (past_steps < 1 || future_steps < 1 || stride < 1 || subsample < 1)
    throw Error("WindowSpec: all step counts must be >= 1");
  if (!(cluster_radius > 0.0)) throw Error("WindowSpec: cluster radius must be positive");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, int line, const char* column) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line) + ": bad " + column + " value '" + s + "'");
  return v;
}

std::string key_name(std::int64_t scene, int agent, long frame) {
  return "(scene " + std::to_string(scene) + ", agent " + std::to_string(agent) + ", frame " + std::to_string(frame) +
         ")";
}

}  // namespace

TrackSet parse_trajectories(const std::string& text, double dt) {
  if (!(dt > 0.0)) throw DataError("trajectory dt must be positive");
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("trajectory file is empty (missing header)");
  const auto header = split_csv(line);
  const std::array<const char*, 5> names = {"scene_id", "agent_id", "frame", "x", "y"};
  std::array<int, 5> col{};
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto it = std::find(header.begin(), header.end(), names[k]);
    if (it == header.end()) throw DataError(std::string("trajectory file: missing column '") + names[k] + "'");
    col[k] = static_cast<int>(it - header.begin());
  }

  std::map<std::pair<std::int64_t, int>, std::map<long, Point2>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw DataError("line " + std::to_string(lineno) + ": wrong number of fields");
    const auto scene = parse_number<std::int64_t>(f[col[0]], lineno, "scene_id");
    const int agent = parse_number<int>(f[col[1]], lineno, "agent_id");
    const long frame = parse_number<long>(f[col[2]], lineno, "frame");
    if (frame < 0) throw DataError("line " + std::to_string(lineno) + ": negative frame");
    const Point2 p{parse_number<double>(f[col[3]], lineno, "x"), parse_number<double>(f[col[4]], lineno, "y")};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError("line " + std::to_string(lineno) + ": non-finite");
    auto& track = rows[{scene, agent}];
    if (!track.emplace(frame, p).second) throw DataError("duplicate row " + key_name(scene, agent, frame));
  }

  TrackSet out;
  out.dt = dt;
  for (const auto& [key, frames] : rows) {
    Track t;
    t.scene_id = key.first;
    t.agent_id = key.second;
    t.first_frame = static_cast<int>(frames.begin()->first);
    long expect = t.first_frame;
    for (const auto& [frame, p] : frames) {
      if (frame != expect)
        throw DataError("non-uniform frame spacing at " + key_name(key.first, key.second, frame) + ", expected frame " +
                        std::to_string(expect));
      t.points.push_back(p);
      ++expect;
    }
    out.tracks.push_back(std::move(t));
  }
  return out;
}

TrackSet load_trajectories(const std::string& path, double dt) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_trajectories(ss.str(), dt);
}

std::string format_trajectories(const TrackSet& tracks) {
  std::string out = "scene_id,agent_id,frame,x,y\n";
  char buf[128];
  for (const Track& t : tracks.tracks)
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%lld,%d,%d,%.6f,%.6f\n", static_cast<long long>(t.scene_id), t.agent_id,
                    t.first_frame + static_cast<int>(i), t.points[i].x, t.points[i].y);
      out += buf;
    }
  return out;
}

std::string format_labels(const TrackSet& tracks) {
  std::string out = "scene_id,agent_id,role,mode\n";
  for (const Track& t : tracks.tracks)
    out += std::to_string(t.scene_id) + "," + std::to_string(t.agent_id) + "," + std::to_string(t.role) + "," +
           std::to_string(t.mode) + "\n";
  return out;
}

void apply_labels(TrackSet& tracks, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (split_csv(line) != std::vector<std::string>{"scene_id", "agent_id", "role", "mode"})
    throw DataError("label file: expected header scene_id,agent_id,role,mode");
  std::map<std::pair<std::int64_t, int>, std::pair<int, int>> labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw DataError("label line " + std::to_string(lineno) + ": expected 4 fields");
    labels[{parse_number<std::int64_t>(f[0], lineno, "scene_id"), parse_number<int>(f[1], lineno, "agent_id")}] = {
        parse_number<int>(f[2], lineno, "role"), parse_number<int>(f[3], lineno, "mode")};
  }
  for (Track& t : tracks.tracks) {
    auto it = labels.find({t.scene_id, t.agent_id});
    if (it != labels.end()) std::tie(t.role, t.mode) = it->second;
  }
}

std::vector<Scene> window_scenes(const TrackSet& tracks, const WindowSpec& spec) {
  spec.validate();
  const int len = spec.past_steps + spec.future_steps;
  std::map<std::int64_t, std::vector<const Track*>> by_scene;
  for (const Track& t : tracks.tracks) by_scene[t.scene_id].push_back(&t);

  std::vector<Scene> out;
  for (const auto& [scene_id, group] : by_scene) {
    // Subsampled frame index j covers raw frame j * subsample.
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (const Track* t : group) {
      const long first = (t->first_frame + spec.subsample - 1) / spec.subsample;
      const long last = (t->first_frame + static_cast<long>(t->points.size()) - 1) / spec.subsample;
      lo = std::min(lo, first);
      hi = std::max(hi, last);
    }
    int window = 0;
    for (long start = lo; start + len - 1 <= hi; start += spec.stride, ++window) {
      std::vector<const Track*> present;
      for (const Track* t : group) {
        const long raw0 = start * spec.subsample, raw1 = (start + len - 1) * spec.subsample;
        if (raw0 >= t->first_frame && raw1 < t->first_frame + static_cast<long>(t->points.size()))
          present.push_back(t);
      }
      std::sort(present.begin(), present.end(),
                [](const Track* a, const Track* b) { return a->agent_id < b->agent_id; });
      auto at = [&](const Track* t, int k) {
        return t->points[static_cast<std::size_t>((start + k) * spec.subsample - t->first_frame)];
      };
      std::vector<char> used(present.size(), 0);
      int cluster = 0;
      for (std::size_t seed = 0; seed < present.size(); ++seed) {
        if (used[seed]) continue;
        Scene s;
        s.scene_id = scene_id * 1000000 + window * 1000 + cluster++;
        s.dt = tracks.dt * spec.subsample;
        const Point2 centre = at(present[seed], spec.past_steps - 1);
        for (std::size_t j = seed; j < present.size(); ++j) {
          if (used[j] || distance(at(present[j], spec.past_steps - 1), centre) > spec.cluster_radius) continue;
          used[j] = 1;
          AgentTrack a;
          a.id = present[j]->agent_id;
          a.role = present[j]->role;
          a.mode = present[j]->mode;
          for (int k = 0; k < spec.past_steps; ++k) a.past.push_back(at(present[j], k));
          for (int k = spec.past_steps; k < len; ++k) a.future.push_back(at(present[j], k));
          s.agents.push_back(std::move(a));
        }
        s.validate();
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

Split split_dataset(const std::vector<Scene>& scenes, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw Error("split_dataset: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("split_dataset: fractions must sum to 1");
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scenes[a].scene_id < scenes[b].scene_id; });
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const std::size_t n = scenes.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    const Scene& sc = scenes[order[i]];
    (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(sc);
  }
  return s;
}

}  // namespace mfp
