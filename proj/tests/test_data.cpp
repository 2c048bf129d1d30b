// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>

#include "mfp/data.hpp"

using namespace mfp;
using doctest::Approx;

namespace {

ScenarioConfig scenario(int scenes, std::uint64_t seed) {
  ScenarioConfig c;
  c.num_scenes = scenes;
  c.seed = seed;
  return c;
}

// Straight track along x at 1 m per raw frame.
Track line_track(std::int64_t scene, int agent, int first, int count, double y = 0.0) {
  Track t;
  t.scene_id = scene;
  t.agent_id = agent;
  t.first_frame = first;
  for (int i = 0; i < count; ++i) t.points.push_back({static_cast<double>(first + i), y});
  return t;
}

double sample_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<Scene> numbered_scenes(int n) {
  std::vector<Scene> out(n);
  for (int i = 0; i < n; ++i) out[i].scene_id = 1000 + 7 * i;
  return out;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("5 s at 20 Hz gives 101 samples per track") {
    const TrackSet ts = generate_synthetic(scenario(4, 1));
    CHECK(ts.tracks.size() == 12);
    CHECK(ts.dt == Approx(0.05));
    for (const Track& t : ts.tracks) {
      CHECK(t.points.size() == 101);
      CHECK(t.role == t.agent_id);
    }
  }

  TEST_CASE("start points scatter with the configured noise") {
    const int n = 3000;
    const TrackSet ts = generate_synthetic(scenario(n, 7));
    // Agent B starts on a straight eastbound path, so along-path noise is x
    // and lateral noise is y; each also carries the observation noise.
    std::vector<double> xs, ys;
    for (const Track& t : ts.tracks)
      if (t.role == kRoleB) {
        xs.push_back(t.points[0].x);
        ys.push_back(t.points[0].y);
      }
    const double sigma = std::sqrt(0.2 * 0.2 + 0.05 * 0.05);
    const double se = sigma / std::sqrt(2.0 * n);
    CHECK(std::abs(sample_std(xs) - sigma) < 3 * se);
    CHECK(std::abs(sample_std(ys) - sigma) < 3 * se);
  }

  TEST_CASE("mode frequencies pass a chi-squared test") {
    const int n = 3000;
    const TrackSet ts = generate_synthetic(scenario(n, 3));
    std::array<int, 3> a{};
    std::array<int, 2> c{};
    for (const Track& t : ts.tracks) {
      if (t.role == kRoleA) ++a.at(t.mode);
      if (t.role == kRoleC) ++c.at(t.mode);
    }
    double chi_a = 0.0, chi_c = 0.0;
    for (int k : a) chi_a += (k - n / 3.0) * (k - n / 3.0) / (n / 3.0);
    for (int k : c) chi_c += (k - n / 2.0) * (k - n / 2.0) / (n / 2.0);
    CHECK(chi_a < 9.2103);  // chi2(2) at alpha 0.01
    CHECK(chi_c < 6.6349);  // chi2(1) at alpha 0.01
  }

  TEST_CASE("generation is reproducible and seed-dependent") {
    const TrackSet a = generate_synthetic(scenario(20, 5)), b = generate_synthetic(scenario(20, 5));
    CHECK(format_trajectories(a) == format_trajectories(b));
    CHECK(format_labels(a) == format_labels(b));
    CHECK(format_trajectories(generate_synthetic(scenario(20, 6))) != format_trajectories(a));
    CHECK(generate_synthetic(scenario(0, 1)).tracks.empty());
  }

  TEST_CASE("yielding cars run below free flow while the crossing car passes") {
    const TrackSet ts = generate_synthetic(scenario(600, 9));
    const WindowSpec spec{};
    double yield_speed = 0.0, fast_speed = 0.0;
    int ny = 0, nf = 0;
    for (const Track& t : ts.tracks) {
      if (t.role != kRoleA) continue;
      // Speed over 2.0 s .. 3.0 s.
      const double v = distance(t.points[60], t.points[40]) / 1.0;
      const double v0 = distance(t.points[20], t.points[0]) / 1.0;
      if (t.mode == kAYield) {
        CHECK(v < v0);
        yield_speed += v;
        ++ny;
      } else if (t.mode == kAFast) {
        fast_speed += v;
        ++nf;
      }
    }
    CHECK(yield_speed / ny < fast_speed / nf);
    for (const Scene& s : window_scenes(ts, spec)) CHECK_NOTHROW(s.validate());
  }

  TEST_CASE("invalid scenario configs are rejected") {
    ScenarioConfig c;
    c.rate = 0.0;
    CHECK_THROWS_AS(generate_synthetic(c), Error);
    c = ScenarioConfig{};
    c.weights_a = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(generate_synthetic(c), Error);
  }

  TEST_CASE("loader: empty, ordering, duplicates and missing columns") {
    CHECK(parse_trajectories("scene_id,agent_id,frame,x,y\n", 0.1).tracks.empty());
    const std::string sorted =
        "scene_id,agent_id,frame,x,y\n1,0,4,0.0,1.0\n1,0,5,0.5,1.0\n1,2,4,3.0,3.0\n1,2,5,3.5,3.0\n2,0,0,9.0,9.0\n";
    const std::string shuffled =
        "scene_id,agent_id,frame,x,y\n2,0,0,9.0,9.0\n1,2,5,3.5,3.0\n1,0,5,0.5,1.0\n1,2,4,3.0,3.0\n1,0,4,0.0,1.0\n";
    const TrackSet a = parse_trajectories(sorted, 0.1), b = parse_trajectories(shuffled, 0.1);
    CHECK(format_trajectories(a) == format_trajectories(b));
    CHECK(a.tracks.size() == 3);
    CHECK(a.tracks[0].first_frame == 4);
    CHECK(a.tracks[1].agent_id == 2);
    CHECK(a.tracks[0].points[1].x == 0.5);

    // Columns may come in any order.
    const TrackSet c = parse_trajectories("x,y,frame,agent_id,scene_id\n1.5,2.5,0,3,4\n", 0.1);
    CHECK(c.tracks[0].scene_id == 4);
    CHECK(c.tracks[0].points[0].y == 2.5);

    try {
      parse_trajectories("scene_id,agent_id,frame,x,y\n1,0,4,0,0\n1,0,4,1,1\n", 0.1);
      FAIL("expected a duplicate-row error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("scene 1, agent 0, frame 4") != std::string::npos);
    }
    try {
      parse_trajectories("scene_id,agent_id,frame,x\n1,0,4,0\n", 0.1);
      FAIL("expected a missing-column error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("'y'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_trajectories("scene_id,agent_id,frame,x,y\n1,0,4,0,0\n1,0,6,1,1\n", 0.1), DataError);
    CHECK_THROWS_AS(parse_trajectories("scene_id,agent_id,frame,x,y\n1,0,-1,0,0\n", 0.1), DataError);
    CHECK_THROWS_AS(parse_trajectories("scene_id,agent_id,frame,x,y\n1,0,1,abc,0\n", 0.1), DataError);
    CHECK_THROWS_AS(parse_trajectories("", 0.1), DataError);
    CHECK_THROWS_AS(load_trajectories("/nonexistent/file.csv", 0.1), DataError);
  }

  TEST_CASE("trajectory and label files round-trip") {
    TrackSet ts = generate_synthetic(scenario(3, 2));
    TrackSet back = parse_trajectories(format_trajectories(ts), ts.dt);
    apply_labels(back, format_labels(ts));
    CHECK(format_labels(back) == format_labels(ts));
    CHECK(format_trajectories(back) == format_trajectories(ts));
    CHECK_THROWS_AS(apply_labels(back, "bad header\n"), DataError);
  }

  TEST_CASE("windowing arithmetic") {
    // 8 s at 10 Hz, subsample 2: 3 s past and 5 s future at 200 ms.
    TrackSet ts;
    ts.dt = 0.1;
    ts.tracks.push_back(line_track(1, 0, 0, 81));
    WindowSpec spec;
    spec.past_steps = 16;
    spec.future_steps = 25;
    spec.subsample = 2;
    spec.stride = 1;
    const auto w = window_scenes(ts, spec);
    REQUIRE(w.size() == 1);
    CHECK(w[0].dt == Approx(0.2));
    CHECK(w[0].past_len() == 16);
    CHECK(w[0].future_len() == 25);
    CHECK(w[0].agents[0].past.back().x == 30.0);
    CHECK(w[0].agents[0].future.back().x == 80.0);

    ts.tracks[0] = line_track(1, 0, 0, 80);
    CHECK(window_scenes(ts, spec).empty());

    // Non-overlapping windows.
    ts.tracks[0] = line_track(1, 0, 0, 100);
    WindowSpec flat;
    flat.past_steps = 4;
    flat.future_steps = 6;
    flat.subsample = 1;
    flat.stride = 10;
    CHECK(window_scenes(ts, flat).size() == 10);
    ts.tracks[0] = line_track(1, 0, 0, 109);
    CHECK(window_scenes(ts, flat).size() == 10);

    WindowSpec bad;
    bad.stride = 0;
    CHECK_THROWS_AS(window_scenes(ts, bad), Error);
  }

  TEST_CASE("windowing keeps only agents present for the whole window and clusters by distance") {
    TrackSet ts;
    ts.dt = 0.1;
    ts.tracks.push_back(line_track(5, 0, 0, 20));
    ts.tracks.push_back(line_track(5, 1, 0, 20, 10.0));
    ts.tracks.push_back(line_track(5, 2, 0, 20, 500.0));
    ts.tracks.push_back(line_track(5, 3, 5, 10));  // misses the window start
    WindowSpec spec;
    spec.past_steps = 5;
    spec.future_steps = 15;
    spec.subsample = 1;
    spec.stride = 20;
    const auto w = window_scenes(ts, spec);
    REQUIRE(w.size() == 2);
    CHECK(w[0].num_agents() == 2);
    CHECK(w[0].agents[0].id == 0);
    CHECK(w[0].agents[1].id == 1);
    CHECK(w[1].num_agents() == 1);
    CHECK(w[1].agents[0].id == 2);
    CHECK(w[0].scene_id != w[1].scene_id);
  }

  TEST_CASE("split fractions, determinism and coverage") {
    const auto scenes = numbered_scenes(100);
    const Split s = split_dataset(scenes, {0.7, 0.1, 0.2}, 4);
    CHECK(s.train.size() == 70);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 20);
    const Split t = split_dataset(scenes, {0.7, 0.1, 0.2}, 4);
    std::set<std::int64_t> ids;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const Scene& sc : *part) CHECK(ids.insert(sc.scene_id).second);
    CHECK(ids.size() == 100);
    for (std::size_t i = 0; i < 70; ++i) CHECK(s.train[i].scene_id == t.train[i].scene_id);
    const Split u = split_dataset(scenes, {0.7, 0.1, 0.2}, 5);
    bool differs = false;
    for (std::size_t i = 0; i < 70; ++i) differs |= u.train[i].scene_id != s.train[i].scene_id;
    CHECK(differs);
    // The split depends on scene ids, not the input order.
    auto rev = scenes;
    std::reverse(rev.begin(), rev.end());
    const Split r = split_dataset(rev, {0.7, 0.1, 0.2}, 4);
    for (std::size_t i = 0; i < 20; ++i) CHECK(r.test[i].scene_id == s.test[i].scene_id);
    CHECK_THROWS_AS(split_dataset(scenes, {0.7, 0.1, 0.1}, 4), Error);
  }
}
