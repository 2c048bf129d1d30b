// SPDX-License-Identifier: Apache-2.0
#include "mfp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "mfp/parallel.hpp"

namespace mfp {

namespace {

constexpr double kStraight = 14.0;  // from (2, -20) to the turn at (2, -6)
constexpr double kRadius = 8.0;     // turn centre (-6, -6)
constexpr double kArc = kRadius * std::numbers::pi / 2;
constexpr double kCarLaneX = -2.0;
const double kConflictY = -6.0 + kRadius * std::sin(std::numbers::pi / 3);

struct Car {
  double y = 0.0;
  double v = 0.0;
  Point2 position() const { return {kCarLaneX, y}; }
};

double between(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::array<Car, 2> draw_cars(const PlanTask& task, std::mt19937_64& rng, double arrival_lo, double arrival_hi,
                             double speed_lo, double speed_hi) {
  const double t1 = between(rng, arrival_lo, arrival_hi);
  const double t2 = t1 + between(rng, task.gap_lo, task.gap_hi);
  std::array<Car, 2> cars;
  cars[0].v = between(rng, speed_lo, speed_hi);
  cars[1].v = between(rng, speed_lo, speed_hi);
  cars[0].y = kConflictY + cars[0].v * t1;
  cars[1].y = kConflictY + cars[1].v * t2;
  return cars;
}

}  // namespace

void PlanTask::validate() const {
  if (!(dt > 0.0) || substeps < 1 || history < 2 || horizon < 1 || max_steps < 1)
    throw Error("PlanTask: bad step settings");
  if (!(a_max > 0.0) || !(v_max > 0.0) || !(d_collide > 0.0) || !(crash_distance > 0.0))
    throw Error("PlanTask: bad limits");
}

Point2 ego_path_point(double s) {
  if (s < kStraight) return {2.0, -20.0 + s};
  if (s < kStraight + kArc) {
    const double th = (s - kStraight) / kRadius;
    return {-6.0 + kRadius * std::cos(th), -6.0 + kRadius * std::sin(th)};
  }
  return {-6.0 - (s - kStraight - kArc), 2.0};
}

double ego_goal_s() { return kStraight + kArc + 8.0; }

std::vector<Profile> default_candidates() {
  std::vector<Profile> out;
  for (double a : {-3.0, 0.0, 2.5})
    for (double t : {0.6, 1.2, 2.0}) out.push_back({a, t});
  return out;
}

EgoState advance_ego(const PlanTask& task, EgoState ego, double accel) {
  const double a = std::clamp(accel, -task.a_max, task.a_max);
  const double h = task.dt / task.substeps;
  for (int i = 0; i < task.substeps; ++i) {
    ego.v = std::clamp(ego.v + a * h, 0.0, task.v_max);
    ego.s += ego.v * h;
  }
  return ego;
}

std::pair<std::vector<Point2>, std::vector<double>> roll_profile(const PlanTask& task, EgoState ego,
                                                                 const Profile& p, int steps) {
  std::pair<std::vector<Point2>, std::vector<double>> out;
  for (int j = 0; j < steps; ++j) {
    ego = advance_ego(task, ego, p.accel_at(j * task.dt));
    out.first.push_back(ego_path_point(ego.s));
    out.second.push_back(ego.v);
  }
  return out;
}

std::vector<CandidateScore> score_candidates(Model& model, const Scene& scene, int ego, EgoState state,
                                             const std::vector<Profile>& candidates, const PlanTask& task) {
  if (candidates.empty()) throw Error("score_candidates: no candidates");
  if (ego < 0 || ego >= scene.num_agents()) throw Error("score_candidates: bad ego index");
  const int n = scene.num_agents(), k = model.config.modes, h = task.horizon;
  Tape tape(false);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  const auto priors = prior_probs(enc.prior_logits.value());

  BatchSpec spec;
  spec.horizon = h;
  spec.fixed_agent = ego;
  std::vector<std::vector<double>> speeds;
  std::vector<char> reaches;
  for (const Profile& p : candidates) {
    const auto [traj, v] = roll_profile(task, state, p, h);
    speeds.push_back(v);
    EgoState e = state;
    for (int j = 0; j < h; ++j) e = advance_ego(task, e, p.accel_at(j * task.dt));
    reaches.push_back(e.s >= ego_goal_s() ? 1 : 0);
    for (int m = 0; m < k; ++m) {
      spec.modes.push_back(std::vector<int>(n, m));
      spec.fixed_future.push_back(traj);
    }
  }
  const BatchOutput out = run_batch(tape, model, scene, enc, spec);

  std::vector<CandidateScore> scores;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double survive = 1.0;
    for (int a = 0; a < n; ++a) {
      if (a == ego) continue;
      double p_hit = 0.0;
      for (int m = 0; m < k; ++m) {
        const int col = (static_cast<int>(c) * k + m) * n + a;
        bool hit = false;
        for (int j = 0; j < h && !hit; ++j) {
          const Point2 other{out.mean[j].value()(0, col), out.mean[j].value()(1, col)};
          hit = distance(other, spec.fixed_future[c * k][j]) < task.d_collide;
        }
        if (hit) p_hit += priors[a][m];
      }
      survive *= 1.0 - std::min(p_hit, 1.0);
    }
    CandidateScore sc;
    sc.collision_prob = 1.0 - survive;
    double bonus = 0.0;
    for (double v : speeds[c]) bonus += task.velocity_bonus * v;
    sc.expected_reward = sc.collision_prob * task.reward_collision +
                         (1.0 - sc.collision_prob) * (reaches[c] ? task.reward_success : 0.0) + bonus;
    scores.push_back(sc);
  }
  return scores;
}

CandidateScore score_candidate(Model& model, const Scene& scene, int ego, EgoState state, const Profile& candidate,
                               const PlanTask& task) {
  return score_candidates(model, scene, ego, state, {candidate}, task).front();
}

int plan_step(Model& model, const Scene& scene, int ego, EgoState state, const std::vector<Profile>& candidates,
              const PlanTask& task) {
  const auto scores = score_candidates(model, scene, ego, state, candidates, task);
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i].expected_reward > scores[best].expected_reward) best = i;
  return best;
}

ClosedLoopResult closed_loop_eval(const PlanTask& task, Model* model, int trials, std::uint64_t seed,
                                  Policy policy) {
  task.validate();
  if (policy == Policy::planner && model == nullptr) throw Error("closed_loop_eval: planner policy needs a model");
  const auto candidates = default_candidates();
  ClosedLoopResult res;
  res.trials.resize(trials);
  parallel_for(trials, [&](int trial) {
    const std::uint64_t trial_seed = mix(seed, static_cast<std::uint64_t>(trial));
    std::mt19937_64 rng(trial_seed);
    auto cars = draw_cars(task, rng, task.arrival_lo, task.arrival_hi, task.car_speed_lo, task.car_speed_hi);
    for (Car& c : cars) c.v += task.speed_offset;

    std::array<std::vector<Point2>, 3> hist;  // ego, car 0, car 1
    for (int k = task.history - 1; k >= 0; --k) {
      hist[0].push_back(ego_path_point(-task.ego_v0 * k * task.dt));
      for (int c = 0; c < 2; ++c) hist[c + 1].push_back({kCarLaneX, cars[c].y + cars[c].v * k * task.dt});
    }
    EgoState ego{0.0, task.ego_v0};
    TrialResult tr;
    tr.seed = trial_seed;
    tr.outcome = "timeout";
    tr.min_distance = 1e300;
    for (int step = 0; step < task.max_steps; ++step) {
      double accel = task.a_max;
      if (policy == Policy::planner) {
        Scene s;
        s.scene_id = step;
        s.dt = task.dt;
        for (int a = 0; a < 3; ++a) {
          AgentTrack t;
          t.id = a;
          t.past.assign(hist[a].end() - task.history, hist[a].end());
          s.agents.push_back(std::move(t));
        }
        accel = candidates[plan_step(*model, s, 0, ego, candidates, task)].accel_at(0.0);
      }
      const double a = std::clamp(accel, -task.a_max, task.a_max);
      const double h = task.dt / task.substeps;
      bool crashed = false;
      for (int i = 0; i < task.substeps && !crashed; ++i) {
        ego.v = std::clamp(ego.v + a * h, 0.0, task.v_max);
        ego.s += ego.v * h;
        for (Car& c : cars) {
          c.v = std::max(0.0, c.v + task.car_accel * h);
          c.y -= c.v * h;
          const double d = distance(ego_path_point(ego.s), c.position());
          tr.min_distance = std::min(tr.min_distance, d);
          crashed = crashed || d < task.crash_distance;
        }
      }
      tr.steps = step + 1;
      if (crashed) {
        tr.outcome = "crash";
        tr.reward += task.reward_collision;
        break;
      }
      tr.reward += task.velocity_bonus * ego.v;
      hist[0].push_back(ego_path_point(ego.s));
      for (int c = 0; c < 2; ++c) hist[c + 1].push_back(cars[c].position());
      if (ego.s >= ego_goal_s()) {
        tr.outcome = "success";
        tr.reward += task.reward_success;
        break;
      }
    }
    res.trials[trial] = tr;
  });
  int crashes = 0, successes = 0;
  for (const TrialResult& t : res.trials) {
    crashes += t.outcome == "crash";
    successes += t.outcome == "success";
    res.mean_reward += t.reward;
  }
  if (trials > 0) {
    res.crash_rate = static_cast<double>(crashes) / trials;
    res.success_rate = static_cast<double>(successes) / trials;
    res.mean_reward /= trials;
  }
  return res;
}

std::string format_trial(const TrialResult& t) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "seed %llu outcome %s reward %.6f min_distance %.6f steps %d",
                static_cast<unsigned long long>(t.seed), t.outcome.c_str(), t.reward, t.min_distance, t.steps);
  return buf;
}

std::vector<Scene> generate_planning_data(const PlanTask& task, int num_scenes, int future_steps,
                                          std::uint64_t seed, double obs_noise) {
  task.validate();
  const std::array<double, 5> levels = {-3.0, -1.5, 0.0, 1.5, 2.5};
  const int total = task.history + future_steps;
  const int hold = std::max(1, static_cast<int>(std::lround(1.0 / task.dt)));
  std::vector<Scene> out;
  for (int sc = 0; sc < num_scenes; ++sc) {
    std::mt19937_64 rng(mix(seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(sc)));
    EgoState ego{between(rng, -10.0, 28.0), between(rng, 0.0, 10.0)};
    auto cars = draw_cars(task, rng, -3.0, 8.0, 6.0, 18.0);
    Scene s;
    s.scene_id = sc;
    s.dt = task.dt;
    std::array<std::vector<Point2>, 3> pos;
    double accel = 0.0;
    for (int i = 0; i < total; ++i) {
      auto noisy = [&](Point2 p) { return p + Point2{obs_noise * standard_normal(rng), obs_noise * standard_normal(rng)}; };
      pos[0].push_back(noisy(ego_path_point(ego.s)));
      for (int c = 0; c < 2; ++c) pos[c + 1].push_back(noisy(cars[c].position()));
      if (i % hold == 0) accel = levels[static_cast<std::size_t>(uniform01(rng) * levels.size())];
      ego = advance_ego(task, ego, accel);
      for (Car& c : cars) c.y -= c.v * task.dt;
    }
    for (int a = 0; a < 3; ++a) {
      AgentTrack t;
      t.id = a;
      t.past.assign(pos[a].begin(), pos[a].begin() + task.history);
      t.future.assign(pos[a].begin() + task.history, pos[a].end());
      s.agents.push_back(std::move(t));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mfp
