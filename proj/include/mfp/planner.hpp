// SPDX-License-Identifier: Apache-2.0
//
// Unprotected left turn: the ego drives north, turns left across the lane of
// two southbound cars and exits west. The only control is longitudinal
// acceleration along the fixed path.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfp/decoder.hpp"

namespace mfp {

struct PlanTask {
  double dt = 0.2;
  int substeps = 4;  // collision checks per step
  int history = 6;   // past points handed to the model
  int horizon = 15;  // planning horizon in steps
  int max_steps = 100;

  double a_max = 3.0;
  double v_max = 12.0;
  double ego_v0 = 5.0;

  double d_collide = 2.5;       // planner buffer around predicted means
  double crash_distance = 2.0;  // simulator contact distance
  double reward_collision = -500.0;
  double reward_success = 10.0;
  double velocity_bonus = 0.01;  // per step, times speed in m/s

  // Oncoming cars: arrival time of the first car at the conflict point, gap
  // to the second, and speed ranges.
  double arrival_lo = 1.0, arrival_hi = 5.0;
  double gap_lo = 1.5, gap_hi = 4.0;
  double car_speed_lo = 8.0, car_speed_hi = 12.0;
  // Test-time perturbations applied after the initial positions are drawn.
  double speed_offset = 0.0;
  double car_accel = 0.0;

  void validate() const;
};

/// Point at arc length s along the ego path (straight extension for s < 0).
Point2 ego_path_point(double s);
double ego_goal_s();

/// Acceleration `accel` until `switch_time`, then coasting at constant speed.
struct Profile {
  double accel = 0.0;
  double switch_time = 0.0;
  double accel_at(double t) const { return t < switch_time ? accel : 0.0; }
};

/// Three acceleration levels times three switch times.
std::vector<Profile> default_candidates();

struct EgoState {
  double s = 0.0;
  double v = 0.0;
};

/// Advances the ego for one step of length dt under constant acceleration.
EgoState advance_ego(const PlanTask& task, EgoState ego, double accel);
/// Positions and speeds after each of `steps` steps.
std::pair<std::vector<Point2>, std::vector<double>> roll_profile(const PlanTask& task, EgoState ego,
                                                                 const Profile& p, int steps);

struct CandidateScore {
  double expected_reward = 0.0;
  double collision_prob = 0.0;
};

/// Scores every candidate against per-mode conditional mean rollouts of the
/// other agents, weighted by their prior mode probabilities. `scene` holds
/// the recent history of all agents; `ego` indexes the planning agent.
std::vector<CandidateScore> score_candidates(Model& model, const Scene& scene, int ego, EgoState state,
                                             const std::vector<Profile>& candidates, const PlanTask& task);
CandidateScore score_candidate(Model& model, const Scene& scene, int ego, EgoState state, const Profile& candidate,
                               const PlanTask& task);

/// Index of the best candidate; ties go to the lowest index.
int plan_step(Model& model, const Scene& scene, int ego, EgoState state, const std::vector<Profile>& candidates,
              const PlanTask& task);

enum class Policy { planner, always_accelerate };

struct TrialResult {
  std::uint64_t seed = 0;
  std::string outcome;  // "success", "crash" or "timeout"
  double reward = 0.0;
  double min_distance = 0.0;
  int steps = 0;
};

struct ClosedLoopResult {
  std::vector<TrialResult> trials;
  double crash_rate = 0.0;
  double success_rate = 0.0;
  double mean_reward = 0.0;
};

/// Receding-horizon closed loop: replan every step, execute the first step.
ClosedLoopResult closed_loop_eval(const PlanTask& task, Model* model, int trials, std::uint64_t seed,
                                  Policy policy = Policy::planner);
std::string format_trial(const TrialResult& t);

/// Training scenes for the task: random ego acceleration schedules with
/// scripted oncoming cars, sampled at the task step.
std::vector<Scene> generate_planning_data(const PlanTask& task, int num_scenes, int future_steps,
                                          std::uint64_t seed, double obs_noise = 0.05);

}  // namespace mfp
