// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mfp/decoder.hpp"

namespace mfp {

/// Mean over agents of the per-step negative marginal log-likelihood at each
/// 1-based future step in `steps`.
std::vector<double> nll_per_horizon(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps,
                                    Forcing forcing = Forcing::teacher);

/// RMSE of the interactive mean rollout with every agent in its most likely
/// prior mode, pooled over all agent-scene pairs at each step.
std::vector<double> rmse_per_horizon(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps);

/// Same pooling for constant-velocity extrapolation of the last past step.
std::vector<double> cv_rmse_per_horizon(std::span<const Scene> scenes, const std::vector<int>& steps);
std::vector<Point2> constant_velocity(const AgentTrack& agent, int horizon);

enum class Displacement { ade, fde, msd, rmse };
const char* displacement_name(Displacement kind);

/// Error of one joint sample against the ground truth, over agents with
/// include[n] != 0: mean distance (ADE), mean final distance (FDE), mean
/// squared distance (MSD) or its root (RMSE).
double sample_error(const std::vector<std::vector<Point2>>& predicted, const Scene& scene, Displacement kind,
                    const std::vector<char>& include);

/// Seed of the joint samples drawn for a scene.
std::uint64_t scene_sample_seed(std::uint64_t seed, const Scene& scene);

/// Per scene, the best of `num_samples` joint samples; averaged over scenes.
double min_displacement(Model& model, std::span<const Scene> scenes, int num_samples, Displacement kind,
                        std::uint64_t seed);
/// The per-scene minima min_displacement averages.
std::vector<double> min_displacement_per_scene(Model& model, std::span<const Scene> scenes, int num_samples,
                                               Displacement kind, std::uint64_t seed);

struct RoleRecovery {
  int role = -1;
  std::vector<int> labels;  // distinct generator labels, ascending
  Mat confusion;            // labels x modes counts
  double purity = 0.0;      // best one-to-one label-mode matching accuracy
  std::vector<int> matching;  // mode matched to each label, -1 if none
};

struct ModeRecovery {
  std::vector<RoleRecovery> roles;
  double purity = 0.0;  // pooled over roles with more than one label
  int agents = 0;
};

/// Assigns each agent its argmax-posterior mode and matches modes to labels
/// per role.
ModeRecovery mode_recovery(Model& model, std::span<const Scene> scenes, Forcing forcing = Forcing::classmates);

/// Maximum-weight one-to-one matching of rows to columns; returns the chosen
/// column per row (-1 when unmatched) and the total weight.
std::pair<std::vector<int>, double> best_matching(const Mat& weights);

struct HypoResult {
  double standard_ade = 0.0;
  double hypo_ade = 0.0;
  double standard_fde = 0.0;
  double hypo_fde = 0.0;
  int scenes = 0;
};

/// Paired min-over-samples ADE/FDE of all agents except `fixed_agent`,
/// without (standard) and with (hypothetical) its ground-truth future fixed.
/// Both arms use the same per-agent mode draws.
HypoResult hypo_compare(Model& model, std::span<const Scene> scenes, int num_samples, int fixed_agent,
                        std::uint64_t seed);

struct MetricReport {
  std::vector<int> steps;
  double dt = 0.0;
  std::vector<double> nll;
  std::vector<double> nll_classmates;
  double total_nll = 0.0;  // whole-future marginal, per agent
  std::vector<double> rmse;
  std::vector<double> cv_rmse;
  std::vector<int> sample_counts;
  std::map<std::string, std::vector<double>> min_metrics;  // name -> per sample count
  int scenes = 0;
};

MetricReport evaluate(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps,
                      const std::vector<int>& sample_counts, std::uint64_t seed);

/// One metric per line: name, horizon (seconds, or sample count), value.
std::string format_report(const MetricReport& r);
/// Tab-separated table with a header row.
std::string format_report_table(const MetricReport& r);

}  // namespace mfp
