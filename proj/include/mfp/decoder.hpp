// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfp/bivariate.hpp"
#include "mfp/encoder.hpp"
#include "mfp/latent.hpp"

namespace mfp {

enum class Forcing { interactive, classmates, teacher };
enum class Feedback { mean, sample };

const char* forcing_name(Forcing f);
Forcing parse_forcing(const std::string& name);

struct RolloutConfig {
  int horizon = 0;  // 0: the scene's future length
  Forcing forcing = Forcing::interactive;
  // One mode per agent, or a single entry shared by every agent.
  std::vector<int> modes = {0};
  Feedback feedback = Feedback::mean;
  std::uint64_t seed = 0;
};

struct RolloutResult {
  std::vector<int> modes;                                   // per agent
  std::vector<std::vector<BivariateNormalParams>> density;  // [agent][step], world frame
  std::vector<std::vector<Point2>> realized;                // [agent][step]
  std::vector<double> loglik;                               // per agent; empty without ground truth
  std::vector<std::vector<double>> step_loglik;             // [agent][step]
  std::vector<std::vector<int>> z_trace;                    // [agent][step] mode fed to the decoder
  std::vector<char> emits;                                  // 0 for a conditioned agent
};

/// A batch of rollouts over one scene. Column c = r * N + n is agent n in
/// rollout r; every column sees the other agents through the forcing rule.
struct BatchSpec {
  Forcing forcing = Forcing::interactive;
  Feedback feedback = Feedback::mean;
  int horizon = 0;
  std::vector<std::vector<int>> modes;  // [rollout][agent]
  int fixed_agent = -1;
  std::vector<std::vector<Point2>> fixed_future;  // [rollout][step], when fixed_agent >= 0
  bool score = false;  // per-step NLL of the ground-truth future
  std::uint64_t seed = 0;
};

struct BatchOutput {
  int rollouts = 0;
  int agents = 0;
  int horizon = 0;
  std::vector<Var> raw;       // per step, 5 x B head outputs
  std::vector<Var> mean;      // per step, 2 x B world-frame means
  std::vector<Var> realized;  // per step, 2 x B fed-back positions
  std::vector<Var> nll;       // per step, 1 x B (score only)
  std::vector<double> heading;           // per column
  std::vector<std::vector<int>> z_trace;  // [step][column]
};

BatchOutput run_batch(Tape& tape, Model& model, const Scene& scene, const SceneEncoding& enc, const BatchSpec& spec);
RolloutResult extract_rollout(const BatchOutput& out, int rollout, const BatchSpec& spec);

struct DecodeStep {
  Vec h;
  BivariateNormalParams density;  // agent PoV frame
};

/// One decoder step for a single agent: GRU over [e | z | f], then the head.
DecodeStep decode_step(Model& model, const Vec& h, const Vec& e, const Vec& z_onehot, const Vec& f);

RolloutResult rollout(Model& model, const Scene& scene, const RolloutConfig& cfg);

/// `num_samples` interactive mean rollouts, each with per-agent modes drawn
/// independently from the priors. Sample i only depends on the seed and i.
std::vector<RolloutResult> sample_joint(Model& model, const Scene& scene, int num_samples, std::uint64_t seed,
                                        int horizon = 0);
/// The per-agent mode assignments sample_joint would draw.
std::vector<std::vector<int>> sample_modes(const std::vector<LatentDist>& priors, int num_samples,
                                           std::uint64_t seed);

/// Rollout with agent `fixed_agent` replaying `fixed_future`. Other agents
/// respond to it; the fixed agent emits no densities.
RolloutResult conditional_rollout(Model& model, const Scene& scene, int fixed_agent,
                                  const std::vector<Point2>& fixed_future, const RolloutConfig& cfg);

struct ModeLogliks {
  std::vector<LatentDist> prior;                     // per agent
  std::vector<std::vector<double>> total;            // [agent][mode]
  std::vector<std::vector<std::vector<double>>> step;  // [agent][mode][step]
};

/// Log-likelihood of every agent's ground-truth future under each mode, all
/// agents sharing the mode index within a rollout.
ModeLogliks per_mode_loglik(Model& model, const Scene& scene, Forcing forcing, int horizon = 0);

}  // namespace mfp
