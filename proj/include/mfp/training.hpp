// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfp/decoder.hpp"
#include "mfp/optim.hpp"

namespace mfp {

struct TrainConfig {
  int phase1_updates = 4000;  // likelihood and decoder inputs use phase1_forcing
  int phase2_updates = 2000;  // decoder inputs come from interactive rollouts
  Forcing phase1_forcing = Forcing::classmates;
  // Posterior likelihood weight ramps geometrically from anneal_start to 1
  // over the first anneal_updates updates; 0 disables the ramp.
  int anneal_updates = 2000;
  double anneal_start = 1e-3;
  double lr0 = 1e-3;
  int lr_decay_every = 2000;
  double lr_floor = 5e-5;
  double clip_norm = 10.0;
  int validate_every = 500;  // 0: validate only after the last update
  Forcing eval_forcing = Forcing::teacher;
  bool f32_storage = true;  // round parameters and moments to float after each update
  std::uint64_t seed = 1;

  int total_updates() const { return phase1_updates + phase2_updates; }
  void validate() const;
};

/// lr0 / 10^floor(update / lr_decay_every), never below lr_floor.
double learning_rate(const TrainConfig& config, long update);

/// Weight on the per-mode log-likelihoods when forming the training posterior.
double posterior_weight(const TrainConfig& config, long update);

struct LossResult {
  double loss = 0.0;  // posterior-weighted NLL plus the prior KL, summed over agents
  double nll = 0.0;   // posterior-weighted NLL part
  double kl = 0.0;
  PosteriorTable posterior;
  std::vector<LatentDist> prior;
  std::vector<std::vector<double>> logliks;  // [agent][mode]
  int agent_steps = 0;
};

/// E-step with the current parameters, then the M-step objective. When
/// `grad_scale` is nonzero the gradient of grad_scale * loss is accumulated
/// into every Param::grad. A non-empty `fixed_posterior` replaces the E-step.
/// The E-step uses prior * exp(beta * loglik), normalised.
LossResult scene_loss(Model& model, const Scene& scene, Forcing forcing, double grad_scale = 0.0,
                      const PosteriorTable* fixed_posterior = nullptr, double beta = 1.0);

/// Mean over agents of the negative marginal log-likelihood of the whole
/// future, marginalised exactly over modes.
double dataset_nll(Model& model, std::span<const Scene> scenes, Forcing forcing);

struct TrainState {
  Model model;
  AdamState adam;
  long update = 0;
};

TrainState make_train_state(const ModelConfig& model_config, std::uint64_t seed);

/// Index into the training split used at `update`. Each epoch is a fresh
/// permutation derived from (seed, epoch).
int scene_for_update(std::uint64_t seed, long update, int num_scenes);

struct TrainLogEntry {
  long update = 0;
  int phase = 1;
  double lr = 0.0;
  double loss = 0.0;  // per agent-step
  double grad_norm = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> steps;
  std::vector<std::pair<long, double>> validation;  // (update, NLL)
};

/// Runs updates from state.update up to `stop_at` (default: the full budget).
/// Each line of the metrics log is passed to `sink` when given.
TrainResult train(TrainState& state, std::span<const Scene> train_set, std::span<const Scene> val_set,
                  const TrainConfig& config, const std::function<void(const std::string&)>& sink = {},
                  long stop_at = -1);

std::string format_log_entry(const TrainLogEntry& e);

}  // namespace mfp
