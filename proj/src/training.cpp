// SPDX-License-Identifier: Apache-2.0
#include "mfp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace mfp {

void TrainConfig::validate() const {
  if (phase1_updates < 0 || phase2_updates < 0) throw Error("TrainConfig: update counts must be >= 0");
  if (!(lr0 > 0.0) || !(lr_floor >= 0.0)) throw Error("TrainConfig: bad learning rate");
  if (lr_decay_every < 1) throw Error("TrainConfig: lr_decay_every must be >= 1");
  if (!(clip_norm > 0.0)) throw Error("TrainConfig: clip_norm must be positive");
  if (validate_every < 0) throw Error("TrainConfig: validate_every must be >= 0");
  if (anneal_updates < 0 || !(anneal_start > 0.0 && anneal_start <= 1.0))
    throw Error("TrainConfig: anneal_updates must be >= 0 and anneal_start in (0, 1]");
}

double learning_rate(const TrainConfig& config, long update) {
  const long drops = update / config.lr_decay_every;
  double lr = config.lr0;
  for (long i = 0; i < drops && lr > config.lr_floor; ++i) lr /= 10.0;
  return std::max(lr, config.lr_floor);
}

double posterior_weight(const TrainConfig& config, long update) {
  if (update >= config.anneal_updates) return 1.0;
  const double frac = static_cast<double>(update) / config.anneal_updates;
  return std::exp(std::log(config.anneal_start) * (1.0 - frac));
}

LossResult scene_loss(Model& model, const Scene& scene, Forcing forcing, double grad_scale,
                      const PosteriorTable* fixed_posterior, double beta) {
  if (!scene.has_future()) throw DataError("scene_loss: scene has no future");
  const int n = scene.num_agents(), k = model.config.modes;
  Tape tape(grad_scale != 0.0);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  BatchSpec spec;
  spec.forcing = forcing;
  spec.score = true;
  for (int r = 0; r < k; ++r) spec.modes.push_back(std::vector<int>(n, r));
  const BatchOutput out = run_batch(tape, model, scene, enc, spec);

  Var nll_sum = out.nll[0];
  for (std::size_t s = 1; s < out.nll.size(); ++s) nll_sum = ad::add(nll_sum, out.nll[s]);

  LossResult res;
  res.agent_steps = n * out.horizon;
  res.prior = prior_probs(enc.prior_logits.value());
  res.logliks.assign(n, std::vector<double>(k));
  for (int a = 0; a < n; ++a)
    for (int r = 0; r < k; ++r) res.logliks[a][r] = -nll_sum.value()(0, r * n + a);
  if (fixed_posterior) {
    if (static_cast<int>(fixed_posterior->size()) != n) throw ShapeError("scene_loss: posterior table size");
    res.posterior = *fixed_posterior;
  } else {
    for (int a = 0; a < n; ++a) {
      std::vector<double> ll = res.logliks[a];
      for (double& v : ll) v *= beta;
      res.posterior.push_back(exact_posterior(res.prior[a], ll));
    }
  }

  Mat w(1, k * n), post(k, n);
  double entropy_term = 0.0;
  for (int a = 0; a < n; ++a)
    for (int r = 0; r < k; ++r) {
      const double q = res.posterior[a].at(r);
      w(0, r * n + a) = q;
      post(r, a) = q;
      if (q > 0.0) entropy_term += q * std::log(q);
    }
  Var nll_term = ad::dot_const(nll_sum, w);
  Var kl_term = ad::add_const(ad::scale(ad::dot_const(ad::log_softmax_cols(enc.prior_logits), post), -1.0),
                              Mat::Constant(1, 1, entropy_term));
  Var loss = ad::add(nll_term, kl_term);
  res.nll = nll_term.scalar();
  res.kl = kl_term.scalar();
  res.loss = loss.scalar();
  if (grad_scale != 0.0) tape.backward(loss, grad_scale);
  return res;
}

double dataset_nll(Model& model, std::span<const Scene> scenes, Forcing forcing) {
  double total = 0.0;
  long count = 0;
  for (const Scene& s : scenes) {
    const ModeLogliks ml = per_mode_loglik(model, s, forcing);
    for (int a = 0; a < s.num_agents(); ++a) {
      total -= marginal_loglik(ml.prior[a], ml.total[a]);
      ++count;
    }
  }
  if (count == 0) throw DataError("dataset_nll: no agents");
  return total / static_cast<double>(count);
}

TrainState make_train_state(const ModelConfig& model_config, std::uint64_t seed) {
  TrainState st{make_model(model_config, seed), {}, 0};
  auto params = st.model.parameters();
  round_to_f32(params);
  st.adam = make_adam_state(params);
  return st;
}

int scene_for_update(std::uint64_t seed, long update, int num_scenes) {
  if (num_scenes < 1) throw DataError("scene_for_update: empty training split");
  const long epoch = update / num_scenes;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
  std::vector<int> perm(num_scenes);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = num_scenes - 1; i > 0; --i) std::swap(perm[i], perm[rng() % static_cast<std::uint64_t>(i + 1)]);
  return perm[update % num_scenes];
}

std::string format_log_entry(const TrainLogEntry& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "update %ld phase %d lr %.6f loss %.6f grad_norm %.6f", e.update, e.phase, e.lr,
                e.loss, e.grad_norm);
  return buf;
}

TrainResult train(TrainState& state, std::span<const Scene> train_set, std::span<const Scene> val_set,
                  const TrainConfig& config, const std::function<void(const std::string&)>& sink, long stop_at) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training split");
  Model& model = state.model;
  if (state.update == 0 && model.mean_future.empty()) {
    model.mean_future = dataset_mean_future(train_set);
    if (config.f32_storage)
      for (Point2& p : model.mean_future) p = {static_cast<float>(p.x), static_cast<float>(p.y)};
  }
  auto params = model.parameters();
  if (state.adam.m.size() != params.size()) state.adam = make_adam_state(params);

  const long total = config.total_updates();
  const long stop = stop_at < 0 ? total : std::min<long>(stop_at, total);
  const int num = static_cast<int>(train_set.size());
  TrainResult result;
  auto emit = [&](const std::string& line) {
    if (sink) sink(line);
  };

  while (state.update < stop) {
    const long u = state.update;
    const int phase = u < config.phase1_updates ? 1 : 2;
    const Forcing forcing = phase == 1 ? config.phase1_forcing : Forcing::interactive;
    const Scene& scene = train_set[scene_for_update(config.seed, u, num)];
    const double lr = learning_rate(config, u);
    zero_grads(params);
    LossResult res;
    const double scale = 1.0 / (scene.num_agents() * scene.future_len());
    try {
      res = scene_loss(model, scene, forcing, scale, nullptr, posterior_weight(config, u));
    } catch (const NumericError& e) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at update %ld (lr %.6g, scene %lld): ", u, lr,
                    static_cast<long long>(scene.scene_id));
      throw NumericError(buf + std::string(e.what()));
    }
    if (!std::isfinite(res.loss)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at update %ld (lr %.6g): loss is not finite", u, lr);
      throw NumericError(buf);
    }
    TrainLogEntry entry{u + 1, phase, lr, res.loss * scale, clip_grad_norm(params, config.clip_norm)};
    if (!std::isfinite(entry.grad_norm)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at update %ld (lr %.6g): gradient is not finite", u, lr);
      throw NumericError(buf);
    }
    adam_update(params, state.adam, lr);
    if (config.f32_storage) round_to_f32(params, &state.adam);
    state.update = u + 1;
    result.steps.push_back(entry);
    emit(format_log_entry(entry));

    const bool due =
        state.update == total || (config.validate_every > 0 && state.update % config.validate_every == 0);
    if (due && !val_set.empty()) {
      const double v = dataset_nll(model, val_set, config.eval_forcing);
      result.validation.emplace_back(state.update, v);
      char buf[96];
      std::snprintf(buf, sizeof buf, "validation update %ld nll %.6f", state.update, v);
      emit(buf);
    }
  }
  return result;
}

}  // namespace mfp
