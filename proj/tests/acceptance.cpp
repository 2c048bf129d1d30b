// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Takes about 12 minutes on a single core. Criterion
// numbers given as arguments restrict the run to those criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mfp/checkpoint.hpp"
#include "mfp/data.hpp"
#include "mfp/eval.hpp"
#include "mfp/gradcheck.hpp"
#include "mfp/latent.hpp"
#include "mfp/optim.hpp"
#include "mfp/planner.hpp"
#include "support.hpp"

using namespace mfp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared synthetic intersection data: 2000 training and 500 test scenes.
struct Intersection {
  std::vector<Scene> train, test;
};

const Intersection& intersection() {
  static const Intersection d = [] {
    ScenarioConfig sc;
    sc.num_scenes = 2500;
    sc.seed = 11;
    const auto scenes = window_scenes(generate_synthetic(sc), WindowSpec{});
    if (scenes.size() < 2500) throw Error("acceptance: expected one window per scene");
    Intersection out;
    out.train.assign(scenes.begin(), scenes.begin() + 2000);
    out.test.assign(scenes.begin() + 2000, scenes.begin() + 2500);
    return out;
  }();
  return d;
}

TrainConfig budget(int updates, std::uint64_t seed) {
  TrainConfig c;
  c.phase1_updates = updates * 2 / 3;
  c.phase2_updates = updates - c.phase1_updates;
  c.lr_decay_every = c.phase1_updates;
  c.validate_every = 0;
  c.seed = seed;
  return c;
}

struct Trained {
  TrainState state;
  double seconds = 0.0;
};

// 6000-update models on the intersection data, trained once per K.
Trained& intersection_model(int modes) {
  static std::map<int, Trained> cache;
  if (auto it = cache.find(modes); it != cache.end()) return it->second;
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.modes = modes;
  Trained t{make_train_state(mc, 1), 0.0};
  train(t.state, intersection().train, {}, budget(6000, 1));
  t.seconds = seconds_since(t0);
  std::printf("  trained K=%d in %.0f s\n", modes, t.seconds);
  std::fflush(stdout);
  return cache.emplace(modes, std::move(t)).first->second;
}

Scene random_scene_for(std::mt19937_64& rng, int agents, int past, int future, std::int64_t id) {
  return test::random_scene(rng, agents, past, future, 0.2, id);
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const Scene s = random_scene_for(rng, 3, 6, 10, 0);
  ModelConfig mc;
  mc.modes = 3;
  Model model = make_model(mc, 3);
  model.mean_future = dataset_mean_future(std::vector<Scene>{s});
  auto params = model.parameters();
  // Zero-initialised biases sit exactly on relu kinks; move off them.
  test::jitter(params, rng, 0.02);
  double worst = 0.0;
  int blocks = 0, entries = 0;
  bool ok = true;
  for (Forcing f : {Forcing::classmates, Forcing::teacher, Forcing::interactive}) {
    auto loss = [&] { return scene_loss(model, s, f).loss; };
    auto analytic = [&] {
      zero_grads(params);
      scene_loss(model, s, f, 1.0);
    };
    GradCheckOptions o;
    o.max_entries_per_block = 12;
    o.kink_retries = 0;
    const GradCheckReport rep = grad_check(params, loss, analytic, o);
    for (const GradCheckBlock& b : rep.blocks) {
      worst = std::max(worst, b.max_rel_error);
      entries += b.checked;
      ok = ok && b.max_rel_error < 1e-4;
    }
    blocks = static_cast<int>(rep.blocks.size());
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0,
          fmt("%d blocks x 3 forcings, %d entries, max rel error %.2e, %.1f s", blocks, entries, worst, secs)};
}

Outcome exact_posterior_identity() {
  std::mt19937_64 rng(202);
  ModelConfig mc;
  mc.modes = 3;
  Model model = make_model(mc, 4);
  test::jitter(model.parameters(), rng, 0.05);
  double worst = 0.0;
  int agents = 0;
  for (int i = 0; i < 50; ++i) {
    const Scene s = random_scene_for(rng, 1 + i % 4, 6, 10, i);
    const ModeLogliks ml = per_mode_loglik(model, s, Forcing::teacher);
    const auto& prior = ml.prior;
    for (int a = 0; a < s.num_agents(); ++a) {
      const LatentDist q = exact_posterior(prior[a], ml.total[a]);
      const double gap = std::abs(elbo(q, prior[a], ml.total[a]) - marginal_loglik(prior[a], ml.total[a]));
      worst = std::max(worst, gap);
      ++agents;
    }
  }
  return {worst <= 1e-8, fmt("%d agents, max |ELBO - log p| %.2e", agents, worst)};
}

Outcome multimodality() {
  const auto& d = intersection();
  Trained& k1 = intersection_model(1);
  Trained& k3 = intersection_model(3);
  Trained& k4 = intersection_model(4);
  const auto t0 = Clock::now();
  const double n1 = dataset_nll(k1.state.model, d.test, Forcing::teacher);
  const double n3 = dataset_nll(k3.state.model, d.test, Forcing::teacher);
  const double n4 = dataset_nll(k4.state.model, d.test, Forcing::teacher);
  const double total = k1.seconds + k3.seconds + k4.seconds + seconds_since(t0);
  return {n3 <= n1 - 1.0 && n4 <= n3 + 0.1 && total < 1800.0,
          fmt("test NLL K1 %.3f, K3 %.3f, K4 %.3f nats; %.0f s total", n1, n3, n4, total)};
}

Outcome mode_recovery_purity() {
  const ModeRecovery r = mode_recovery(intersection_model(3).state.model, intersection().test);
  std::string roles;
  for (const RoleRecovery& rr : r.roles) roles += fmt(" role%d %.3f", rr.role, rr.purity);
  return {r.purity >= 0.9, fmt("pooled purity %.4f over %d agents;%s", r.purity, r.agents, roles.c_str())};
}

Outcome baseline_ordering() {
  const auto& test = intersection().test;
  const std::vector<int> steps = {5, 10, 15, test.front().future_len()};
  const auto mfp1 = rmse_per_horizon(intersection_model(1).state.model, test, steps);
  const auto cv = cv_rmse_per_horizon(test, steps);
  bool ok = true;
  std::string detail;
  for (std::size_t h = 0; h < steps.size(); ++h) {
    ok = ok && mfp1[h] < cv[h];
    detail += fmt("%s%.1fs %.3f vs CV %.3f", h ? ", " : "", steps[h] * test.front().dt, mfp1[h], cv[h]);
  }
  return {ok, "MFP-1 RMSE " + detail};
}

Outcome hypothetical_rollouts() {
  std::vector<Scene> yield;
  for (const Scene& s : intersection().test)
    if (s.agents[0].role == kRoleA && s.agents[0].mode == kAYield) yield.push_back(s);
  Model& model = intersection_model(3).state.model;
  const HypoResult r = hypo_compare(model, yield, 5, 0, 21);

  // Interaction-free control: the dynamic encoder ignores every other agent.
  Model free = model;
  free.params.dyn_w1.value.rightCols(free.params.dyn_w1.value.cols() - free.config.value_dim).setZero();
  const HypoResult c = hypo_compare(free, yield, 5, 0, 21);
  const double gap = std::max(std::abs(c.hypo_ade - c.standard_ade), std::abs(c.hypo_fde - c.standard_fde));
  return {r.hypo_ade <= r.standard_ade && gap <= 1e-9,
          fmt("%d yield scenes, minADE hypo %.4f vs standard %.4f; interaction-free gap %.1e", r.scenes, r.hypo_ade,
              r.standard_ade, gap)};
}

Outcome min_metric_coherence() {
  std::mt19937_64 rng(303);
  std::vector<Scene> scenes;
  for (int i = 0; i < 8; ++i) scenes.push_back(random_scene_for(rng, 2, 6, 8, i));
  Model m = make_model(test::tiny_config(2), 9);
  test::jitter(m.parameters(), rng, 0.5);
  bool nested = true;
  double worst = 0.0;
  for (Displacement kind : {Displacement::ade, Displacement::fde, Displacement::rmse}) {
    double last = 1e300;
    for (int s : {1, 2, 3, 5, 8, 13, 40}) {
      const double v = min_displacement(m, scenes, s, kind, 17);
      nested = nested && v <= last;
      last = v;
    }
    // 64 draws cover all four joint assignments for these scenes.
    const auto many = min_displacement_per_scene(m, scenes, 64, kind, 17);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      double best = 1e300;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          RolloutConfig cfg;
          cfg.modes = {a, b};
          best = std::min(best, sample_error(rollout(m, scenes[i], cfg).realized, scenes[i], kind, {1, 1}));
        }
      worst = std::max(worst, std::abs(many[i] - best));
    }
  }
  return {nested && worst <= 1e-8,
          fmt("nested non-increasing: %s; max gap to enumeration %.1e", nested ? "yes" : "no", worst)};
}

Outcome forcing_comparison() {
  const auto& d = intersection();
  const std::vector<Scene> val(d.test.begin(), d.test.begin() + 250);
  double sum[2] = {0.0, 0.0};
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    int i = 0;
    for (Forcing f : {Forcing::classmates, Forcing::teacher}) {
      TrainConfig c;
      c.phase1_updates = 2000;
      c.phase2_updates = 0;
      c.lr_decay_every = 2000;
      c.phase1_forcing = f;
      c.validate_every = 0;
      c.seed = seed;
      ModelConfig mc;
      mc.modes = 3;
      TrainState st = make_train_state(mc, seed);
      train(st, d.train, {}, c);
      const double v = dataset_nll(st.model, val, Forcing::classmates);
      sum[i++] += v / 3.0;
      detail += fmt(" s%d-%s %.3f", static_cast<int>(seed), forcing_name(f), v);
    }
  }
  return {sum[0] <= sum[1], fmt("mean val NLL classmates %.3f vs teacher %.3f;", sum[0], sum[1]) + detail};
}

Outcome planner_robustness() {
  PlanTask task;
  const auto data = generate_planning_data(task, 2000, task.horizon, 5);
  ModelConfig mc;
  mc.modes = 3;
  TrainState st = make_train_state(mc, 1);
  train(st, data, {}, budget(3000, 1));
  PlanTask fast = task;
  fast.speed_offset = 5.0;
  const double nominal = closed_loop_eval(task, &st.model, 100, 77).crash_rate;
  const double perturbed = closed_loop_eval(fast, &st.model, 100, 77).crash_rate;
  const double control = closed_loop_eval(task, nullptr, 100, 77, Policy::always_accelerate).crash_rate;
  const double control_fast = closed_loop_eval(fast, nullptr, 100, 77, Policy::always_accelerate).crash_rate;
  return {nominal <= 0.05 && perturbed <= 0.10 && control > 0.10,
          fmt("crash rate nominal %.2f, +5 m/s %.2f; always-accelerate %.2f (+5 m/s %.2f)", nominal, perturbed, control,
              control_fast)};
}

Outcome determinism_and_persistence() {
  const auto& d = intersection();
  const std::vector<Scene> train_set(d.train.begin(), d.train.begin() + 200);
  const std::vector<Scene> val(d.test.begin(), d.test.begin() + 50);
  TrainConfig c = budget(300, 9);
  c.validate_every = 100;
  ModelConfig mc;
  mc.modes = 3;
  auto run = [&] {
    TrainState st = make_train_state(mc, 9);
    std::string log;
    train(st, train_set, val, c, [&](const std::string& l) { log += l + "\n"; });
    return std::make_pair(std::move(st), log);
  };
  auto [a, log_a] = run();
  auto [b, log_b] = run();
  const bool same_log = log_a == log_b && !log_a.empty();

  Checkpoint ckpt;
  ckpt.train_config = c;
  ckpt.state = std::move(a);
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto path = (std::filesystem::temp_directory_path() / "mfp_acceptance.ckpt").string();
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  const bool same_bytes = serialize_checkpoint(back) == bytes;
  const double before = dataset_nll(ckpt.state.model, val, c.eval_forcing);
  const double after = dataset_nll(back.state.model, val, c.eval_forcing);
  return {same_log && same_bytes && std::abs(before - after) <= 1e-6,
          fmt("logs identical: %s; checkpoint bytes identical: %s; val NLL %.6f vs %.6f", same_log ? "yes" : "no",
              same_bytes ? "yes" : "no", before, after)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"exact-posterior identity", exact_posterior_identity},
      {"multimodality benefit", multimodality},
      {"mode recovery", mode_recovery_purity},
      {"baseline ordering", baseline_ordering},
      {"hypothetical rollouts", hypothetical_rollouts},
      {"min-metric coherence", min_metric_coherence},
      {"classmates vs teacher forcing", forcing_comparison},
      {"planner robustness", planner_robustness},
      {"determinism and persistence", determinism_and_persistence},
  };
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion number...]\n", argv[0]);
      return 2;
    }
    selected[n - 1] = true;
  }
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++run;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", run - failed, run);
  return failed ? 1 : 0;
}
