// SPDX-License-Identifier: Apache-2.0
//
// mfp: data generation, training, evaluation, prediction, hypothetical
// queries and planning from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mfp/checkpoint.hpp"
#include "mfp/data.hpp"
#include "mfp/eval.hpp"
#include "mfp/planner.hpp"
#include "mfp/svg.hpp"

#ifndef MFP_VERSION
#define MFP_VERSION "unknown"
#endif

namespace {

using json = nlohmann::json;
using namespace mfp;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw Error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_manifest(const std::string& path, const std::string& command, json config, std::uint64_t seed,
                    json outputs) {
  json m = {{"command", command},
            {"config", std::move(config)},
            {"seed", seed},
            {"version", MFP_VERSION},
            {"outputs", std::move(outputs)}};
  write_file(path, m.dump(2) + "\n");
}

// Dataset options shared by every command that reads trajectories.
struct DataOptions {
  std::string data;
  std::string labels;
  double rate = 20.0;
  WindowSpec window;
  std::array<double, 3> fractions = {0.7, 0.1, 0.2};

  void add(CLI::App* app, bool required) {
    auto* opt = app->add_option("--data", data, "trajectory CSV (scene_id,agent_id,frame,x,y)");
    if (required) opt->required();
    app->add_option("--labels", labels, "mode-label sidecar (default: <data>.labels if present)");
    app->add_option("--rate", rate, "sample rate of the file in Hz")->check(CLI::PositiveNumber);
    app->add_option("--past-steps", window.past_steps, "past points per window, including the split time");
    app->add_option("--future-steps", window.future_steps, "future points per window");
    app->add_option("--stride", window.stride, "window stride in subsampled frames");
    app->add_option("--subsample", window.subsample, "keep every n-th frame");
    app->add_option("--cluster-radius", window.cluster_radius, "agent cluster radius in metres");
  }

  json to_json() const {
    return {{"data", data},
            {"labels", labels},
            {"rate", rate},
            {"past", window.past_steps},
            {"future", window.future_steps},
            {"stride", window.stride},
            {"subsample", window.subsample},
            {"cluster_radius", window.cluster_radius},
            {"fractions", fractions}};
  }

  Split load(std::uint64_t split_seed) const {
    window.validate();
    TrackSet tracks = load_trajectories(data, 1.0 / rate);
    std::string lab = labels;
    if (lab.empty() && std::filesystem::exists(data + ".labels")) lab = data + ".labels";
    if (!lab.empty()) apply_labels(tracks, read_file(lab));
    return split_dataset(window_scenes(tracks, window), fractions, split_seed);
  }
};

const std::vector<Scene>& pick_split(const Split& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw CLI::ValidationError("--split", "must be train, val or test");
}

TrackSet scenes_to_tracks(const std::vector<Scene>& scenes) {
  TrackSet out;
  out.dt = scenes.empty() ? 0.2 : scenes.front().dt;
  for (const Scene& s : scenes)
    for (const AgentTrack& a : s.agents) {
      Track t;
      t.scene_id = s.scene_id;
      t.agent_id = a.id;
      t.points = a.past;
      t.points.insert(t.points.end(), a.future.begin(), a.future.end());
      out.tracks.push_back(std::move(t));
    }
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenOptions {
  std::string scenario = "intersection";
  int scenes = 100;
  std::uint64_t seed = 1;
  double rate = 20.0;
  std::string out;
};

int cmd_gen_data(const GenOptions& o) {
  const std::string labels_path = o.out + ".labels";
  write_manifest(o.out + ".manifest.json", "gen-data",
                 {{"scenario", o.scenario}, {"scenes", o.scenes}, {"rate", o.rate}}, o.seed,
                 {{"trajectories", o.out}, {"labels", labels_path}});
  TrackSet tracks;
  if (o.scenario == "intersection") {
    ScenarioConfig cfg;
    cfg.num_scenes = o.scenes;
    cfg.seed = o.seed;
    cfg.rate = o.rate;
    tracks = generate_synthetic(cfg);
  } else {
    PlanTask task;
    tracks = scenes_to_tracks(generate_planning_data(task, o.scenes, task.horizon, o.seed));
  }
  write_file(o.out, format_trajectories(tracks));
  write_file(labels_path, format_labels(tracks));
  std::cout << "scenes " << o.scenes << " tracks " << tracks.tracks.size() << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  DataOptions data;
  int modes = 3;
  int updates = 6000;
  long stop_at = -1;
  int lr_decay_every = 2000;
  int anneal_updates = -1;  // -1: half of the first phase
  std::uint64_t seed = 1;
  std::string phase1_forcing = "classmates";
  std::string out;
  std::string resume;
  std::string log;
  int validate_every = 500;
};

int cmd_train(const TrainOptions& o) {
  Checkpoint ckpt;
  if (!o.resume.empty()) {
    ckpt = load_checkpoint(o.resume);
  } else {
    TrainConfig& c = ckpt.train_config;
    c.phase1_updates = o.updates * 2 / 3;
    c.phase2_updates = o.updates - c.phase1_updates;
    c.phase1_forcing = parse_forcing(o.phase1_forcing);
    c.lr_decay_every = o.lr_decay_every;
    c.anneal_updates = o.anneal_updates >= 0 ? o.anneal_updates : c.phase1_updates / 2;
    c.validate_every = o.validate_every;
    c.seed = o.seed;
    c.validate();
    ModelConfig mc;
    mc.modes = o.modes;
    mc.validate();
    ckpt.state = make_train_state(mc, o.seed);
  }
  const TrainConfig& cfg = ckpt.train_config;
  const std::string log_path = o.log.empty() ? o.out + ".log" : o.log;
  json config = o.data.to_json();
  config["modes"] = ckpt.state.model.config.modes;
  config["phase1_updates"] = cfg.phase1_updates;
  config["phase2_updates"] = cfg.phase2_updates;
  config["phase1_forcing"] = forcing_name(cfg.phase1_forcing);
  config["lr_decay_every"] = cfg.lr_decay_every;
  config["anneal_updates"] = cfg.anneal_updates;
  config["validate_every"] = cfg.validate_every;
  config["resume"] = o.resume;
  config["stop_at"] = o.stop_at;
  write_manifest(o.out + ".manifest.json", "train", config, cfg.seed, {{"checkpoint", o.out}, {"log", log_path}});

  const Split split = o.data.load(cfg.seed);
  std::ofstream log(log_path, o.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw Error("cannot open " + log_path);
  const TrainResult res = train(
      ckpt.state, split.train, split.val, cfg,
      [&](const std::string& line) {
        log << line << "\n";
        if (line.rfind("validation", 0) == 0) std::cout << line << "\n" << std::flush;
      },
      o.stop_at);
  log.flush();
  save_checkpoint(o.out, ckpt);
  std::cout << "modes " << ckpt.state.model.config.modes << " updates " << ckpt.state.update << " train_scenes "
            << split.train.size() << " val_scenes " << split.val.size() << "\n";
  if (!split.val.empty())
    std::cout << "val_nll " << fmt(dataset_nll(ckpt.state.model, split.val, cfg.eval_forcing)) << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  DataOptions data;
  std::string checkpoint;
  std::string split = "test";
  std::uint64_t seed = 1;
  std::vector<int> samples = {1, 5, 12};
  std::string out;
  std::string format = "lines";
};

std::vector<int> default_steps(int future) {
  std::vector<int> steps;
  for (int s : {5, 10, 15})
    if (s < future) steps.push_back(s);
  steps.push_back(future);
  return steps;
}

int cmd_eval(const EvalOptions& o) {
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (!o.out.empty()) {
    json config = o.data.to_json();
    config["checkpoint"] = o.checkpoint;
    config["split"] = o.split;
    config["samples"] = o.samples;
    write_manifest(o.out + ".manifest.json", "eval", config, o.seed, {{"report", o.out}});
  }
  const Split split = o.data.load(ckpt.train_config.seed);
  const auto& scenes = pick_split(split, o.split);
  if (scenes.empty()) throw DataError("eval: the " + o.split + " split is empty");
  Model& model = ckpt.state.model;
  const MetricReport rep = evaluate(model, scenes, default_steps(scenes.front().future_len()), o.samples, o.seed);
  std::string text = o.format == "table" ? format_report_table(rep) : format_report(rep);
  bool labelled = false;
  for (const Scene& s : scenes)
    for (const AgentTrack& a : s.agents) labelled = labelled || a.mode >= 0;
  if (labelled && o.format != "table") {
    const ModeRecovery mr = mode_recovery(model, scenes);
    text += "purity " + fmt(mr.purity) + "\n";
  }
  if (!o.out.empty()) write_file(o.out, text);
  std::cout << text;
  return 0;
}

// ----------------------------------------------------------- predict / hypo

struct PredictOptions {
  DataOptions data;
  std::string checkpoint;
  std::string split = "test";
  int max_scenes = 10;
  std::string forcing = "interactive";
  std::string out;
  std::string plot;
  // hypo only
  int fix_agent = -1;
  std::string future;
  std::int64_t scene_id = -1;
};

// One row per (scene, agent, mode, step): the predictive density and the
// position fed back at that step.
void emit_rows(std::ostream& os, const Scene& scene, int mode, const RolloutResult& r) {
  for (int a = 0; a < scene.num_agents(); ++a) {
    if (!r.emits.empty() && !r.emits[a]) continue;
    for (std::size_t s = 0; s < r.density[a].size(); ++s) {
      const BivariateNormalParams& d = r.density[a][s];
      os << scene.scene_id << "," << scene.agents[a].id << "," << mode << "," << s + 1 << "," << fmt(d.mu_x) << ","
         << fmt(d.mu_y) << "," << fmt(d.sigma_x) << "," << fmt(d.sigma_y) << "," << fmt(d.rho) << ","
         << fmt(r.realized[a][s].x) << "," << fmt(r.realized[a][s].y) << "\n";
    }
  }
}

constexpr const char* kPredictHeader = "scene_id,agent_id,mode,step,mu_x,mu_y,sigma_x,sigma_y,rho,x,y\n";

int run_predict(const PredictOptions& o, bool hypo) {
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  json config = o.data.to_json();
  config["checkpoint"] = o.checkpoint;
  config["split"] = o.split;
  config["forcing"] = o.forcing;
  config["max_scenes"] = o.max_scenes;
  if (hypo) {
    config["fix_agent"] = o.fix_agent;
    config["future"] = o.future;
    config["scene"] = o.scene_id;
  }
  if (!o.out.empty())
    write_manifest(o.out + ".manifest.json", hypo ? "hypo" : "predict", config, ckpt.train_config.seed,
                   {{"predictions", o.out}, {"plots", o.plot}});
  const Forcing forcing = parse_forcing(o.forcing);
  const Split split = o.data.load(ckpt.train_config.seed);
  const auto& pool = pick_split(split, o.split);
  Model& model = ckpt.state.model;

  std::vector<const Scene*> chosen;
  for (const Scene& s : pool) {
    if (hypo && o.scene_id >= 0 && s.scene_id != o.scene_id) continue;
    if (!hypo && static_cast<int>(chosen.size()) >= o.max_scenes) break;
    chosen.push_back(&s);
  }
  if (hypo && chosen.empty()) throw DataError("hypo: scene not found in the " + o.split + " split");
  if (hypo && o.scene_id < 0) chosen.resize(std::min<std::size_t>(chosen.size(), 1));

  TrackSet fixed;
  if (hypo) fixed = parse_trajectories(read_file(o.future), 1.0 / o.data.rate);
  if (!o.plot.empty()) std::filesystem::create_directories(o.plot);

  std::ostringstream os;
  os << kPredictHeader;
  for (const Scene* sp : chosen) {
    const Scene& scene = *sp;
    RolloutConfig rc;
    rc.forcing = forcing;
    int fixed_index = -1;
    std::vector<Point2> future;
    if (hypo) {
      for (int a = 0; a < scene.num_agents(); ++a)
        if (scene.agents[a].id == o.fix_agent) fixed_index = a;
      if (fixed_index < 0) throw DataError("hypo: agent " + std::to_string(o.fix_agent) + " not in scene");
      for (const Track& t : fixed.tracks)
        if (t.scene_id == scene.scene_id && t.agent_id == o.fix_agent) future = t.points;
      if (future.empty()) throw DataError("hypo: no fixed future for this scene and agent");
      rc.horizon = static_cast<int>(future.size());
    }
    std::vector<RolloutResult> per_mode;
    for (int k = 0; k < model.config.modes; ++k) {
      rc.modes = {k};
      per_mode.push_back(hypo ? conditional_rollout(model, scene, fixed_index, future, rc)
                              : rollout(model, scene, rc));
      emit_rows(os, scene, k, per_mode.back());
    }
    if (!o.plot.empty())
      write_file((std::filesystem::path(o.plot) / ("scene_" + std::to_string(scene.scene_id) + ".svg")).string(),
                 scene_svg(scene, per_mode));
  }
  if (o.out.empty())
    std::cout << os.str();
  else
    write_file(o.out, os.str());
  return 0;
}

// -------------------------------------------------------------------- plan

struct PlanOptions {
  std::string checkpoint;
  int trials = 100;
  std::uint64_t seed = 1;
  double speed_offset = 0.0;
  double car_accel = 0.0;
  std::string policy = "planner";
  std::string out;
};

int cmd_plan(const PlanOptions& o) {
  PlanTask task;
  task.speed_offset = o.speed_offset;
  task.car_accel = o.car_accel;
  const Policy policy = o.policy == "planner" ? Policy::planner : Policy::always_accelerate;
  if (!o.out.empty())
    write_manifest(o.out + ".manifest.json", "plan",
                   {{"checkpoint", o.checkpoint},
                    {"trials", o.trials},
                    {"speed_offset", o.speed_offset},
                    {"car_accel", o.car_accel},
                    {"policy", o.policy}},
                   o.seed, {{"trials", o.out}});
  Checkpoint ckpt;
  Model* model = nullptr;
  if (policy == Policy::planner) {
    if (o.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required for the planner policy");
    ckpt = load_checkpoint(o.checkpoint);
    model = &ckpt.state.model;
  }
  const ClosedLoopResult res = closed_loop_eval(task, model, o.trials, o.seed, policy);
  std::ostringstream os;
  for (const TrialResult& t : res.trials) os << format_trial(t) << "\n";
  if (!o.out.empty()) write_file(o.out, os.str());
  std::cout << "trials " << o.trials << " crash_rate " << fmt(res.crash_rate) << " success_rate "
            << fmt(res.success_rate) << " mean_reward " << fmt(res.mean_reward) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-futures trajectory prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MFP_VERSION);

  GenOptions gen;
  auto* g = app.add_subcommand("gen-data", "generate labelled synthetic trajectories");
  g->add_option("--scenario", gen.scenario, "intersection or planning")
      ->check(CLI::IsMember({"intersection", "planning"}));
  g->add_option("--scenes", gen.scenes, "number of scenes")->check(CLI::NonNegativeNumber);
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--rate", gen.rate, "sample rate in Hz (intersection only)")->check(CLI::PositiveNumber);
  g->add_option("--out", gen.out, "output CSV; labels go to <out>.labels")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "train a model");
  tr.data.add(t, true);
  t->add_option("--modes", tr.modes, "number of latent modes K")->check(CLI::PositiveNumber);
  t->add_option("--updates", tr.updates, "total updates; two thirds without interactive rollouts")
      ->check(CLI::PositiveNumber);
  t->add_option("--stop-at", tr.stop_at, "stop after this many updates (for resuming later)");
  t->add_option("--lr-decay-every", tr.lr_decay_every, "updates between learning-rate drops")
      ->check(CLI::PositiveNumber);
  t->add_option("--anneal-updates", tr.anneal_updates,
                 "updates over which the posterior weight ramps to 1 (default: half of the first phase)");
  t->add_option("--validate-every", tr.validate_every, "updates between validation passes (0: only at the end)")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--phase1-forcing", tr.phase1_forcing, "classmates or teacher")
      ->check(CLI::IsMember({"classmates", "teacher"}));
  t->add_option("--seed", tr.seed, "initialisation, split and ordering seed");
  t->add_option("--resume", tr.resume, "continue from this checkpoint (its configuration wins)");
  t->add_option("--log", tr.log, "metrics log (default <out>.log)");
  t->add_option("--out", tr.out, "checkpoint path")->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  ev.data.add(e, true);
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--seed", ev.seed, "sampling seed");
  e->add_option("--samples", ev.samples, "joint sample counts for min metrics")->delimiter(',');
  e->add_option("--format", ev.format, "lines or table")->check(CLI::IsMember({"lines", "table"}));
  e->add_option("--out", ev.out, "report file");

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "per-mode predictions for test scenes");
  pr.data.add(p, true);
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--split", pr.split)->check(CLI::IsMember({"train", "val", "test"}));
  p->add_option("--scenes", pr.max_scenes, "number of scenes")->check(CLI::NonNegativeNumber);
  p->add_option("--forcing", pr.forcing)->check(CLI::IsMember({"interactive", "classmates", "teacher"}));
  p->add_option("--out", pr.out, "prediction CSV (default: stdout)");
  p->add_option("--plot", pr.plot, "directory for one SVG per scene");

  PredictOptions hy;
  auto* h = app.add_subcommand("hypo", "predictions conditioned on one agent's fixed future");
  hy.data.add(h, true);
  h->add_option("--checkpoint", hy.checkpoint)->required();
  h->add_option("--split", hy.split)->check(CLI::IsMember({"train", "val", "test"}));
  h->add_option("--scene", hy.scene_id, "scene id (default: first scene of the split)");
  h->add_option("--fix-agent", hy.fix_agent, "agent id whose future is fixed")->required();
  h->add_option("--future", hy.future, "CSV with the fixed future (scene_id,agent_id,frame,x,y)")->required();
  h->add_option("--forcing", hy.forcing)->check(CLI::IsMember({"interactive", "classmates", "teacher"}));
  h->add_option("--out", hy.out, "prediction CSV (default: stdout)");
  h->add_option("--plot", hy.plot, "directory for the SVG");

  PlanOptions pl;
  auto* q = app.add_subcommand("plan", "closed-loop unprotected left turn");
  q->add_option("--checkpoint", pl.checkpoint, "model trained on planning data");
  q->add_option("--trials", pl.trials)->check(CLI::NonNegativeNumber);
  q->add_option("--seed", pl.seed);
  q->add_option("--speed-offset", pl.speed_offset, "added to every crossing car's speed (m/s)");
  q->add_option("--car-accel", pl.car_accel, "crossing car acceleration (m/s^2)");
  q->add_option("--policy", pl.policy)->check(CLI::IsMember({"planner", "always-accelerate"}));
  q->add_option("--out", pl.out, "per-trial results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*p) return run_predict(pr, false);
    if (*h) return run_predict(hy, true);
    if (*q) return cmd_plan(pl);
  } catch (const CLI::Error& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
