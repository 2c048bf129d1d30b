// SPDX-License-Identifier: Apache-2.0
#include "mfp/decoder.hpp"

#include <cmath>
#include <map>
#include <random>

namespace mfp {

const char* forcing_name(Forcing f) {
  switch (f) {
    case Forcing::interactive:
      return "interactive";
    case Forcing::classmates:
      return "classmates";
    case Forcing::teacher:
      return "teacher";
  }
  return "?";
}

Forcing parse_forcing(const std::string& name) {
  if (name == "interactive") return Forcing::interactive;
  if (name == "classmates") return Forcing::classmates;
  if (name == "teacher") return Forcing::teacher;
  throw Error("unknown forcing '" + name + "'");
}

namespace {

int resolve_horizon(const Scene& scene, int horizon, bool needs_truth) {
  const int h = horizon > 0 ? horizon : scene.future_len();
  if (h < 1) throw DataError("rollout: horizon must be >= 1");
  if (needs_truth && (!scene.has_future() || h > scene.future_len()))
    throw DataError("rollout: ground-truth future required for this forcing");
  return h;
}

}  // namespace

BatchOutput run_batch(Tape& tape, Model& model, const Scene& scene, const SceneEncoding& enc, const BatchSpec& spec) {
  const ModelConfig& c = model.config;
  ModelParams& p = model.params;
  const int n = scene.num_agents();
  const int rollouts = static_cast<int>(spec.modes.size());
  if (rollouts < 1) throw Error("run_batch: no rollouts");
  for (const auto& m : spec.modes) {
    if (static_cast<int>(m.size()) != n) throw ShapeError("run_batch: one mode per agent required");
    for (int k : m)
      if (k < 0 || k >= c.modes) throw Error("run_batch: mode index out of range");
  }
  const bool needs_truth = spec.score || spec.forcing != Forcing::interactive;
  const int horizon = resolve_horizon(scene, spec.horizon, needs_truth);
  if (spec.fixed_agent >= n) throw Error("run_batch: fixed agent out of range");
  if (spec.fixed_agent >= 0) {
    if (static_cast<int>(spec.fixed_future.size()) != rollouts) throw ShapeError("run_batch: fixed future per rollout");
    for (const auto& f : spec.fixed_future)
      if (static_cast<int>(f.size()) != horizon) throw ShapeError("run_batch: fixed future length must equal horizon");
  }

  const int b = rollouts * n;
  const int t = scene.past_len() - 1;
  BatchOutput out;
  out.rollouts = rollouts;
  out.agents = n;
  out.horizon = horizon;

  std::vector<int> agent_of(b);
  Mat z = Mat::Zero(c.modes, b);
  std::vector<int> zcol(b);
  std::vector<double> rot(b), unrot(b);
  for (int r = 0; r < rollouts; ++r)
    for (int a = 0; a < n; ++a) {
      const int col = r * n + a;
      agent_of[col] = a;
      zcol[col] = spec.modes[r][a];
      z(zcol[col], col) = 1.0;
      rot[col] = enc.frames[a].heading;
      unrot[col] = -rot[col];
    }
  out.heading = rot;

  Var h = ad::gather_cols(ad::affine(tape.param(p.dec_init_w), enc.fused, tape.param(p.dec_init_b)), agent_of);
  Var gx_static = ad::add(ad::gather_cols(ad::affine(tape.param(p.dec_wx_f), enc.fused, tape.param(p.dec_b)), agent_of),
                          ad::matmul(tape.param(p.dec_wx_z), tape.constant(z)));
  Var wx_e = tape.param(p.dec_wx_e), wh = tape.param(p.dec_wh);
  Var out_w = tape.param(p.out_w), out_b = tape.param(p.out_b);

  // Position of agent m at time index u (u <= 0 is the past) in the world of `col`.
  auto ref = [&](int col, int m, int u) -> ad::PointRef {
    if (u <= 0) return past_ref(scene, m, t + u);
    const int r = col / n;
    if (m == spec.fixed_agent) {
      const Point2 q = spec.fixed_future[r][u - 1];
      return ad::PointRef::constant(q.x, q.y);
    }
    const int self = agent_of[col];
    const bool truth = spec.forcing == Forcing::teacher || (spec.forcing == Forcing::classmates && m != self);
    if (truth) {
      const Point2 q = scene.agents[m].future[u - 1];
      return ad::PointRef::constant(q.x, q.y);
    }
    const int src = spec.forcing == Forcing::interactive ? r * n + m : col;
    return ad::PointRef::of(out.realized[u - 1], src);
  };

  std::mt19937_64 rng(spec.seed);
  for (int step = 1; step <= horizon; ++step) {
    const int u = step - 1;
    FeatureQuery q;
    q.ego_of_col = agent_of;
    std::vector<ad::PointRef> origin(b);
    for (int col = 0; col < b; ++col) {
      for (int lag = 0; lag < 3; ++lag)
        for (int m = 0; m < n; ++m) q.positions[lag].push_back(ref(col, m, u - lag));
      origin[col] = q.positions[0][static_cast<std::size_t>(col) * n + agent_of[col]];
    }
    Var e = dyn_encode_batch(tape, model, enc.frames, enc.ids, q, scene.dt);
    h = ad::gru_cell(ad::add(ad::matmul(wx_e, e), gx_static), h, wh);
    Var raw = ad::affine(out_w, h, out_b);
    const Point2 inc = model.mean_increment(step);
    Mat inc_col(2, 1);
    inc_col << inc.x, inc.y;
    Var local = ad::add_const(ad::slice_rows(raw, 0, 2), inc_col);
    Var mean = ad::add(ad::gather_points(tape, origin), ad::rotate_cols(local, rot));

    Var realized = mean;
    if (spec.feedback == Feedback::sample) {
      Mat noise(2, b);
      const Mat& rv = raw.value();
      for (int col = 0; col < b; ++col) {
        const auto d = constrain_output({0.0, 0.0, rv(2, col), rv(3, col), rv(4, col)});
        const double z1 = standard_normal(rng), z2 = standard_normal(rng);
        const double lx = d.sigma_x * z1, ly = d.sigma_y * (d.rho * z1 + std::sqrt(1.0 - d.rho * d.rho) * z2);
        noise(0, col) = std::cos(rot[col]) * lx - std::sin(rot[col]) * ly;
        noise(1, col) = std::sin(rot[col]) * lx + std::cos(rot[col]) * ly;
      }
      realized = ad::add_const(mean, noise);
    }

    if (spec.score) {
      Mat y(2, b);
      for (int col = 0; col < b; ++col) {
        const Point2 g = scene.agents[agent_of[col]].future[u];
        y(0, col) = g.x;
        y(1, col) = g.y;
      }
      Var d = ad::rotate_cols(ad::sub(tape.constant(std::move(y)), mean), unrot);
      out.nll.push_back(ad::bivariate_nll(d, raw));
    }
    out.raw.push_back(raw);
    out.mean.push_back(mean);
    out.realized.push_back(realized);
    out.z_trace.push_back(zcol);
  }
  return out;
}

RolloutResult extract_rollout(const BatchOutput& out, int rollout, const BatchSpec& spec) {
  const int n = out.agents;
  RolloutResult res;
  res.modes = spec.modes.at(rollout);
  res.density.assign(n, {});
  res.realized.assign(n, {});
  res.z_trace.assign(n, {});
  res.emits.assign(n, 1);
  if (spec.fixed_agent >= 0) res.emits[spec.fixed_agent] = 0;
  if (spec.score) {
    res.loglik.assign(n, 0.0);
    res.step_loglik.assign(n, {});
  }
  for (int a = 0; a < n; ++a) {
    const int col = rollout * n + a;
    const double th = out.heading[col];
    for (int s = 0; s < out.horizon; ++s) {
      const Mat& rv = out.raw[s].value();
      if (a == spec.fixed_agent) {
        res.realized[a].push_back(spec.fixed_future[rollout][s]);
      } else {
        auto d = constrain_output({0.0, 0.0, rv(2, col), rv(3, col), rv(4, col)}).rotated(th, {});
        d.mu_x = out.mean[s].value()(0, col);
        d.mu_y = out.mean[s].value()(1, col);
        res.density[a].push_back(d);
        res.realized[a].push_back({out.realized[s].value()(0, col), out.realized[s].value()(1, col)});
      }
      res.z_trace[a].push_back(out.z_trace[s][col]);
      if (spec.score && a != spec.fixed_agent) {
        const double ll = -out.nll[s].value()(0, col);
        res.step_loglik[a].push_back(ll);
        res.loglik[a] += ll;
      }
    }
  }
  return res;
}

DecodeStep decode_step(Model& model, const Vec& h, const Vec& e, const Vec& z_onehot, const Vec& f) {
  const ModelConfig& c = model.config;
  if (h.size() != c.dec_hidden || e.size() != c.dyn_out || z_onehot.size() != c.modes || f.size() != c.fused_dim())
    throw ShapeError("decode_step: dimension mismatch");
  ModelParams& p = model.params;
  Tape tape(false);
  Var gx = ad::add(ad::add(ad::matmul(tape.param(p.dec_wx_e), tape.constant(e)),
                           ad::matmul(tape.param(p.dec_wx_z), tape.constant(z_onehot))),
                   ad::affine(tape.param(p.dec_wx_f), tape.constant(f), tape.param(p.dec_b)));
  Var h1 = ad::gru_cell(gx, tape.constant(h), tape.param(p.dec_wh));
  const Vec raw = ad::affine(tape.param(p.out_w), h1, tape.param(p.out_b)).value().col(0);
  return {h1.value().col(0), constrain_output({raw(0), raw(1), raw(2), raw(3), raw(4)})};
}

namespace {

std::vector<int> expand_modes(const std::vector<int>& modes, int n) {
  if (modes.size() == 1) return std::vector<int>(n, modes[0]);
  if (static_cast<int>(modes.size()) != n) throw ShapeError("rollout: one mode per agent or a single shared mode");
  return modes;
}

}  // namespace

RolloutResult rollout(Model& model, const Scene& scene, const RolloutConfig& cfg) {
  Tape tape(false);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  BatchSpec spec;
  spec.forcing = cfg.forcing;
  spec.feedback = cfg.feedback;
  spec.horizon = cfg.horizon;
  spec.modes = {expand_modes(cfg.modes, scene.num_agents())};
  spec.score = scene.has_future() && resolve_horizon(scene, cfg.horizon, false) <= scene.future_len();
  spec.seed = cfg.seed;
  return extract_rollout(run_batch(tape, model, scene, enc, spec), 0, spec);
}

std::vector<std::vector<int>> sample_modes(const std::vector<LatentDist>& priors, int num_samples,
                                           std::uint64_t seed) {
  if (num_samples < 1) throw Error("sample_joint: need at least one sample");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < num_samples; ++s) {
    std::vector<int> m;
    for (const LatentDist& p : priors) {
      const double u = uniform01(rng);
      double acc = 0.0;
      int k = static_cast<int>(p.size()) - 1;
      for (int j = 0; j < static_cast<int>(p.size()); ++j) {
        acc += p[j];
        if (u < acc) {
          k = j;
          break;
        }
      }
      m.push_back(k);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<RolloutResult> sample_joint(Model& model, const Scene& scene, int num_samples, std::uint64_t seed,
                                        int horizon) {
  Tape tape(false);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  const auto assignments = sample_modes(prior_probs(enc.prior_logits.value()), num_samples, seed);
  // Each distinct assignment is rolled out on its own so a sample never
  // depends on which other samples were requested.
  std::map<std::vector<int>, RolloutResult> cache;
  std::vector<RolloutResult> out;
  for (const auto& m : assignments) {
    auto it = cache.find(m);
    if (it == cache.end()) {
      BatchSpec spec;
      spec.horizon = horizon;
      spec.modes = {m};
      spec.score = scene.has_future() && resolve_horizon(scene, horizon, false) <= scene.future_len();
      it = cache.emplace(m, extract_rollout(run_batch(tape, model, scene, enc, spec), 0, spec)).first;
    }
    out.push_back(it->second);
  }
  return out;
}

RolloutResult conditional_rollout(Model& model, const Scene& scene, int fixed_agent,
                                  const std::vector<Point2>& fixed_future, const RolloutConfig& cfg) {
  if (fixed_agent < 0 || fixed_agent >= scene.num_agents()) throw Error("conditional_rollout: bad agent index");
  Tape tape(false);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  BatchSpec spec;
  spec.forcing = cfg.forcing;
  spec.feedback = cfg.feedback;
  if (cfg.horizon > 0)
    spec.horizon = cfg.horizon;
  else
    spec.horizon = scene.has_future() ? scene.future_len() : static_cast<int>(fixed_future.size());
  if (static_cast<int>(fixed_future.size()) != spec.horizon)
    throw ShapeError("conditional_rollout: fixed future length must equal the horizon");
  spec.modes = {expand_modes(cfg.modes, scene.num_agents())};
  spec.fixed_agent = fixed_agent;
  spec.fixed_future = {fixed_future};
  spec.score = scene.has_future() && spec.horizon <= scene.future_len();
  spec.seed = cfg.seed;
  return extract_rollout(run_batch(tape, model, scene, enc, spec), 0, spec);
}

}  // namespace mfp

namespace mfp {

ModeLogliks per_mode_loglik(Model& model, const Scene& scene, Forcing forcing, int horizon) {
  Tape tape(false);
  const SceneEncoding enc = encode_scene(tape, model, scene);
  const int n = scene.num_agents(), k = model.config.modes;
  BatchSpec spec;
  spec.forcing = forcing;
  spec.horizon = horizon;
  spec.score = true;
  for (int r = 0; r < k; ++r) spec.modes.push_back(std::vector<int>(n, r));
  const BatchOutput out = run_batch(tape, model, scene, enc, spec);
  ModeLogliks res;
  res.prior = prior_probs(enc.prior_logits.value());
  res.total.assign(n, std::vector<double>(k, 0.0));
  res.step.assign(n, std::vector<std::vector<double>>(k));
  for (int s = 0; s < out.horizon; ++s)
    for (int r = 0; r < k; ++r)
      for (int a = 0; a < n; ++a) {
        const double ll = -out.nll[s].value()(0, r * n + a);
        res.step[a][r].push_back(ll);
        res.total[a][r] += ll;
      }
  return res;
}

}  // namespace mfp
