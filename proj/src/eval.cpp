// SPDX-License-Identifier: Apache-2.0
#include "mfp/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "mfp/parallel.hpp"
#include "mfp/training.hpp"

namespace mfp {

namespace {

void check_steps(const std::vector<int>& steps, int horizon) {
  for (int s : steps)
    if (s < 1 || s > horizon) throw Error("evaluation step " + std::to_string(s) + " outside the horizon");
}

int argmax(const std::vector<double>& v) { return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()); }

}  // namespace

std::vector<double> nll_per_horizon(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps,
                                    Forcing forcing) {
  std::vector<std::vector<double>> per_scene(scenes.size(), std::vector<double>(steps.size(), 0.0));
  std::vector<int> counts(scenes.size(), 0);
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scene& s = scenes[i];
    check_steps(steps, s.future_len());
    const ModeLogliks ml = per_mode_loglik(model, s, forcing);
    for (int a = 0; a < s.num_agents(); ++a) {
      for (std::size_t h = 0; h < steps.size(); ++h) {
        std::vector<double> ll;
        for (const auto& mode : ml.step[a]) ll.push_back(mode[steps[h] - 1]);
        per_scene[i][h] -= marginal_loglik(ml.prior[a], ll);
      }
      ++counts[i];
    }
  });
  std::vector<double> out(steps.size(), 0.0);
  long total = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::size_t h = 0; h < steps.size(); ++h) out[h] += per_scene[i][h];
    total += counts[i];
  }
  if (total == 0) throw DataError("nll_per_horizon: no agents");
  for (double& v : out) v /= static_cast<double>(total);
  return out;
}

std::vector<double> rmse_per_horizon(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps) {
  std::vector<std::vector<double>> sq(scenes.size(), std::vector<double>(steps.size(), 0.0));
  std::vector<int> counts(scenes.size(), 0);
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scene& s = scenes[i];
    check_steps(steps, s.future_len());
    Tape tape(false);
    const SceneEncoding enc = encode_scene(tape, model, s);
    RolloutConfig cfg;
    cfg.modes.clear();
    for (const LatentDist& p : prior_probs(enc.prior_logits.value())) cfg.modes.push_back(argmax(p));
    const RolloutResult r = rollout(model, s, cfg);
    for (int a = 0; a < s.num_agents(); ++a) {
      for (std::size_t h = 0; h < steps.size(); ++h) {
        const double d = distance(r.realized[a][steps[h] - 1], s.agents[a].future[steps[h] - 1]);
        sq[i][h] += d * d;
      }
      ++counts[i];
    }
  });
  std::vector<double> out(steps.size(), 0.0);
  long total = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::size_t h = 0; h < steps.size(); ++h) out[h] += sq[i][h];
    total += counts[i];
  }
  if (total == 0) throw DataError("rmse_per_horizon: no agents");
  for (double& v : out) v = std::sqrt(v / static_cast<double>(total));
  return out;
}

std::vector<Point2> constant_velocity(const AgentTrack& agent, int horizon) {
  const Point2 last = agent.past.back();
  const Point2 vel = agent.past.size() >= 2 ? last - agent.past[agent.past.size() - 2] : Point2{};
  std::vector<Point2> out;
  for (int k = 1; k <= horizon; ++k) out.push_back(last + static_cast<double>(k) * vel);
  return out;
}

std::vector<double> cv_rmse_per_horizon(std::span<const Scene> scenes, const std::vector<int>& steps) {
  std::vector<double> out(steps.size(), 0.0);
  long total = 0;
  for (const Scene& s : scenes) {
    check_steps(steps, s.future_len());
    for (const AgentTrack& a : s.agents) {
      const auto cv = constant_velocity(a, s.future_len());
      for (std::size_t h = 0; h < steps.size(); ++h) {
        const double d = distance(cv[steps[h] - 1], a.future[steps[h] - 1]);
        out[h] += d * d;
      }
      ++total;
    }
  }
  if (total == 0) throw DataError("cv_rmse_per_horizon: no agents");
  for (double& v : out) v = std::sqrt(v / static_cast<double>(total));
  return out;
}

const char* displacement_name(Displacement kind) {
  switch (kind) {
    case Displacement::ade:
      return "minADE";
    case Displacement::fde:
      return "minFDE";
    case Displacement::msd:
      return "minMSD";
    case Displacement::rmse:
      return "minRMSE";
  }
  return "?";
}

double sample_error(const std::vector<std::vector<Point2>>& predicted, const Scene& scene, Displacement kind,
                    const std::vector<char>& include) {
  double total = 0.0;
  long count = 0;
  for (int a = 0; a < scene.num_agents(); ++a) {
    if (!include[a]) continue;
    const auto& truth = scene.agents[a].future;
    const auto& pred = predicted[a];
    if (pred.size() < truth.size()) throw ShapeError("sample_error: prediction shorter than ground truth");
    if (kind == Displacement::fde) {
      total += distance(pred[truth.size() - 1], truth.back());
      ++count;
      continue;
    }
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const double d = distance(pred[k], truth[k]);
      total += kind == Displacement::ade ? d : d * d;
      ++count;
    }
  }
  if (count == 0) throw DataError("sample_error: no agents included");
  const double mean = total / static_cast<double>(count);
  return kind == Displacement::rmse ? std::sqrt(mean) : mean;
}

std::uint64_t scene_sample_seed(std::uint64_t seed, const Scene& scene) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(scene.scene_id) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> min_displacement_per_scene(Model& model, std::span<const Scene> scenes, int num_samples,
                                               Displacement kind, std::uint64_t seed) {
  if (num_samples < 1) throw Error("min_displacement: need at least one sample");
  std::vector<double> out(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scene& s = scenes[i];
    const std::vector<char> all(s.num_agents(), 1);
    double best = std::numeric_limits<double>::infinity();
    for (const RolloutResult& r : sample_joint(model, s, num_samples, scene_sample_seed(seed, s)))
      best = std::min(best, sample_error(r.realized, s, kind, all));
    out[i] = best;
  });
  return out;
}

double min_displacement(Model& model, std::span<const Scene> scenes, int num_samples, Displacement kind,
                        std::uint64_t seed) {
  if (scenes.empty()) throw DataError("min_displacement: no scenes");
  double total = 0.0;
  for (double v : min_displacement_per_scene(model, scenes, num_samples, kind, seed)) total += v;
  return total / static_cast<double>(scenes.size());
}

std::pair<std::vector<int>, double> best_matching(const Mat& w) {
  const int rows = static_cast<int>(w.rows()), cols = static_cast<int>(w.cols());
  std::vector<int> cur(rows, -1), best(rows, -1);
  std::vector<char> used(cols, 0);
  double best_total = -1.0;
  // Exhaustive search; sizes here are at most 8 x 8.
  auto dfs = [&](auto&& self, int r, double total) -> void {
    if (r == rows) {
      if (total > best_total) {
        best_total = total;
        best = cur;
      }
      return;
    }
    for (int c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      cur[r] = c;
      self(self, r + 1, total + w(r, c));
      used[c] = 0;
    }
    if (rows - r > cols - std::count(used.begin(), used.end(), 1)) {
      cur[r] = -1;
      self(self, r + 1, total);
    }
    cur[r] = -1;
  };
  dfs(dfs, 0, 0.0);
  return {best, std::max(best_total, 0.0)};
}

ModeRecovery mode_recovery(Model& model, std::span<const Scene> scenes, Forcing forcing) {
  const int k = model.config.modes;
  std::vector<std::vector<std::pair<int, int>>> per_scene(scenes.size());  // (role, label) -> mode below
  std::vector<std::vector<int>> assigned(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scene& s = scenes[i];
    const ModeLogliks ml = per_mode_loglik(model, s, forcing);
    for (int a = 0; a < s.num_agents(); ++a) {
      if (s.agents[a].mode < 0) continue;
      per_scene[i].push_back({s.agents[a].role, s.agents[a].mode});
      assigned[i].push_back(argmax(exact_posterior(ml.prior[a], ml.total[a])));
    }
  });

  std::map<int, std::vector<std::pair<int, int>>> by_role;  // role -> (label, mode)
  for (std::size_t i = 0; i < scenes.size(); ++i)
    for (std::size_t j = 0; j < per_scene[i].size(); ++j)
      by_role[per_scene[i][j].first].push_back({per_scene[i][j].second, assigned[i][j]});

  ModeRecovery out;
  long pooled_n = 0, pooled_hit = 0, all_n = 0, all_hit = 0;
  for (const auto& [role, pairs] : by_role) {
    RoleRecovery rr;
    rr.role = role;
    std::set<int> labels;
    for (const auto& p : pairs) labels.insert(p.first);
    rr.labels.assign(labels.begin(), labels.end());
    rr.confusion = Mat::Zero(static_cast<Eigen::Index>(rr.labels.size()), k);
    for (const auto& p : pairs) {
      const auto li = std::lower_bound(rr.labels.begin(), rr.labels.end(), p.first) - rr.labels.begin();
      rr.confusion(li, p.second) += 1.0;
    }
    auto [matching, hits] = best_matching(rr.confusion);
    rr.matching = matching;
    rr.purity = hits / static_cast<double>(pairs.size());
    all_n += static_cast<long>(pairs.size());
    all_hit += std::lround(hits);
    if (rr.labels.size() > 1) {
      pooled_n += static_cast<long>(pairs.size());
      pooled_hit += std::lround(hits);
    }
    out.agents += static_cast<int>(pairs.size());
    out.roles.push_back(std::move(rr));
  }
  if (pooled_n > 0) {
    out.purity = static_cast<double>(pooled_hit) / static_cast<double>(pooled_n);
  } else if (all_n > 0) {
    out.purity = static_cast<double>(all_hit) / static_cast<double>(all_n);
  }
  return out;
}

HypoResult hypo_compare(Model& model, std::span<const Scene> scenes, int num_samples, int fixed_agent,
                        std::uint64_t seed) {
  if (num_samples < 1) throw Error("hypo_compare: need at least one sample");
  struct Row {
    double sa, ha, sf, hf;
  };
  std::vector<Row> rows(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scene& s = scenes[i];
    if (s.num_agents() < 2) throw DataError("hypo_compare: scenes need at least two agents");
    if (fixed_agent < 0 || fixed_agent >= s.num_agents()) throw Error("hypo_compare: bad fixed agent");
    std::vector<char> others(s.num_agents(), 1);
    others[fixed_agent] = 0;
    Tape tape(false);
    const SceneEncoding enc = encode_scene(tape, model, s);
    const auto draws = sample_modes(prior_probs(enc.prior_logits.value()), num_samples, scene_sample_seed(seed, s));
    Row row{1e300, 1e300, 1e300, 1e300};
    std::set<std::vector<int>> seen;
    for (const auto& m : draws) {
      if (!seen.insert(m).second) continue;
      BatchSpec plain;
      plain.modes = {m};
      const RolloutResult a = extract_rollout(run_batch(tape, model, s, enc, plain), 0, plain);
      BatchSpec hypo = plain;
      hypo.fixed_agent = fixed_agent;
      hypo.fixed_future = {s.agents[fixed_agent].future};
      const RolloutResult b = extract_rollout(run_batch(tape, model, s, enc, hypo), 0, hypo);
      row.sa = std::min(row.sa, sample_error(a.realized, s, Displacement::ade, others));
      row.sf = std::min(row.sf, sample_error(a.realized, s, Displacement::fde, others));
      row.ha = std::min(row.ha, sample_error(b.realized, s, Displacement::ade, others));
      row.hf = std::min(row.hf, sample_error(b.realized, s, Displacement::fde, others));
    }
    rows[i] = row;
  });
  HypoResult out;
  for (const Row& r : rows) {
    out.standard_ade += r.sa;
    out.hypo_ade += r.ha;
    out.standard_fde += r.sf;
    out.hypo_fde += r.hf;
  }
  out.scenes = static_cast<int>(scenes.size());
  if (out.scenes > 0) {
    const double n = out.scenes;
    out.standard_ade /= n;
    out.hypo_ade /= n;
    out.standard_fde /= n;
    out.hypo_fde /= n;
  }
  return out;
}

MetricReport evaluate(Model& model, std::span<const Scene> scenes, const std::vector<int>& steps,
                      const std::vector<int>& sample_counts, std::uint64_t seed) {
  if (scenes.empty()) throw DataError("evaluate: no scenes");
  MetricReport r;
  r.steps = steps;
  r.dt = scenes.front().dt;
  r.scenes = static_cast<int>(scenes.size());
  r.nll = nll_per_horizon(model, scenes, steps, Forcing::teacher);
  r.nll_classmates = nll_per_horizon(model, scenes, steps, Forcing::classmates);
  r.total_nll = dataset_nll(model, scenes, Forcing::teacher);
  r.rmse = rmse_per_horizon(model, scenes, steps);
  r.cv_rmse = cv_rmse_per_horizon(scenes, steps);
  r.sample_counts = sample_counts;
  // One set of joint samples per scene serves every metric and sample count;
  // smaller counts use a prefix, exactly as min_displacement would draw them.
  const int max_s = sample_counts.empty() ? 0 : *std::max_element(sample_counts.begin(), sample_counts.end());
  const std::array<Displacement, 4> kinds = {Displacement::ade, Displacement::fde, Displacement::msd,
                                             Displacement::rmse};
  std::vector<std::vector<std::array<double, 4>>> errs(scenes.size());
  if (max_s > 0) {
    parallel_for(static_cast<int>(scenes.size()), [&](int i) {
      const Scene& s = scenes[i];
      const std::vector<char> all(s.num_agents(), 1);
      for (const RolloutResult& rr : sample_joint(model, s, max_s, scene_sample_seed(seed, s))) {
        std::array<double, 4> e{};
        for (std::size_t k = 0; k < kinds.size(); ++k) e[k] = sample_error(rr.realized, s, kinds[k], all);
        errs[i].push_back(e);
      }
    });
  }
  for (std::size_t k = 0; k < kinds.size(); ++k)
    for (int count : sample_counts) {
      double total = 0.0;
      for (const auto& per : errs) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < count; ++j) best = std::min(best, per[j][k]);
        total += best;
      }
      r.min_metrics[displacement_name(kinds[k])].push_back(total / static_cast<double>(scenes.size()));
    }
  return r;
}

std::string format_report(const MetricReport& r) {
  std::string out;
  char buf[128];
  auto line = [&](const char* name, double h, double v) {
    std::snprintf(buf, sizeof buf, "%s %.6f %.6f\n", name, h, v);
    out += buf;
  };
  for (std::size_t h = 0; h < r.steps.size(); ++h) line("nll", r.steps[h] * r.dt, r.nll[h]);
  for (std::size_t h = 0; h < r.steps.size(); ++h) line("nll_classmates", r.steps[h] * r.dt, r.nll_classmates[h]);
  for (std::size_t h = 0; h < r.steps.size(); ++h) line("rmse", r.steps[h] * r.dt, r.rmse[h]);
  for (std::size_t h = 0; h < r.steps.size(); ++h) line("rmse_cv", r.steps[h] * r.dt, r.cv_rmse[h]);
  for (const auto& [name, values] : r.min_metrics)
    for (std::size_t i = 0; i < values.size(); ++i) line(name.c_str(), r.sample_counts[i], values[i]);
  std::snprintf(buf, sizeof buf, "nll_total %.6f\nscenes %d\n", r.total_nll, r.scenes);
  out += buf;
  return out;
}

std::string format_report_table(const MetricReport& r) {
  std::string out = "horizon_s\tnll\tnll_classmates\trmse\trmse_cv\n";
  char buf[160];
  for (std::size_t h = 0; h < r.steps.size(); ++h) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", r.steps[h] * r.dt, r.nll[h],
                  r.nll_classmates[h], r.rmse[h], r.cv_rmse[h]);
    out += buf;
  }
  out += "\nmetric\tsamples\tvalue\n";
  for (const auto& [name, values] : r.min_metrics)
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s\t%d\t%.6f\n", name.c_str(), r.sample_counts[i], values[i]);
      out += buf;
    }
  return out;
}

}  // namespace mfp
