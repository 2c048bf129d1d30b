// SPDX-License-Identifier: Apache-2.0
#include "mfp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mfp {

const GradCheckBlock* GradCheckReport::find(const std::string& name) const {
  for (const GradCheckBlock& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

GradCheckReport grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, const GradCheckOptions& options) {
  analytic();
  std::vector<Mat> grads;
  for (const Param* p : params) grads.push_back(p->grad);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Param& p = *params[b];
    const Mat& g = grads[b];
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(p.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (static_cast<int>(entries.size()) > options.max_entries_per_block) {
      Eigen::Index top = 0;
      g.reshaped().cwiseAbs().maxCoeff(&top);
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<std::size_t>(options.max_entries_per_block - 1));
      if (std::find(entries.begin(), entries.end(), top) == entries.end()) entries.push_back(top);
    }
    GradCheckBlock block{p.name, 0.0, 0, 0, true};
    for (Eigen::Index e : entries) {
      double& x = p.value.data()[e];
      const double saved = x;
      auto eval_at = [&](double v) {
        x = v;
        const double out = loss();
        x = saved;
        return out;
      };
      const double mid = loss();
      double step = options.step;
      double err = 0.0;
      for (int attempt = 0;; ++attempt) {
        const double up = eval_at(saved + step);
        const double down = eval_at(saved - step);
        const double numeric = (up - down) / (2.0 * step);
        err = std::abs(g.data()[e] - numeric) / std::max(1.0, std::abs(numeric));
        if (err < options.tolerance || attempt >= options.kink_retries) break;
        // A piecewise-linear kink inside the stencil shows up as unequal
        // one-sided slopes; shrink the step so the stencil no longer spans it.
        const double left = (mid - down) / step, right = (up - mid) / step;
        if (std::abs(right - left) / std::max(1.0, std::abs(numeric)) < options.tolerance) break;
        ++block.kinks;
        step /= 10.0;
      }
      block.max_rel_error = std::max(block.max_rel_error, err);
      ++block.checked;
    }
    block.pass = block.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.pass = report.pass && block.pass;
    report.blocks.push_back(block);
  }
  return report;
}

}  // namespace mfp
