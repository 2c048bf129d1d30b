// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfp/autodiff.hpp"

namespace mfp {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Blocks larger than this are checked on a seeded random subset of entries
  // that always includes the entry with the largest analytic gradient.
  int max_entries_per_block = 16;
  std::uint64_t seed = 7;
  // Entries whose stencil straddles a kink (unequal one-sided slopes) are
  // re-checked with the step divided by 10, at most this many times.
  int kink_retries = 2;
};

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  int checked = 0;
  int kinks = 0;  // entries that needed a smaller step
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;
  bool pass = true;

  const GradCheckBlock* find(const std::string& name) const;
};

/// Compares analytic gradients against central finite differences. `analytic`
/// must leave d(loss)/d(param) in every Param::grad; `loss` evaluates the
/// scalar loss at the current parameter values. The error measure is
/// |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, const GradCheckOptions& options = {});

}  // namespace mfp
