// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

namespace mfp {

/// Worker cap from MFP_THREADS, else the machine's core count.
int worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into per-index slots so reductions stay in a fixed order.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace mfp
