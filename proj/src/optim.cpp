// SPDX-License-Identifier: Apache-2.0
#include "mfp/optim.hpp"

#include <cmath>

namespace mfp {

AdamState make_adam_state(std::span<Param* const> params) {
  AdamState s;
  for (const Param* p : params) {
    s.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    s.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
  return s;
}

void adam_update(std::span<Param* const> params, AdamState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_update: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || state.m[i].rows() != p.value.rows() ||
        state.m[i].cols() != p.value.cols())
      throw ShapeError("adam_update: shape mismatch for " + p.name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (Param* p : params) p->grad *= max_norm / norm;
  return norm;
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

namespace {
void round_mat(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}
}  // namespace

void round_to_f32(std::span<Param* const> params, AdamState* state) {
  for (Param* p : params) round_mat(p->value);
  if (!state) return;
  for (Mat& m : state->m) round_mat(m);
  for (Mat& v : state->v) round_mat(v);
}

}  // namespace mfp
