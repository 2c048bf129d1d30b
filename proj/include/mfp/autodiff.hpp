// SPDX-License-Identifier: Apache-2.0
//
// Recording reverse-mode differentiation over dense matrices. Every operation
// appends a node holding its value and, when any input needs a gradient, a
// closure that pushes the output gradient back to its inputs. Batches live in
// columns: one column per (rollout, agent) pair.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "mfp/error.hpp"

namespace mfp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// A learnable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(const Mat& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value);
  /// Leaf bound to a parameter: no copy of the value, gradients accumulate
  /// directly into `p.grad`.
  Var param(Param& p);

  /// Runs the reverse sweep from a 1x1 node, seeding it with `seed`.
  void backward(Var loss, double seed = 1.0);

  const Mat& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  /// Appends an op node. `back` is kept only if gradients are enabled and
  /// `needs_grad` is true.
  Var push(Mat value, bool needs_grad, Backward back);
  void accumulate(int id, const Mat& grad);

 private:
  struct Node {
    Mat value;
    const Mat* external_value = nullptr;
    Mat grad;
    Mat* external_grad = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward back;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool swept_ = false;
};

namespace ad {

Var matmul(Var w, Var x);
/// w * x + b, with the column vector b broadcast across columns.
Var affine(Var w, Var x, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a + c for a constant matrix of the same shape, or a column vector broadcast.
Var add_const(Var a, const Mat& c);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);

Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// Output column j is column idx[j] of a.
Var gather_cols(Var a, const std::vector<int>& idx);

/// Sum of all entries as a 1x1 node.
Var sum(Var a);
/// Sum of a .* w for a constant weight matrix w.
Var dot_const(Var a, const Mat& w);
Var log_softmax_cols(Var a);

/// Rotates each 2-vector column j by angle[j] (counter-clockwise).
Var rotate_cols(Var a, const std::vector<double>& angle);

/// A 2-d point that is either a constant or column `col` of node `var`.
struct PointRef {
  Var var;
  int col = 0;
  double x = 0.0;
  double y = 0.0;

  static PointRef constant(double px, double py) { return {Var(), 0, px, py}; }
  static PointRef of(Var v, int c) { return {v, c, 0.0, 0.0}; }
};

/// Stacks point references into a 2 x n node.
Var gather_points(Tape& tape, const std::vector<PointRef>& refs);

/// Fused GRU cell. `gx` holds the input projection plus bias (3H x B, rows
/// ordered reset, update, candidate); `wh` is the 3H x H hidden projection.
/// Reset is applied to the hidden state before the candidate projection:
///   r = s(gx_r + Whr h), u = s(gx_u + Whu h), n = tanh(gx_n + Whn (r.h)),
///   h' = (1 - u).h + u.n
Var gru_cell(Var gx, Var h, Var wh);

/// Column-wise bivariate normal negative log-likelihood. `d` (2 x B) is the
/// target minus the mean; rows 2..4 of `raw` (5 x B) are the unconstrained
/// log-sigma and correlation pre-activations.
Var bivariate_nll(Var d, Var raw);

/// Routes value vectors into slots by unnormalised RBF key matching.
/// keys: Dk x M, values: Dv x M, slot_keys: Dk x S, pair_col[m] the output
/// column of pair m. Output is (S*Dv) x num_cols with slot-major rows. Pairs
/// are accumulated in index order.
Var rbf_slot_pool(Var keys, Var values, Var slot_keys, const std::vector<int>& pair_col, int num_cols,
                  double temperature);

}  // namespace ad
}  // namespace mfp
