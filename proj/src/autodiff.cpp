// SPDX-License-Identifier: Apache-2.0
#include "mfp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfp/bivariate.hpp"

namespace mfp {

const Mat& Var::value() const {
  if (!tape_) throw Error("Var: use of an unbound variable");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on a non-scalar node");
  return v(0, 0);
}

const Mat& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external_value ? *n.external_value : n.value;
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Param& p) {
  Node n;
  n.external_value = &p.value;
  n.external_grad = &p.grad;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Mat value, bool needs_grad, Backward back) {
  if (!value.allFinite()) throw NumericError("non-finite value produced on tape");
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && needs_grad;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Mat& grad) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.external_grad) {
    *n.external_grad += grad;
    return;
  }
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
  } else {
    n.grad += grad;
  }
}

void Tape::backward(Var loss, double seed) {
  if (!loss.valid() || loss.tape() != this || loss.id() >= static_cast<int>(nodes_.size()))
    throw Error("backward: loss is not a node of this tape (backward before forward?)");
  if (!grad_enabled_) throw Error("backward: tape was recorded without gradients");
  if (swept_) throw Error("backward: tape already swept");
  if (value(loss.id()).size() != 1) throw ShapeError("backward: loss must be 1x1");
  swept_ = true;
  accumulate(loss.id(), Mat::Constant(1, 1, seed));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.back) n.back(n.grad);
    // Intermediate gradients are dead once propagated.
    if (!n.external_grad) {
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
  }
}

namespace ad {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("autodiff: unbound variable");
  return *a.tape();
}

void same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

}  // namespace

Var matmul(Var w, Var x) {
  Tape& t = tape_of(w);
  const Mat& W = w.value();
  const Mat& X = x.value();
  if (W.cols() != X.rows()) throw ShapeError("matmul: inner dimension mismatch");
  const int wi = w.id(), xi = x.id();
  const bool need = t.requires_grad(wi) || t.requires_grad(xi);
  return t.push(W * X, need, [&t, wi, xi](const Mat& g) {
    if (t.requires_grad(wi)) t.accumulate(wi, g * t.value(xi).transpose());
    if (t.requires_grad(xi)) t.accumulate(xi, t.value(wi).transpose() * g);
  });
}

Var affine(Var w, Var x, Var b) {
  Tape& t = tape_of(w);
  const Mat& W = w.value();
  const Mat& X = x.value();
  const Mat& Bv = b.value();
  if (W.cols() != X.rows()) throw ShapeError("affine: inner dimension mismatch");
  if (Bv.rows() != W.rows() || Bv.cols() != 1) throw ShapeError("affine: bias must be a column of matching rows");
  Mat out = W * X;
  out.colwise() += Bv.col(0);
  const int wi = w.id(), xi = x.id(), bi = b.id();
  const bool need = t.requires_grad(wi) || t.requires_grad(xi) || t.requires_grad(bi);
  return t.push(std::move(out), need, [&t, wi, xi, bi](const Mat& g) {
    if (t.requires_grad(wi)) t.accumulate(wi, g * t.value(xi).transpose());
    if (t.requires_grad(xi)) t.accumulate(xi, t.value(wi).transpose() * g);
    if (t.requires_grad(bi)) t.accumulate(bi, g.rowwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  same_shape(a.value(), b.value(), "add");
  const int ai = a.id(), bi = b.id();
  return t.push(a.value() + b.value(), t.requires_grad(ai) || t.requires_grad(bi), [&t, ai, bi](const Mat& g) {
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  same_shape(a.value(), b.value(), "sub");
  const int ai = a.id(), bi = b.id();
  return t.push(a.value() - b.value(), t.requires_grad(ai) || t.requires_grad(bi), [&t, ai, bi](const Mat& g) {
    t.accumulate(ai, g);
    if (t.requires_grad(bi)) t.accumulate(bi, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  same_shape(a.value(), b.value(), "mul");
  const int ai = a.id(), bi = b.id();
  return t.push(a.value().cwiseProduct(b.value()), t.requires_grad(ai) || t.requires_grad(bi),
                [&t, ai, bi](const Mat& g) {
                  if (t.requires_grad(ai)) t.accumulate(ai, g.cwiseProduct(t.value(bi)));
                  if (t.requires_grad(bi)) t.accumulate(bi, g.cwiseProduct(t.value(ai)));
                });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ai = a.id();
  return t.push(a.value() * s, t.requires_grad(ai), [&t, ai, s](const Mat& g) { t.accumulate(ai, g * s); });
}

Var add_const(Var a, const Mat& c) {
  Tape& t = tape_of(a);
  const Mat& A = a.value();
  Mat out;
  if (c.rows() == A.rows() && c.cols() == A.cols()) {
    out = A + c;
  } else if (c.rows() == A.rows() && c.cols() == 1) {
    out = A.colwise() + c.col(0);
  } else {
    throw ShapeError("add_const: incompatible constant");
  }
  const int ai = a.id();
  return t.push(std::move(out), t.requires_grad(ai), [&t, ai](const Mat& g) { t.accumulate(ai, g); });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const int ai = a.id();
  const bool need = t.requires_grad(ai);
  Mat y = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  if (!need) return t.push(std::move(y), false, nullptr);
  Mat ycopy = y;
  return t.push(std::move(y), true, [&t, ai, y = std::move(ycopy)](const Mat& g) {
    t.accumulate(ai, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const int ai = a.id();
  const bool need = t.requires_grad(ai);
  Mat y = a.value().array().tanh().matrix();
  if (!need) return t.push(std::move(y), false, nullptr);
  Mat ycopy = y;
  return t.push(std::move(y), true, [&t, ai, y = std::move(ycopy)](const Mat& g) {
    t.accumulate(ai, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const int ai = a.id();
  return t.push(a.value().cwiseMax(0.0), t.requires_grad(ai), [&t, ai](const Mat& g) {
    t.accumulate(ai, (t.value(ai).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool need = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    offsets.push_back(rows);
    rows += p.rows();
    ids.push_back(p.id());
    need = need || t.requires_grad(p.id());
  }
  Mat out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return t.push(std::move(out), need, [&t, ids, offsets](const Mat& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      t.accumulate(ids[i], g.middleRows(offsets[i], t.value(ids[i]).rows()));
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  const int ai = a.id();
  return t.push(a.value().middleRows(start, count), t.requires_grad(ai), [&t, ai, start, count](const Mat& g) {
    Mat full = Mat::Zero(t.value(ai).rows(), t.value(ai).cols());
    full.middleRows(start, count) = g;
    t.accumulate(ai, full);
  });
}

Var gather_cols(Var a, const std::vector<int>& idx) {
  Tape& t = tape_of(a);
  const Mat& A = a.value();
  Mat out(A.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= A.cols()) throw ShapeError("gather_cols: index out of range");
    out.col(j) = A.col(idx[j]);
  }
  const int ai = a.id();
  return t.push(std::move(out), t.requires_grad(ai), [&t, ai, idx](const Mat& g) {
    Mat full = Mat::Zero(t.value(ai).rows(), t.value(ai).cols());
    for (std::size_t j = 0; j < idx.size(); ++j) full.col(idx[j]) += g.col(j);
    t.accumulate(ai, full);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ai = a.id();
  return t.push(Mat::Constant(1, 1, a.value().sum()), t.requires_grad(ai), [&t, ai](const Mat& g) {
    t.accumulate(ai, Mat::Constant(t.value(ai).rows(), t.value(ai).cols(), g(0, 0)));
  });
}

Var dot_const(Var a, const Mat& w) {
  Tape& t = tape_of(a);
  same_shape(a.value(), w, "dot_const");
  const int ai = a.id();
  return t.push(Mat::Constant(1, 1, a.value().cwiseProduct(w).sum()), t.requires_grad(ai),
                [&t, ai, w](const Mat& g) { t.accumulate(ai, w * g(0, 0)); });
}

Var log_softmax_cols(Var a) {
  Tape& t = tape_of(a);
  const Mat& A = a.value();
  Mat out(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const double m = A.col(j).maxCoeff();
    const double lse = m + std::log((A.col(j).array() - m).exp().sum());
    out.col(j) = A.col(j).array() - lse;
  }
  const int ai = a.id();
  Mat y = out;
  return t.push(std::move(out), t.requires_grad(ai), [&t, ai, y = std::move(y)](const Mat& g) {
    const Mat p = y.array().exp().matrix();
    Mat d = g;
    for (Eigen::Index j = 0; j < g.cols(); ++j) d.col(j) -= p.col(j) * g.col(j).sum();
    t.accumulate(ai, d);
  });
}

Var rotate_cols(Var a, const std::vector<double>& angle) {
  Tape& t = tape_of(a);
  const Mat& A = a.value();
  if (A.rows() != 2 || A.cols() != static_cast<Eigen::Index>(angle.size()))
    throw ShapeError("rotate_cols: expects 2 x n input with n angles");
  Mat cs(2, A.cols());
  Mat out(2, A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const double c = std::cos(angle[j]), s = std::sin(angle[j]);
    cs(0, j) = c;
    cs(1, j) = s;
    out(0, j) = c * A(0, j) - s * A(1, j);
    out(1, j) = s * A(0, j) + c * A(1, j);
  }
  const int ai = a.id();
  return t.push(std::move(out), t.requires_grad(ai), [&t, ai, cs = std::move(cs)](const Mat& g) {
    Mat d(2, g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double c = cs(0, j), s = cs(1, j);
      d(0, j) = c * g(0, j) + s * g(1, j);
      d(1, j) = -s * g(0, j) + c * g(1, j);
    }
    t.accumulate(ai, d);
  });
}

Var gather_points(Tape& tape, const std::vector<PointRef>& refs) {
  Mat out(2, static_cast<Eigen::Index>(refs.size()));
  bool need = false;
  for (std::size_t j = 0; j < refs.size(); ++j) {
    const PointRef& r = refs[j];
    if (r.var.valid()) {
      out.col(j) = r.var.value().col(r.col);
      need = need || tape.requires_grad(r.var.id());
    } else {
      out(0, j) = r.x;
      out(1, j) = r.y;
    }
  }
  if (!need || !tape.grad_enabled()) return tape.push(std::move(out), false, nullptr);
  std::vector<std::pair<int, int>> src;  // (node id, column) per output column
  src.reserve(refs.size());
  for (const PointRef& r : refs) src.emplace_back(r.var.valid() ? r.var.id() : -1, r.col);
  return tape.push(std::move(out), true, [&tape, src = std::move(src)](const Mat& g) {
    // Group scatter per source node so each receives one accumulation.
    std::vector<int> seen;
    for (std::size_t j = 0; j < src.size(); ++j) {
      const int id = src[j].first;
      if (id < 0 || !tape.requires_grad(id)) continue;
      if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
      seen.push_back(id);
      Mat full = Mat::Zero(tape.value(id).rows(), tape.value(id).cols());
      for (std::size_t k = j; k < src.size(); ++k)
        if (src[k].first == id) full.col(src[k].second) += g.col(k);
      tape.accumulate(id, full);
    }
  });
}

Var gru_cell(Var gx, Var h, Var wh) {
  Tape& t = tape_of(gx);
  const Mat& GX = gx.value();
  const Mat& H = h.value();
  const Mat& WH = wh.value();
  const Eigen::Index hd = H.rows();
  if (GX.rows() != 3 * hd || GX.cols() != H.cols() || WH.rows() != 3 * hd || WH.cols() != hd)
    throw ShapeError("gru_cell: shape mismatch");

  const Mat ah = WH.topRows(2 * hd) * H;
  Mat r = (1.0 + (-(GX.topRows(hd) + ah.topRows(hd)).array()).exp()).inverse().matrix();
  Mat u = (1.0 + (-(GX.middleRows(hd, hd) + ah.bottomRows(hd)).array()).exp()).inverse().matrix();
  Mat rh = r.cwiseProduct(H);
  Mat n = (GX.bottomRows(hd) + WH.bottomRows(hd) * rh).array().tanh().matrix();
  Mat out = (1.0 - u.array()).matrix().cwiseProduct(H) + u.cwiseProduct(n);

  const int gi = gx.id(), hi = h.id(), wi = wh.id();
  const bool need = t.requires_grad(gi) || t.requires_grad(hi) || t.requires_grad(wi);
  if (!need || !t.grad_enabled()) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [&t, gi, hi, wi, hd, r = std::move(r), u = std::move(u), rh = std::move(rh),
                 n = std::move(n)](const Mat& g) {
                  const Mat& H = t.value(hi);
                  const Mat& WH = t.value(wi);
                  const Mat dn = g.cwiseProduct(u);
                  const Mat du = g.cwiseProduct(n - H);
                  Mat dh = g.cwiseProduct((1.0 - u.array()).matrix());
                  const Mat dan = dn.cwiseProduct((1.0 - n.array().square()).matrix());
                  const Mat drh = WH.bottomRows(hd).transpose() * dan;
                  const Mat dr = drh.cwiseProduct(H);
                  dh += drh.cwiseProduct(r);
                  Mat dgates(3 * hd, g.cols());
                  dgates.topRows(hd) = dr.cwiseProduct((r.array() * (1.0 - r.array())).matrix());
                  dgates.middleRows(hd, hd) = du.cwiseProduct((u.array() * (1.0 - u.array())).matrix());
                  dgates.bottomRows(hd) = dan;
                  if (t.requires_grad(wi)) {
                    Mat dw(3 * hd, hd);
                    dw.topRows(2 * hd) = dgates.topRows(2 * hd) * H.transpose();
                    dw.bottomRows(hd) = dan * rh.transpose();
                    t.accumulate(wi, dw);
                  }
                  if (t.requires_grad(hi)) {
                    dh += WH.topRows(2 * hd).transpose() * dgates.topRows(2 * hd);
                    t.accumulate(hi, dh);
                  }
                  if (t.requires_grad(gi)) t.accumulate(gi, dgates);
                });
}

Var bivariate_nll(Var d, Var raw) {
  Tape& t = tape_of(d);
  const Mat& D = d.value();
  const Mat& R = raw.value();
  if (D.rows() != 2 || R.rows() != 5 || D.cols() != R.cols()) throw ShapeError("bivariate_nll: shape mismatch");
  const Eigen::Index b = D.cols();
  Mat out(1, b);
  // Per column partials: d/ddx, d/ddy, d/draw2, d/draw3, d/draw4.
  Mat partial(5, b);
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double a = R(2, j), c = R(3, j);
    const double la = std::clamp(a, -kLogSigmaClamp, kLogSigmaClamp);
    const double lc = std::clamp(c, -kLogSigmaClamp, kLogSigmaClamp);
    const double sx = std::exp(la), sy = std::exp(lc);
    const double th = std::tanh(R(4, j));
    const double rho = kRhoScale * th;
    const double om = 1.0 - rho * rho;
    const double zx = D(0, j) / sx, zy = D(1, j) / sy;
    const double q = zx * zx - 2.0 * rho * zx * zy + zy * zy;
    out(0, j) = log_two_pi + la + lc + 0.5 * std::log(om) + q / (2.0 * om);
    partial(0, j) = (zx - rho * zy) / (sx * om);
    partial(1, j) = (zy - rho * zx) / (sy * om);
    partial(2, j) = (a > -kLogSigmaClamp && a < kLogSigmaClamp) ? 1.0 - (zx * zx - rho * zx * zy) / om : 0.0;
    partial(3, j) = (c > -kLogSigmaClamp && c < kLogSigmaClamp) ? 1.0 - (zy * zy - rho * zx * zy) / om : 0.0;
    const double drho = -rho / om - zx * zy / om + rho * q / (om * om);
    partial(4, j) = drho * kRhoScale * (1.0 - th * th);
  }
  const int di = d.id(), ri = raw.id();
  const bool need = t.requires_grad(di) || t.requires_grad(ri);
  return t.push(std::move(out), need, [&t, di, ri, partial = std::move(partial)](const Mat& g) {
    if (t.requires_grad(di)) {
      Mat gd = partial.topRows(2);
      for (Eigen::Index j = 0; j < gd.cols(); ++j) gd.col(j) *= g(0, j);
      t.accumulate(di, gd);
    }
    if (t.requires_grad(ri)) {
      Mat gr = Mat::Zero(5, partial.cols());
      // Rows 0-1 of raw are not read here; the mean reaches the loss through d.
      for (Eigen::Index j = 0; j < gr.cols(); ++j)
        for (int r = 2; r < 5; ++r) gr(r, j) = partial(r, j) * g(0, j);
      t.accumulate(ri, gr);
    }
  });
}

Var rbf_slot_pool(Var keys, Var values, Var slot_keys, const std::vector<int>& pair_col, int num_cols,
                  double temperature) {
  Tape& t = tape_of(slot_keys);
  const Mat& S = slot_keys.value();
  const Eigen::Index dk = S.rows(), ns = S.cols();
  const Eigen::Index m = static_cast<Eigen::Index>(pair_col.size());
  const Eigen::Index dv = values.valid() ? values.rows() : 0;
  if (m > 0 && (keys.rows() != dk || keys.cols() != m || values.cols() != m))
    throw ShapeError("rbf_slot_pool: shape mismatch");
  if (!(temperature > 0.0)) throw Error("rbf_slot_pool: temperature must be positive");

  Mat w(ns, m);  // match weights
  Mat out = Mat::Zero(ns * dv, num_cols);
  for (Eigen::Index p = 0; p < m; ++p) {
    const auto k = keys.value().col(p);
    for (Eigen::Index s = 0; s < ns; ++s) w(s, p) = std::exp(-(k - S.col(s)).squaredNorm() / temperature);
    const int c = pair_col[p];
    for (Eigen::Index s = 0; s < ns; ++s) out.block(s * dv, c, dv, 1) += w(s, p) * values.value().col(p);
  }
  const int ki = m > 0 ? keys.id() : -1, vi = m > 0 ? values.id() : -1, si = slot_keys.id();
  const bool need = t.requires_grad(si) || (m > 0 && (t.requires_grad(ki) || t.requires_grad(vi)));
  if (!need || !t.grad_enabled() || m == 0) return t.push(std::move(out), false, nullptr);
  return t.push(std::move(out), true,
                [&t, ki, vi, si, pair_col, w = std::move(w), ns, dv, temperature](const Mat& g) {
                  const Mat& K = t.value(ki);
                  const Mat& V = t.value(vi);
                  const Mat& S = t.value(si);
                  Mat dk = Mat::Zero(K.rows(), K.cols());
                  Mat dvals = Mat::Zero(V.rows(), V.cols());
                  Mat ds = Mat::Zero(S.rows(), S.cols());
                  for (Eigen::Index p = 0; p < K.cols(); ++p) {
                    const int c = pair_col[p];
                    for (Eigen::Index s = 0; s < ns; ++s) {
                      const auto gs = g.col(c).segment(s * dv, dv);
                      dvals.col(p) += w(s, p) * gs;
                      const double dw = gs.dot(V.col(p));
                      const double coef = dw * w(s, p) * (-2.0 / temperature);
                      const Vec diff = K.col(p) - S.col(s);
                      dk.col(p) += coef * diff;
                      ds.col(s) -= coef * diff;
                    }
                  }
                  if (t.requires_grad(ki)) t.accumulate(ki, dk);
                  if (t.requires_grad(vi)) t.accumulate(vi, dvals);
                  if (t.requires_grad(si)) t.accumulate(si, ds);
                });
}

}  // namespace ad
}  // namespace mfp
