// SPDX-License-Identifier: Apache-2.0
#include "mfp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mfp {

void ModelConfig::validate() const {
  for (int d : {modes, enc_hidden, dec_hidden, slots, key_dim, value_dim, key_hidden, dyn_hidden, dyn_out, context_dim})
    if (d < 1) throw Error("ModelConfig: all dimensions must be >= 1");
  if (modes > 8) throw Error("ModelConfig: at most 8 modes are supported");
  if (!(temperature > 0.0)) throw Error("ModelConfig: temperature must be positive");
  if (!(pos_scale > 0.0)) throw Error("ModelConfig: pos_scale must be positive");
}

std::vector<Param*> ModelParams::list() {
  return {&enc_wx,  &enc_wh,  &enc_b,     &key_w1,     &key_b1,     &key_w2,   &key_b2,   &key_wk,
          &key_bk,  &key_wv,  &key_bv,    &slot_keys,  &dyn_w1,     &dyn_b1,   &dyn_w2,   &dyn_b2,
          &prior_w, &prior_b, &dec_init_w, &dec_init_b, &dec_wx_e, &dec_wx_z, &dec_wx_f, &dec_wh,
          &dec_b,   &out_w,   &out_b};
}

std::vector<const Param*> ModelParams::list() const {
  auto* self = const_cast<ModelParams*>(this);
  std::vector<const Param*> out;
  for (Param* p : self->list()) out.push_back(p);
  return out;
}

Point2 Model::mean_increment(int step) const {
  const int n = static_cast<int>(mean_future.size());
  if (step < 1 || step > n) return {};
  const Point2 prev = step >= 2 ? mean_future[step - 2] : Point2{};
  return mean_future[step - 1] - prev;
}

ModelParams allocate_params(const ModelConfig& c) {
  c.validate();
  const int he = c.enc_hidden, hd = c.dec_hidden;
  ModelParams p;
  p.enc_wx = Param("enc.wx", 3 * he, 2);
  p.enc_wh = Param("enc.wh", 3 * he, he);
  p.enc_b = Param("enc.b", 3 * he, 1);
  p.key_w1 = Param("key.w1", c.key_hidden, kFeatureDim);
  p.key_b1 = Param("key.b1", c.key_hidden, 1);
  p.key_w2 = Param("key.w2", c.key_hidden, c.key_hidden);
  p.key_b2 = Param("key.b2", c.key_hidden, 1);
  p.key_wk = Param("key.wk", c.key_dim, c.key_hidden);
  p.key_bk = Param("key.bk", c.key_dim, 1);
  p.key_wv = Param("key.wv", c.value_dim, c.key_hidden);
  p.key_bv = Param("key.bv", c.value_dim, 1);
  p.slot_keys = Param("slot.keys", c.key_dim, c.slots);
  p.dyn_w1 = Param("dyn.w1", c.dyn_hidden, (c.slots + 1) * c.value_dim);
  p.dyn_b1 = Param("dyn.b1", c.dyn_hidden, 1);
  p.dyn_w2 = Param("dyn.w2", c.dyn_out, c.dyn_hidden);
  p.dyn_b2 = Param("dyn.b2", c.dyn_out, 1);
  p.prior_w = Param("prior.w", c.modes, c.fused_dim());
  p.prior_b = Param("prior.b", c.modes, 1);
  p.dec_init_w = Param("dec.init_w", hd, c.fused_dim());
  p.dec_init_b = Param("dec.init_b", hd, 1);
  p.dec_wx_e = Param("dec.wx_e", 3 * hd, c.dyn_out);
  p.dec_wx_z = Param("dec.wx_z", 3 * hd, c.modes);
  p.dec_wx_f = Param("dec.wx_f", 3 * hd, c.fused_dim());
  p.dec_wh = Param("dec.wh", 3 * hd, hd);
  p.dec_b = Param("dec.b", 3 * hd, 1);
  p.out_w = Param("out.w", 5, hd);
  p.out_b = Param("out.b", 5, 1);
  return p;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  Model m{config, allocate_params(config), {}};
  std::mt19937_64 rng(seed);
  ModelParams& q = m.params;
  const std::vector<const Param*> biases = {&q.enc_b,  &q.key_b1,  &q.key_b2,     &q.key_bk, &q.key_bv, &q.dyn_b1,
                                            &q.dyn_b2, &q.prior_b, &q.dec_init_b, &q.dec_b,  &q.out_b};
  for (Param* p : m.parameters()) {
    if (p == &q.slot_keys) {
      for (Eigen::Index i = 0; i < p->size(); ++i) p->value.data()[i] = standard_normal(rng);
    } else if (std::find(biases.begin(), biases.end(), p) == biases.end()) {
      const double a = 1.0 / std::sqrt(static_cast<double>(p->value.cols()));
      for (Eigen::Index i = 0; i < p->size(); ++i) p->value.data()[i] = a * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return m;
}

}  // namespace mfp
