// SPDX-License-Identifier: Apache-2.0
#include "mfp/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfp {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b || a == 0) throw ShapeError(std::string(what) + ": length mismatch");
}

double log_or_ninf(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

}  // namespace

Var prior_logits(Tape& tape, Model& model, Var fused) {
  return ad::affine(tape.param(model.params.prior_w), fused, tape.param(model.params.prior_b));
}

LatentDist softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  LatentDist p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) total += p[k] = std::exp(logits[k] - mx);
  for (double& v : p) v /= total;
  return p;
}

std::vector<LatentDist> prior_probs(const Mat& logits) {
  std::vector<LatentDist> out;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Vec col = logits.col(j);
    out.push_back(softmax(std::span(col.data(), col.size())));
  }
  return out;
}

LatentDist exact_posterior(std::span<const double> prior, std::span<const double> logliks) {
  check_lengths(prior.size(), logliks.size(), "exact_posterior");
  std::vector<double> a(prior.size());
  bool any = false;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (prior[k] < 0.0) throw NumericError("exact_posterior: negative prior");
    any = any || prior[k] > 0.0;
    a[k] = log_or_ninf(prior[k]) + logliks[k];
  }
  if (!any) throw NumericError("exact_posterior: prior is all zero");
  return softmax(a);
}

double marginal_loglik(std::span<const double> prior, std::span<const double> logliks) {
  check_lengths(prior.size(), logliks.size(), "marginal_loglik");
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> a(prior.size());
  for (std::size_t k = 0; k < prior.size(); ++k) mx = std::max(mx, a[k] = log_or_ninf(prior[k]) + logliks[k]);
  if (!std::isfinite(mx)) throw NumericError("marginal_loglik: no mode has positive probability");
  double s = 0.0;
  for (double v : a) s += std::exp(v - mx);
  return mx + std::log(s);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_lengths(p.size(), q.size(), "kl_divergence");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (q[k] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[k] * (std::log(p[k]) - std::log(q[k]));
  }
  return kl;
}

double prior_kl_loss(const PosteriorTable& posterior, const std::vector<LatentDist>& priors) {
  if (posterior.size() != priors.size()) throw ShapeError("prior_kl_loss: agent count mismatch");
  double total = 0.0;
  for (std::size_t n = 0; n < posterior.size(); ++n) total += kl_divergence(posterior[n], priors[n]);
  return total;
}

double elbo(std::span<const double> q, std::span<const double> prior, std::span<const double> logliks) {
  check_lengths(q.size(), prior.size(), "elbo");
  check_lengths(q.size(), logliks.size(), "elbo");
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] <= 0.0) continue;
    total += q[k] * (logliks[k] + log_or_ninf(prior[k]) - std::log(q[k]));
  }
  return total;
}

}  // namespace mfp
