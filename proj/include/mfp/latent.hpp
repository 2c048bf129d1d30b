// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mfp/autodiff.hpp"
#include "mfp/model.hpp"

namespace mfp {

/// Probabilities over K discrete modes.
using LatentDist = std::vector<double>;
/// One LatentDist per agent.
using PosteriorTable = std::vector<LatentDist>;

/// Linear projection of the fused features to mode logits (modes x N).
Var prior_logits(Tape& tape, Model& model, Var fused);

LatentDist softmax(std::span<const double> logits);
/// Column-wise softmax of a modes x N logit matrix.
std::vector<LatentDist> prior_probs(const Mat& logits);

/// p(k | Y) proportional to prior[k] exp(loglik[k]), via log-sum-exp.
LatentDist exact_posterior(std::span<const double> prior, std::span<const double> logliks);

/// log sum_k prior[k] exp(loglik[k]).
double marginal_loglik(std::span<const double> prior, std::span<const double> logliks);

/// sum_k p log(p / q), with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double prior_kl_loss(const PosteriorTable& posterior, const std::vector<LatentDist>& priors);

/// Evidence lower bound for an arbitrary q:
/// sum_k q[k] (loglik[k] + log prior[k] - log q[k]).
double elbo(std::span<const double> q, std::span<const double> prior, std::span<const double> logliks);

}  // namespace mfp
