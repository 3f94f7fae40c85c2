#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctacl/ctam.hpp"
#include "ctacl/mining.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

/// Loss value (nats) and its gradient with respect to the query embedding.
/// Stored memory features and centroids are constants: gradients never
/// flow into the memory.
struct LossGrad {
  double value = 0.0;
  Vec grad;
};

struct HyperParams {
  double tau = 0.07;
  double lambda = 0.2;
  MiningParams mining;
};

inline void check(const HyperParams& h) {
  if (!(h.tau > 0.0 && h.tau <= 1.0)) {
    throw std::invalid_argument("hyper: tau must be in (0, 1]");
  }
  if (h.lambda < 0.0) throw std::invalid_argument("hyper: lambda must be >= 0");
}

namespace detail {

/// Softmax-contrastive kernel shared by every contrastive objective here:
///   value = -(1/|P|) sum_{p in P} log( exp(z.p/tau) / sum_{a in D} exp(z.a/tau) )
/// evaluated through log-sum-exp, with
///   grad = (1/tau) * ( sum_a softmax_a * a  -  mean_p p ).
/// P must be a subset of D for the value to be a proper -log probability.
inline LossGrad contrastive_core(const FeatureVec& z,
                                 const std::vector<const FeatureVec*>& positives,
                                 const std::vector<const FeatureVec*>& denom,
                                 double tau) {
  if (positives.empty()) {
    throw std::invalid_argument("contrastive: empty positive set");
  }
  if (denom.empty()) {
    throw std::invalid_argument("contrastive: empty denominator set");
  }
  const std::size_t d = z.dim();
  const double inv_tau = 1.0 / tau;

  std::vector<double> logits(denom.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < denom.size(); ++a) {
    logits[a] = dot(z.v, denom[a]->v) * inv_tau;
    mx = std::max(mx, logits[a]);
  }
  double exp_sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    exp_sum += l;
  }
  const double lse = mx + std::log(exp_sum);

  LossGrad out;
  out.grad.assign(d, 0.0);

  // softmax-weighted denominator mean
  const double inv_exp_sum = 1.0 / exp_sum;
  for (std::size_t a = 0; a < denom.size(); ++a) {
    const double w = logits[a] * inv_exp_sum;
    const Vec& f = denom[a]->v;
    for (std::size_t i = 0; i < d; ++i) out.grad[i] += w * f[i];
  }

  const double inv_p = 1.0 / static_cast<double>(positives.size());
  double pos_logit_sum = 0.0;
  for (const FeatureVec* p : positives) {
    pos_logit_sum += dot(z.v, p->v) * inv_tau;
    const Vec& f = p->v;
    for (std::size_t i = 0; i < d; ++i) out.grad[i] -= inv_p * f[i];
  }
  for (double& g : out.grad) g *= inv_tau;
  out.value = lse - pos_logit_sum * inv_p;
  return out;
}

}  // namespace detail

/// Self-supervised contrastive baseline. Each anchor is scored against its
/// perturbed positive plus every other anchor in the batch; the positive
/// and the other anchors are constants under differentiation, so the
/// gradient is with respect to the anchor embedding alone.
inline std::vector<LossGrad> sscl_loss(
    const std::vector<std::pair<FeatureVec, FeatureVec>>& batch, double tau) {
  if (batch.size() < 2) {
    throw std::invalid_argument("sscl: batch must hold at least two anchors");
  }
  std::vector<LossGrad> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<const FeatureVec*> positives{&batch[i].second};
    std::vector<const FeatureVec*> denom{&batch[i].second};
    for (std::size_t a = 0; a < batch.size(); ++a) {
      if (a != i) denom.push_back(&batch[a].first);
    }
    out.push_back(detail::contrastive_core(batch[i].first, positives, denom,
                                           tau));
  }
  return out;
}

/// In-subdomain objective: positives are the anchor's tracklet slots, the
/// denominator is the anchor's whole camera bank.
inline LossGrad ctacl_sub(const FeatureVec& z, const Ctam& m,
                          const CamTrkKey& key, double tau) {
  const auto own = m.tracklet_slots(key);
  if (own.empty()) throw std::invalid_argument("ctacl_sub: empty tracklet");
  const auto sub = m.subdomain(key.camera_id);
  std::vector<const FeatureVec*> positives;
  positives.reserve(own.size());
  for (const auto& ref : own) positives.push_back(ref.feature);
  std::vector<const FeatureVec*> denom;
  denom.reserve(sub.size());
  for (const auto& ref : sub) denom.push_back(ref.feature);
  return detail::contrastive_core(z, positives, denom, tau);
}

/// Extended objective: positives are the tracklet slots plus the mined
/// union; the denominator is the camera bank united with the mined
/// positives and negatives (each image counted once). With empty mined
/// sets this reduces to ctacl_sub term for term.
inline LossGrad ctacl_extended(const FeatureVec& z, const Ctam& m,
                               const CamTrkKey& key, const MiningResult& mined,
                               double tau) {
  const auto own = m.tracklet_slots(key);
  if (own.empty()) {
    throw std::invalid_argument("ctacl_extended: empty tracklet");
  }
  std::vector<const FeatureVec*> positives;
  positives.reserve(own.size() + mined.positives_union.size());
  for (const auto& ref : own) positives.push_back(ref.feature);
  for (std::uint32_t id : mined.positives_union) {
    positives.push_back(&m.slot(id));
  }

  const auto sub = m.subdomain(key.camera_id);
  std::vector<const FeatureVec*> denom;
  denom.reserve(sub.size() + mined.positives_union.size() +
                mined.negatives.size());
  std::unordered_set<std::uint32_t> seen;
  seen.reserve(denom.capacity());
  for (const auto& ref : sub) {
    if (seen.insert(ref.image_id).second) denom.push_back(ref.feature);
  }
  for (std::uint32_t id : mined.positives_union) {
    if (seen.insert(id).second) denom.push_back(&m.slot(id));
  }
  for (std::uint32_t id : mined.negatives) {
    if (seen.insert(id).second) denom.push_back(&m.slot(id));
  }
  return detail::contrastive_core(z, positives, denom, tau);
}

/// Likelihood of each camera id given z: softmax over centroid similarities.
inline ProbVec camera_likelihood(const FeatureVec& z,
                                 const CentroidSet& centroids) {
  if (centroids.n_cameras() < 2) {
    throw std::invalid_argument("camera_likelihood: needs >= 2 cameras");
  }
  Vec logits(centroids.n_cameras());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] = dot(z, centroids.centroids[c]);
  }
  return stable_softmax(logits);
}

/// KL(U || P) against the uniform camera distribution, evaluated through
/// log-sum-exp so a vanishing likelihood never divides by zero:
///   KL = lse(l) - mean(l) - log(n),  grad = sum_c (P_c - 1/n) * centroid_c.
inline LossGrad da_loss(const FeatureVec& z, const CentroidSet& centroids) {
  const std::size_t n = centroids.n_cameras();
  if (n < 2) throw std::invalid_argument("da_loss: needs >= 2 cameras");
  Vec logits(n);
  double mean = 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    logits[c] = dot(z, centroids.centroids[c]);
    mean += logits[c];
    mx = std::max(mx, logits[c]);
  }
  mean /= static_cast<double>(n);
  double exp_sum = 0.0;
  for (double l : logits) exp_sum += std::exp(l - mx);
  const double lse = mx + std::log(exp_sum);

  LossGrad out;
  out.value = std::max(0.0, lse - mean - std::log(static_cast<double>(n)));
  out.grad.assign(z.dim(), 0.0);
  const double uniform = 1.0 / static_cast<double>(n);
  const double inv_exp_sum = 1.0 / exp_sum;
  for (std::size_t c = 0; c < n; ++c) {
    const double w = std::exp(logits[c] - mx) * inv_exp_sum - uniform;
    const Vec& f = centroids.centroids[c].v;
    for (std::size_t i = 0; i < f.size(); ++i) out.grad[i] += w * f[i];
  }
  return out;
}

/// Joint objective: extended contrastive term plus lambda times the DA
/// term. With lambda == 0 the DA term is skipped entirely.
inline LossGrad total_loss(const FeatureVec& z, const Ctam& m,
                           const CamTrkKey& key, const MiningResult& mined,
                           const HyperParams& hyper,
                           const CentroidSet& centroids) {
  check(hyper);
  LossGrad out = ctacl_extended(z, m, key, mined, hyper.tau);
  if (hyper.lambda != 0.0) {
    const LossGrad da = da_loss(z, centroids);
    out.value += hyper.lambda * da.value;
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      out.grad[i] += hyper.lambda * da.grad[i];
    }
  }
  return out;
}

inline LossGrad total_loss(const FeatureVec& z, const Ctam& m,
                           const CamTrkKey& key, const MiningResult& mined,
                           const HyperParams& hyper) {
  return total_loss(z, m, key, mined, hyper,
                    hyper.lambda != 0.0 ? m.camera_centroids()
                                        : CentroidSet{});
}

}  // namespace ctacl
