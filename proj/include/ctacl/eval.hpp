#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "ctacl/dataset.hpp"
#include "ctacl/encoder.hpp"
#include "ctacl/synthdata.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

struct EvalReport {
  std::vector<double> cmc;  // cmc[k-1] = CMC@k
  double map = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_excluded_queries = 0;  // queries with no cross-camera match
  double camera_probe_accuracy = 0.0;
};

/// Cross-camera retrieval. Per query, gallery entries sharing both the
/// query's vehicle and camera are removed before ranking; matches are
/// same vehicle seen from a different camera. Queries left without any
/// match are excluded from CMC/mAP but still counted. Ranking is by
/// descending dot product, ties broken by ascending gallery id.
inline EvalReport evaluate_embeddings(const std::vector<FeatureVec>& embeddings,
                                      const std::vector<std::uint32_t>& camera_ids,
                                      const std::vector<std::uint32_t>& vehicle_ids,
                                      const QueryGallerySplit& split,
                                      std::size_t k_max) {
  const std::size_t n = embeddings.size();
  if (camera_ids.size() != n || vehicle_ids.size() != n) {
    throw std::invalid_argument("evaluate: parallel arrays disagree on length");
  }
  if (k_max == 0) throw std::invalid_argument("evaluate: k_max must be >= 1");
  std::unordered_set<std::uint32_t> in_gallery;
  for (std::uint32_t id : split.gallery_ids) {
    if (id >= n) throw std::invalid_argument("evaluate: gallery id out of range");
    in_gallery.insert(id);
  }
  for (std::uint32_t id : split.query_ids) {
    if (id >= n) throw std::invalid_argument("evaluate: query id out of range");
    if (in_gallery.count(id)) {
      throw std::invalid_argument("evaluate: query and gallery overlap");
    }
  }

  EvalReport rep;
  rep.cmc.assign(k_max, 0.0);
  rep.n_queries = split.query_ids.size();
  double ap_sum = 0.0;
  std::size_t scored = 0;

  struct Scored {
    double score;
    std::uint32_t id;
  };
  std::vector<Scored> ranked;
  for (std::uint32_t q : split.query_ids) {
    ranked.clear();
    std::size_t n_pos = 0;
    for (std::uint32_t g : split.gallery_ids) {
      if (vehicle_ids[g] == vehicle_ids[q] && camera_ids[g] == camera_ids[q]) {
        continue;  // same identity from the same camera is not a valid target
      }
      if (vehicle_ids[g] == vehicle_ids[q]) ++n_pos;
      ranked.push_back({dot(embeddings[q], embeddings[g]), g});
    }
    if (n_pos == 0) {
      ++rep.n_excluded_queries;
      continue;
    }
    std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });

    std::size_t hits = 0;
    std::size_t first_hit_rank = 0;  // 1-based, 0 = not yet seen
    double ap = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (vehicle_ids[ranked[r].id] != vehicle_ids[q]) continue;
      ++hits;
      if (first_hit_rank == 0) first_hit_rank = r + 1;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    ap /= static_cast<double>(n_pos);
    ap_sum += ap;
    ++scored;
    for (std::size_t k = first_hit_rank; k <= k_max; ++k) rep.cmc[k - 1] += 1.0;
  }

  if (scored > 0) {
    rep.map = ap_sum / static_cast<double>(scored);
    for (double& c : rep.cmc) c /= static_cast<double>(scored);
  }
  rep.camera_probe_accuracy = [&] {
    // nearest-centroid camera classification over all evaluated embeddings
    if (n == 0) return 0.0;
    std::uint32_t n_cams = 0;
    for (std::uint32_t c : camera_ids) n_cams = std::max(n_cams, c + 1);
    std::size_t dim = embeddings.front().dim();
    std::vector<Vec> mean(n_cams, Vec(dim, 0.0));
    std::vector<std::size_t> count(n_cams, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec& v = embeddings[i].v;
      Vec& mu = mean[camera_ids[i]];
      for (std::size_t j = 0; j < dim; ++j) mu[j] += v[j];
      ++count[camera_ids[i]];
    }
    std::vector<Vec> centroid(n_cams);
    for (std::uint32_t c = 0; c < n_cams; ++c) {
      if (count[c] == 0) {
        centroid[c] = Vec(dim, 0.0);
        continue;
      }
      for (double& x : mean[c]) x /= static_cast<double>(count[c]);
      const double nn = norm2(mean[c]);
      if (nn > 0.0) {
        for (double& x : mean[c]) x /= nn;
      }
      centroid[c] = std::move(mean[c]);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      double best_score = dot(embeddings[i].v, centroid[0]);
      for (std::uint32_t c = 1; c < n_cams; ++c) {
        const double s = dot(embeddings[i].v, centroid[c]);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      if (best == camera_ids[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
  }();
  return rep;
}

inline std::vector<FeatureVec> encode_all(const EncoderParams& params,
                                          const Dataset& ds) {
  std::vector<FeatureVec> out;
  out.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    out.push_back(encoder_forward(params, s.input));
  }
  return out;
}

inline EvalReport evaluate(const EncoderParams& params, const Dataset& ds,
                           const EvalLabels& labels,
                           const QueryGallerySplit& split, std::size_t k_max) {
  if (labels.vehicle_ids.size() != ds.samples.size()) {
    throw std::invalid_argument("evaluate: labels do not match dataset");
  }
  std::vector<std::uint32_t> cams;
  cams.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) cams.push_back(s.camera_id);
  return evaluate_embeddings(encode_all(params, ds), cams, labels.vehicle_ids,
                             split, k_max);
}

}  // namespace ctacl
