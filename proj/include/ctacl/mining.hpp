#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "ctacl/ctam.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

struct MiningParams {
  int k = 5;
  double gamma = 0.01;
  /// false: candidates are all slots outside the anchor's tracklet;
  /// true: candidates are all slots outside the anchor's camera.
  bool exclude_own_camera = false;
};

inline void check(const MiningParams& p) {
  if (p.k < 1) throw std::invalid_argument("mining: k must be >= 1");
  if (!(p.gamma >= 0.0 && p.gamma < 1.0)) {
    throw std::invalid_argument("mining: gamma must be in [0, 1)");
  }
}

struct RankedCandidate {
  std::uint32_t image_id;
  double score;
};

/// Index sets selected against one memory snapshot for one anchor.
struct MiningResult {
  std::vector<std::uint32_t> easy;
  std::vector<std::uint32_t> hard;
  std::vector<std::uint32_t> positives_union;  // easy kept before hard
  std::vector<std::uint32_t> negatives;
  std::vector<RankedCandidate> candidate_rank;  // anchor-similarity order
};

/// Everything the anchor may mine from: all slots except its own tracklet,
/// or except its whole camera when exclude_own_camera is set. Order is the
/// memory's camera/tracklet/slot enumeration.
inline std::vector<Ctam::SlotRef> candidate_pool(const Ctam& m,
                                                 const CamTrkKey& key,
                                                 bool exclude_own_camera) {
  m.tracklet_slots(key);  // key validity check
  std::vector<Ctam::SlotRef> pool;
  pool.reserve(m.size());
  for (std::uint32_t c = 0; c < m.n_cameras(); ++c) {
    if (exclude_own_camera && c == key.camera_id) continue;
    for (const Ctam::SlotRef& ref : m.subdomain(c)) {
      if (!exclude_own_camera &&
          m.key_of(ref.image_id).tracklet_id == key.tracklet_id) {
        continue;
      }
      pool.push_back(ref);
    }
  }
  return pool;
}

/// Pool sorted by similarity to z, descending; ties break on ascending
/// image id.
inline std::vector<RankedCandidate> rank_candidates(
    const FeatureVec& z, const std::vector<Ctam::SlotRef>& pool) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(pool.size());
  for (const Ctam::SlotRef& ref : pool) {
    ranked.push_back({ref.image_id, dot(z, *ref.feature)});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.image_id < b.image_id;
            });
  return ranked;
}

inline std::vector<std::uint32_t> easy_positives(
    const std::vector<RankedCandidate>& candidate_rank, int k) {
  if (k < 1) throw std::invalid_argument("easy_positives: k must be >= 1");
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(k),
                            candidate_rank.size());
  std::vector<std::uint32_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back(candidate_rank[i].image_id);
  }
  return out;
}

/// The tracklet mate farthest from z (lowest similarity; ties keep the
/// earliest slot).
inline const FeatureVec& farthest_tracklet_mate(
    const FeatureVec& z, const std::vector<Ctam::SlotRef>& own_tracklet) {
  if (own_tracklet.empty()) {
    throw std::invalid_argument("farthest_tracklet_mate: empty tracklet");
  }
  const FeatureVec* best = own_tracklet.front().feature;
  double best_score = dot(z, *best);
  for (std::size_t i = 1; i < own_tracklet.size(); ++i) {
    const double s = dot(z, *own_tracklet[i].feature);
    if (s < best_score) {
      best_score = s;
      best = own_tracklet[i].feature;
    }
  }
  return *best;
}

inline std::vector<std::uint32_t> hard_positives(
    const FeatureVec& z, const std::vector<Ctam::SlotRef>& own_tracklet,
    const Ctam& m, const CamTrkKey& key, int k,
    bool exclude_own_camera = false) {
  if (k < 1) throw std::invalid_argument("hard_positives: k must be >= 1");
  const FeatureVec& pivot = farthest_tracklet_mate(z, own_tracklet);
  const auto pool = candidate_pool(m, key, exclude_own_camera);
  return easy_positives(rank_candidates(pivot, pool), k);
}

/// Negatives: the similarity-sorted candidates minus the mined positives,
/// with the top ceil(gamma * |remainder|) entries dropped as the grey zone.
inline std::vector<std::uint32_t> grey_zone_negatives(
    const std::vector<RankedCandidate>& candidate_rank,
    const std::vector<std::uint32_t>& positives_union, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("grey_zone_negatives: gamma must be in [0,1)");
  }
  std::unordered_set<std::uint32_t> pos(positives_union.begin(),
                                        positives_union.end());
  std::vector<std::uint32_t> remainder;
  remainder.reserve(candidate_rank.size());
  for (const RankedCandidate& rc : candidate_rank) {
    if (!pos.count(rc.image_id)) remainder.push_back(rc.image_id);
  }
  const std::size_t drop = static_cast<std::size_t>(
      std::ceil(gamma * static_cast<double>(remainder.size())));
  if (drop >= remainder.size()) return {};
  return std::vector<std::uint32_t>(remainder.begin() +
                                        static_cast<std::ptrdiff_t>(drop),
                                    remainder.end());
}

/// Full mining pass for one anchor. Empty candidate pool (nothing outside
/// the anchor's tracklet or camera) reports nullopt; the caller falls back
/// to the in-subdomain loss.
inline std::optional<MiningResult> mine(const FeatureVec& z, const Ctam& m,
                                        const CamTrkKey& key,
                                        const MiningParams& params) {
  check(params);
  const auto own = m.tracklet_slots(key);
  const auto pool = candidate_pool(m, key, params.exclude_own_camera);
  if (pool.empty()) return std::nullopt;

  MiningResult r;
  r.candidate_rank = rank_candidates(z, pool);
  r.easy = easy_positives(r.candidate_rank, params.k);
  const FeatureVec& pivot = farthest_tracklet_mate(z, own);
  r.hard = easy_positives(rank_candidates(pivot, pool), params.k);

  r.positives_union = r.easy;
  std::unordered_set<std::uint32_t> seen(r.easy.begin(), r.easy.end());
  for (std::uint32_t id : r.hard) {
    if (seen.insert(id).second) r.positives_union.push_back(id);
  }
  r.negatives =
      grey_zone_negatives(r.candidate_rank, r.positives_union, params.gamma);
  return r;
}

}  // namespace ctacl
