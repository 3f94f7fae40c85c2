#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctacl/dataset.hpp"
#include "ctacl/rng.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

/// Generator knobs for a synthetic multi-camera tracklet dataset.
struct GenConfig {
  int n_vehicles = 100;
  int n_cameras = 6;
  int min_cams_per_vehicle = 2;
  int max_cams_per_vehicle = 4;
  int min_tracklet_len = 6;
  int max_tracklet_len = 10;
  int d_in = 32;
  double domain_gap = 1.0;   // camera transform strength (x a fixed ladder)
  double intra_noise = 0.08; // tracklet drift and per-frame jitter scale
  std::uint64_t seed = 7;
};

inline void check(const GenConfig& c) {
  if (c.n_vehicles < 1) throw std::invalid_argument("gen: n_vehicles < 1");
  if (c.n_cameras < 2) throw std::invalid_argument("gen: n_cameras < 2");
  if (c.min_cams_per_vehicle < 1 ||
      c.max_cams_per_vehicle < c.min_cams_per_vehicle ||
      c.max_cams_per_vehicle > c.n_cameras) {
    throw std::invalid_argument("gen: bad cams_per_vehicle range");
  }
  if (c.min_tracklet_len < 1 || c.max_tracklet_len < c.min_tracklet_len) {
    throw std::invalid_argument("gen: bad tracklet_len range");
  }
  if (c.d_in < 1) throw std::invalid_argument("gen: d_in < 1");
  if (c.domain_gap < 0.0) throw std::invalid_argument("gen: domain_gap < 0");
  if (c.intra_noise < 0.0) throw std::invalid_argument("gen: intra_noise < 0");
}

namespace detail {

// Skew weight inside each camera map. Kept below the offset weight (1.0) so
// a camera's bias is mostly a translation of the shared space, which is the
// kind of view discrepancy an encoder can undo, with a milder rotation mixed
// in so cameras are not pure shifts.
inline constexpr double kSkewWeight = 0.35;

// Cameras are not equally far from the shared space: camera c gets strength
// domain_gap * (kMinStrength + (kMaxStrength - kMinStrength) * c / (n-1)),
// a fixed ladder with mean 1. Difficulty then grows gradually with
// domain_gap instead of every camera crossing the same threshold at once.
inline constexpr double kMinStrength = 0.4;
inline constexpr double kMaxStrength = 1.6;

// Per-camera view transform x -> x + g * (kSkewWeight * S x + u), with S
// skew-symmetric of unit Frobenius norm, u a unit offset direction, and g
// the camera's strength. The linear part A = I + g*kSkewWeight*S has
// A^T A = I + (g*kSkewWeight)^2 S^T S, so every singular value lies in
// [1, sqrt(1 + (g*kSkewWeight)^2)]: well conditioned for any strength.
struct CameraTransform {
  std::vector<double> skew;  // d*d, row-major
  Vec offset;
  double gap = 0.0;  // this camera's strength g
  int d = 0;

  Vec apply(const Vec& x) const {
    Vec out(x);
    if (gap == 0.0) return out;
    for (int r = 0; r < d; ++r) {
      double acc = 0.0;
      const double* row = skew.data() + static_cast<std::size_t>(r) * d;
      for (int c = 0; c < d; ++c) acc += row[c] * x[c];
      out[r] += gap * (kSkewWeight * acc + offset[r]);
    }
    return out;
  }
};

inline CameraTransform make_camera_transform(Rng& rng, int d, double gap) {
  CameraTransform t;
  t.d = d;
  t.gap = gap;
  t.skew.assign(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> g(static_cast<std::size_t>(d) * d);
  for (double& x : g) x = rng.gaussian();
  double fro = 0.0;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const double s =
          0.5 * (g[static_cast<std::size_t>(r) * d + c] -
                 g[static_cast<std::size_t>(c) * d + r]);
      t.skew[static_cast<std::size_t>(r) * d + c] = s;
      fro += s * s;
    }
  }
  fro = std::sqrt(fro);
  if (fro > 0.0) {
    for (double& s : t.skew) s /= fro;
  }
  Vec u(d);
  for (double& x : u) x = rng.gaussian();
  t.offset = l2_normalize(u).v;
  return t;
}

}  // namespace detail

struct GeneratedDataset {
  Dataset data;
  EvalLabels labels;
};

/// Seeded synthetic dataset. Each vehicle owns a unit identity vector and
/// visits a random subset of cameras; each visit becomes one tracklet whose
/// frames are the identity plus a per-tracklet drift and per-frame jitter,
/// pushed through that camera's view transform. Tracklet ids are globally
/// unique. If a rare draw leaves some camera empty the generation retries
/// with the seed advanced by one, up to 16 times.
inline GeneratedDataset generate(const GenConfig& cfg) {
  check(cfg);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Rng rng = Rng::stream(cfg.seed + static_cast<std::uint64_t>(attempt),
                          "data");
    GeneratedDataset out;
    out.data.d_in = static_cast<std::uint32_t>(cfg.d_in);
    out.data.n_cameras = static_cast<std::uint32_t>(cfg.n_cameras);
    out.labels.n_vehicles = static_cast<std::uint32_t>(cfg.n_vehicles);

    std::vector<detail::CameraTransform> cams;
    cams.reserve(cfg.n_cameras);
    for (int c = 0; c < cfg.n_cameras; ++c) {
      const double ladder =
          detail::kMinStrength + (detail::kMaxStrength - detail::kMinStrength) *
                                     static_cast<double>(c) /
                                     static_cast<double>(cfg.n_cameras - 1);
      cams.push_back(detail::make_camera_transform(rng, cfg.d_in,
                                                   cfg.domain_gap * ladder));
    }

    std::uint32_t next_tracklet = 0;
    for (int v = 0; v < cfg.n_vehicles; ++v) {
      Vec ident(cfg.d_in);
      for (double& x : ident) x = rng.gaussian();
      ident = l2_normalize(ident).v;

      const int n_visits =
          cfg.min_cams_per_vehicle +
          static_cast<int>(rng.below(static_cast<std::uint64_t>(
              cfg.max_cams_per_vehicle - cfg.min_cams_per_vehicle + 1)));
      std::vector<int> cam_ids(cfg.n_cameras);
      std::iota(cam_ids.begin(), cam_ids.end(), 0);
      rng.shuffle(cam_ids);
      cam_ids.resize(n_visits);
      std::sort(cam_ids.begin(), cam_ids.end());

      for (int c : cam_ids) {
        const std::uint32_t tid = next_tracklet++;
        const int len =
            cfg.min_tracklet_len +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(
                cfg.max_tracklet_len - cfg.min_tracklet_len + 1)));
        Vec drift(cfg.d_in);
        for (double& x : drift) x = cfg.intra_noise * rng.gaussian();
        for (int f = 0; f < len; ++f) {
          Vec raw(cfg.d_in);
          for (int i = 0; i < cfg.d_in; ++i) {
            raw[i] = ident[i] + drift[i] + cfg.intra_noise * rng.gaussian();
          }
          Sample s;
          s.input = cams[c].apply(raw);
          s.camera_id = static_cast<std::uint32_t>(c);
          s.tracklet_id = tid;
          s.frame_index = static_cast<std::uint32_t>(f);
          out.data.samples.push_back(std::move(s));
          out.labels.vehicle_ids.push_back(static_cast<std::uint32_t>(v));
        }
      }
    }

    const auto counts = per_camera_counts(out.data);
    if (std::all_of(counts.begin(), counts.end(),
                    [](std::size_t n) { return n > 0; })) {
      validate(out.data);
      return out;
    }
  }
  throw IntegrityError(
      "generate: could not populate every camera in 16 attempts");
}

/// Deterministic query/gallery partition for cross-camera evaluation.
/// For every vehicle seen by at least two cameras, the tracklet at its
/// lowest camera id stays entirely in the gallery; each remaining tracklet
/// contributes one seeded query frame. Every query therefore has at least
/// one cross-camera positive in the gallery by construction. Vehicles seen
/// by a single camera go to the gallery only and are counted.
struct QueryGallerySplit {
  std::vector<std::uint32_t> query_ids;
  std::vector<std::uint32_t> gallery_ids;
  std::uint32_t n_single_camera_vehicles = 0;
};

inline QueryGallerySplit split_query_gallery(const Dataset& ds,
                                             const EvalLabels& labels,
                                             std::uint64_t seed) {
  if (labels.vehicle_ids.size() != ds.samples.size()) {
    throw IntegrityError("split: label channel length != sample count");
  }
  Rng rng = Rng::stream(seed, "eval-split");

  // vehicle -> camera -> sample ids (ordered maps keep this deterministic)
  std::map<std::uint32_t, std::map<std::uint32_t, std::vector<std::uint32_t>>>
      by_vehicle;
  for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
    by_vehicle[labels.vehicle_ids[i]][ds.samples[i].camera_id].push_back(i);
  }

  QueryGallerySplit split;
  std::vector<bool> is_query(ds.samples.size(), false);
  for (const auto& [vehicle, cams] : by_vehicle) {
    (void)vehicle;
    if (cams.size() < 2) {
      ++split.n_single_camera_vehicles;
      continue;
    }
    bool anchor = true;  // lowest camera id stays gallery-only
    for (const auto& [cam, ids] : cams) {
      (void)cam;
      if (anchor) {
        anchor = false;
        continue;
      }
      const std::uint32_t pick =
          ids[static_cast<std::size_t>(rng.below(ids.size()))];
      is_query[pick] = true;
      split.query_ids.push_back(pick);
    }
  }
  for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
    if (!is_query[i]) split.gallery_ids.push_back(i);
  }
  if (split.query_ids.empty()) {
    throw IntegrityError("split: no vehicle is visible at two cameras");
  }
  return split;
}

}  // namespace ctacl
