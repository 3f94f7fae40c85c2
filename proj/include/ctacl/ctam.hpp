#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctacl/dataset.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

struct CentroidSet {
  std::vector<FeatureVec> centroids;  // one per camera, unit norm
  std::size_t n_cameras() const { return centroids.size(); }
};

/// Camera-tracklet-aware memory: one stored unit-norm feature per image,
/// organized camera -> tracklet -> slot and addressable by image id.
///
/// Mutation happens in two ways only: the per-step moving-average
/// slot_update, and a wholesale overhaul from a fresh encoder. Readers see
/// an immutable snapshot between those; all enumerations are
/// tracklet-major and slot-minor, so every derived quantity is
/// reproducible bit-for-bit.
class Ctam {
 public:
  using EncodeFn = std::function<FeatureVec(const Sample&)>;

  struct SlotRef {
    std::uint32_t image_id;
    const FeatureVec* feature;
  };

  static Ctam build(const Dataset& ds, const EncodeFn& encode) {
    Ctam m = build_structure(ds);
    for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
      m.slots_[i] = encode(ds.samples[i]);
      m.check_unit(m.slots_[i], i);
    }
    return m;
  }

  /// Moving-average slot refresh: slot <- normalize(slot + z). The
  /// antipodal case (slot + z == 0) keeps the previous value and bumps a
  /// degeneracy counter instead of dividing by zero.
  void slot_update(std::uint32_t image_id, const FeatureVec& z) {
    const FeatureVec& prev = slot(image_id);
    if (z.dim() != prev.dim()) {
      throw DimensionError("slot_update: dimension mismatch");
    }
    Vec sum(prev.dim());
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] = prev.v[i] + z.v[i];
      norm_sq += sum[i] * sum[i];
    }
    const double n = std::sqrt(norm_sq);
    if (n == 0.0) {
      ++degenerate_updates_;
      return;
    }
    const double inv = 1.0 / n;
    Vec& dst = slots_[image_id].v;
    for (std::size_t i = 0; i < sum.size(); ++i) dst[i] = sum[i] * inv;
  }

  /// Replaces every slot with a fresh encoding; moving-average history is
  /// gone afterwards. The dataset must be the one this memory was built on.
  void overhaul(const Dataset& ds, const EncodeFn& encode) {
    if (ds.samples.size() != slots_.size() ||
        ds.n_cameras != cameras_.size()) {
      throw IntegrityError("overhaul: dataset shape mismatch");
    }
    for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
      if (!(ds.samples[i].key() == keys_[i])) {
        throw IntegrityError("overhaul: dataset keys differ from build");
      }
    }
    for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
      slots_[i] = encode(ds.samples[i]);
      check_unit(slots_[i], i);
    }
  }

  /// All slots of one camera, tracklet-major and slot-minor.
  std::vector<SlotRef> subdomain(std::uint32_t camera_id) const {
    if (camera_id >= cameras_.size()) {
      throw std::invalid_argument("subdomain: unknown camera");
    }
    std::vector<SlotRef> out;
    for (const TrackletBank& t : cameras_[camera_id].tracklets) {
      for (std::uint32_t id : t.image_ids) {
        out.push_back({id, &slots_[id]});
      }
    }
    return out;
  }

  std::vector<SlotRef> tracklet_slots(const CamTrkKey& key) const {
    const TrackletBank& t = find_tracklet(key);
    std::vector<SlotRef> out;
    out.reserve(t.image_ids.size());
    for (std::uint32_t id : t.image_ids) out.push_back({id, &slots_[id]});
    return out;
  }

  /// Normalized per-camera mean of all stored features.
  CentroidSet camera_centroids() const {
    CentroidSet cs;
    cs.centroids.reserve(cameras_.size());
    for (std::uint32_t c = 0; c < cameras_.size(); ++c) {
      std::size_t count = 0;
      Vec mean(dim_, 0.0);
      for (const TrackletBank& t : cameras_[c].tracklets) {
        for (std::uint32_t id : t.image_ids) {
          for (std::size_t i = 0; i < dim_; ++i) mean[i] += slots_[id].v[i];
          ++count;
        }
      }
      if (count == 0) {
        throw IntegrityError("camera_centroids: empty camera bank");
      }
      for (double& x : mean) x /= static_cast<double>(count);
      cs.centroids.push_back(l2_normalize(mean));
    }
    return cs;
  }

  const FeatureVec& slot(std::uint32_t image_id) const {
    if (image_id >= slots_.size()) {
      throw std::invalid_argument("unknown image id");
    }
    return slots_[image_id];
  }

  CamTrkKey key_of(std::uint32_t image_id) const {
    if (image_id >= keys_.size()) {
      throw std::invalid_argument("unknown image id");
    }
    return keys_[image_id];
  }

  std::size_t size() const { return slots_.size(); }
  std::size_t n_cameras() const { return cameras_.size(); }
  std::size_t dim() const { return dim_; }
  std::uint64_t degenerate_updates() const { return degenerate_updates_; }

  std::size_t n_tracklets() const {
    std::size_t n = 0;
    for (const auto& c : cameras_) n += c.tracklets.size();
    return n;
  }

  std::size_t tracklet_size(const CamTrkKey& key) const {
    return find_tracklet(key).image_ids.size();
  }

 private:
  struct TrackletBank {
    std::uint32_t tracklet_id;
    std::vector<std::uint32_t> image_ids;
  };
  struct CameraBank {
    std::vector<TrackletBank> tracklets;  // ascending tracklet_id
  };

  static Ctam build_structure(const Dataset& ds) {
    validate(ds);
    Ctam m;
    m.dim_ = 0;
    m.cameras_.resize(ds.n_cameras);
    m.keys_.reserve(ds.samples.size());
    std::map<std::uint32_t, std::pair<std::uint32_t, std::vector<std::uint32_t>>>
        groups;  // tracklet_id -> (camera, image ids in dataset order)
    for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
      const Sample& s = ds.samples[i];
      m.keys_.push_back(s.key());
      auto [it, fresh] = groups.emplace(
          s.tracklet_id,
          std::make_pair(s.camera_id, std::vector<std::uint32_t>{}));
      if (!fresh && it->second.first != s.camera_id) {
        throw IntegrityError("build: tracklet spans two cameras");
      }
      it->second.second.push_back(i);
    }
    for (auto& [tid, group] : groups) {
      CameraBank& bank = m.cameras_[group.first];
      m.tracklet_lookup_.emplace(
          tid, std::make_pair(group.first,
                              static_cast<std::uint32_t>(
                                  bank.tracklets.size())));
      bank.tracklets.push_back({tid, std::move(group.second)});
    }
    m.slots_.resize(ds.samples.size());
    return m;
  }

  const TrackletBank& find_tracklet(const CamTrkKey& key) const {
    auto it = tracklet_lookup_.find(key.tracklet_id);
    if (it == tracklet_lookup_.end() || it->second.first != key.camera_id) {
      throw std::invalid_argument("unknown camera/tracklet key");
    }
    return cameras_[it->second.first].tracklets[it->second.second];
  }

  void check_unit(const FeatureVec& f, std::uint32_t image_id) {
    if (f.dim() == 0) throw IntegrityError("encoder produced empty feature");
    if (dim_ == 0) dim_ = f.dim();
    if (f.dim() != dim_) {
      throw IntegrityError("encoder feature dimension changed");
    }
    const double n = norm2(f.v);
    if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
      throw IntegrityError("slot " + std::to_string(image_id) +
                           " is not unit norm");
    }
  }

  std::vector<CameraBank> cameras_;
  std::vector<FeatureVec> slots_;  // image-id indexed
  std::vector<CamTrkKey> keys_;    // image-id indexed
  std::map<std::uint32_t, std::pair<std::uint32_t, std::uint32_t>>
      tracklet_lookup_;  // tracklet_id -> (camera, index in camera)
  std::size_t dim_ = 0;
  std::uint64_t degenerate_updates_ = 0;

  friend struct CtamSnapshot;
};

// Snapshot container, format version 1: the dataset block followed by a
// parallel slot array in image-id order.
//   "CTMS" | u32 version | u32 d_l | u64 degenerate_updates
//   | embedded dataset block (see dataset.hpp) | n * d_l f64 slot values
struct CtamSnapshot {
  static constexpr std::uint32_t kVersion = 1;

  static void save(const std::string& path, const Ctam& m, const Dataset& ds,
                   const EvalLabels& labels) {
    if (ds.samples.size() != m.size()) {
      throw IntegrityError("snapshot: dataset/memory size mismatch");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IntegrityError("cannot open for write: " + path);
    io::put_magic(os, "CTMS");
    io::put_u32(os, kVersion);
    io::put_u32(os, static_cast<std::uint32_t>(m.dim()));
    io::put_u64(os, m.degenerate_updates());
    write_dataset(os, ds, labels);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (double x : m.slots_[i].v) io::put_f64(os, x);
    }
    if (!os) throw IntegrityError("write failed: " + path);
  }

  struct Loaded {
    Ctam memory;
    Dataset data;
    EvalLabels labels;
  };

  static Loaded load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IntegrityError("cannot open: " + path);
    io::expect_magic(is, "CTMS", "snapshot");
    const std::uint32_t version = io::get_u32(is);
    if (version != kVersion) {
      throw IntegrityError("snapshot: unsupported version");
    }
    const std::uint32_t d_l = io::get_u32(is);
    const std::uint64_t degenerate = io::get_u64(is);
    LoadedDataset ld = read_dataset(is);
    Loaded out{Ctam::build_structure(ld.data), std::move(ld.data),
               std::move(ld.labels)};
    out.memory.dim_ = d_l;
    out.memory.degenerate_updates_ = degenerate;
    for (std::size_t i = 0; i < out.memory.slots_.size(); ++i) {
      FeatureVec f;
      f.v.resize(d_l);
      for (double& x : f.v) x = io::get_f64(is);
      out.memory.slots_[i] = std::move(f);
      out.memory.check_unit(out.memory.slots_[i],
                            static_cast<std::uint32_t>(i));
    }
    return out;
  }
};

}  // namespace ctacl
