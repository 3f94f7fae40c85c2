#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctacl/vecmath.hpp"

namespace ctacl {

struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CamTrkKey {
  std::uint32_t camera_id = 0;
  std::uint32_t tracklet_id = 0;
  friend bool operator==(const CamTrkKey&, const CamTrkKey&) = default;
};

/// One observation: the raw input vector plus the ids the training path is
/// allowed to see. Vehicle identity deliberately lives elsewhere.
struct Sample {
  Vec input;
  std::uint32_t camera_id = 0;
  std::uint32_t tracklet_id = 0;
  std::uint32_t frame_index = 0;
  CamTrkKey key() const { return {camera_id, tracklet_id}; }
};

struct Dataset {
  std::vector<Sample> samples;
  std::uint32_t d_in = 0;
  std::uint32_t n_cameras = 0;
  std::size_t size() const { return samples.size(); }
};

/// Ground-truth vehicle ids, kept apart from Dataset so nothing on the
/// training path can read them. Only the evaluation protocol takes this.
struct EvalLabels {
  std::vector<std::uint32_t> vehicle_ids;  // parallel to Dataset::samples
  std::uint32_t n_vehicles = 0;
};

namespace io {

// All on-disk integers and floats are little-endian, written bytewise.

inline void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(os, bits);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IntegrityError("dataset io: truncated stream");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IntegrityError("dataset io: truncated stream");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

inline void put_magic(std::ostream& os, const char m[5]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char m[5],
                         const char* what) {
  char b[4];
  is.read(b, 4);
  if (!is || std::memcmp(b, m, 4) != 0) {
    throw IntegrityError(std::string(what) + ": bad magic");
  }
}

}  // namespace io

inline std::uint32_t tracklet_count(const Dataset& ds) {
  std::map<std::uint32_t, std::uint32_t> owner;
  for (const Sample& s : ds.samples) {
    auto [it, fresh] = owner.emplace(s.tracklet_id, s.camera_id);
    if (!fresh && it->second != s.camera_id) {
      throw IntegrityError("tracklet " + std::to_string(s.tracklet_id) +
                           " appears under two cameras");
    }
  }
  return static_cast<std::uint32_t>(owner.size());
}

inline std::vector<std::size_t> per_camera_counts(const Dataset& ds) {
  std::vector<std::size_t> counts(ds.n_cameras, 0);
  for (const Sample& s : ds.samples) {
    if (s.camera_id >= ds.n_cameras) {
      throw IntegrityError("camera id out of range");
    }
    ++counts[s.camera_id];
  }
  return counts;
}

/// Structural checks: consistent dimensions, camera ids in range, global
/// tracklet-id uniqueness (one camera per tracklet), finite inputs.
inline void validate(const Dataset& ds) {
  if (ds.samples.empty()) throw IntegrityError("dataset is empty");
  if (ds.n_cameras < 1) throw IntegrityError("dataset has no cameras");
  for (const Sample& s : ds.samples) {
    if (s.input.size() != ds.d_in) {
      throw IntegrityError("sample input length != d_in");
    }
    if (!all_finite(s.input)) throw IntegrityError("non-finite sample input");
  }
  per_camera_counts(ds);
  tracklet_count(ds);
}

// Dataset container, format version 1.
//   "CTDS" | u32 version | u64 n | u32 d_in | u32 n_cameras
//   | u32 n_tracklets | u32 n_vehicles
//   | n records: u32 camera_id, u32 tracklet_id, u32 frame_index, d_in f64
//   | "EVID" | n u32 vehicle ids    (evaluation-only trailer)

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline void write_dataset(std::ostream& os, const Dataset& ds,
                          const EvalLabels& labels) {
  if (labels.vehicle_ids.size() != ds.samples.size()) {
    throw IntegrityError("label channel length != sample count");
  }
  io::put_magic(os, "CTDS");
  io::put_u32(os, kDatasetFormatVersion);
  io::put_u64(os, ds.samples.size());
  io::put_u32(os, ds.d_in);
  io::put_u32(os, ds.n_cameras);
  io::put_u32(os, tracklet_count(ds));
  io::put_u32(os, labels.n_vehicles);
  for (const Sample& s : ds.samples) {
    io::put_u32(os, s.camera_id);
    io::put_u32(os, s.tracklet_id);
    io::put_u32(os, s.frame_index);
    for (double x : s.input) io::put_f64(os, x);
  }
  io::put_magic(os, "EVID");
  for (std::uint32_t v : labels.vehicle_ids) io::put_u32(os, v);
}

struct LoadedDataset {
  Dataset data;
  EvalLabels labels;
};

inline LoadedDataset read_dataset(std::istream& is) {
  io::expect_magic(is, "CTDS", "dataset");
  const std::uint32_t version = io::get_u32(is);
  if (version != kDatasetFormatVersion) {
    throw IntegrityError("dataset: unsupported format version " +
                         std::to_string(version));
  }
  LoadedDataset out;
  const std::uint64_t n = io::get_u64(is);
  out.data.d_in = io::get_u32(is);
  out.data.n_cameras = io::get_u32(is);
  const std::uint32_t n_tracklets = io::get_u32(is);
  out.labels.n_vehicles = io::get_u32(is);
  out.data.samples.resize(n);
  for (Sample& s : out.data.samples) {
    s.camera_id = io::get_u32(is);
    s.tracklet_id = io::get_u32(is);
    s.frame_index = io::get_u32(is);
    s.input.resize(out.data.d_in);
    for (double& x : s.input) x = io::get_f64(is);
  }
  io::expect_magic(is, "EVID", "dataset trailer");
  out.labels.vehicle_ids.resize(n);
  for (std::uint32_t& v : out.labels.vehicle_ids) v = io::get_u32(is);
  validate(out.data);
  if (tracklet_count(out.data) != n_tracklets) {
    throw IntegrityError("dataset: tracklet count mismatch");
  }
  return out;
}

inline void save_dataset(const std::string& path, const Dataset& ds,
                         const EvalLabels& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IntegrityError("cannot open for write: " + path);
  write_dataset(os, ds, labels);
  if (!os) throw IntegrityError("write failed: " + path);
}

inline LoadedDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open: " + path);
  return read_dataset(is);
}

}  // namespace ctacl
