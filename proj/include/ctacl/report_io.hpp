#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ctacl/eval.hpp"
#include "ctacl/rng.hpp"
#include "ctacl/synthdata.hpp"
#include "ctacl/trainer.hpp"

namespace ctacl {

inline constexpr const char* kArtifactVersion = "1.0.0";

using json = nlohmann::json;

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string file_digest_hex(const std::string& path) {
  const std::uint64_t h = fnv1a64(read_file_bytes(path));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);  // binary: identical bytes everywhere
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << text;
  if (!f.good()) throw std::runtime_error("write failed: " + path);
}

inline json eval_report_json(const EvalReport& r) {
  json j;
  j["cmc"] = r.cmc;
  j["map"] = r.map;
  j["n_queries"] = r.n_queries;
  j["n_excluded_queries"] = r.n_excluded_queries;
  j["camera_probe_accuracy"] = r.camera_probe_accuracy;
  return j;
}

/// Reproducible per-epoch record. Wall time is deliberately not in here;
/// it goes to the timing sidecar so report streams byte-compare across runs.
inline json epoch_report_json(const EpochReport& r) {
  json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss_total"] = r.loss_total;
  j["loss_contrastive"] = r.loss_contrastive;
  if (r.loss_da.has_value()) j["loss_da"] = *r.loss_da;
  j["warmup"] = r.warmup;
  j["overhauled"] = r.overhauled;
  j["mining"] = {{"calls", r.mining.calls},
                 {"empty_pools", r.mining.empty_pools},
                 {"mean_pool_size", r.mining.mean_pool_size},
                 {"mean_grey_dropped", r.mining.mean_grey_dropped},
                 {"dedup_hits", r.mining.dedup_hits}};
  j["degenerate_slot_updates"] = r.degenerate_slot_updates;
  if (r.eval.has_value()) j["eval"] = eval_report_json(*r.eval);
  return j;
}

inline std::string reports_jsonl(const std::vector<EpochReport>& reports) {
  std::string out;
  for (const EpochReport& r : reports) {
    out += epoch_report_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::string timing_jsonl(const std::vector<EpochReport>& reports) {
  std::string out;
  for (const EpochReport& r : reports) {
    json j;
    j["epoch"] = r.epoch;
    j["wall_ms"] = r.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::string cmc_csv(const std::vector<double>& cmc) {
  std::string out = "k,cmc\n";
  for (std::size_t k = 0; k < cmc.size(); ++k) {
    out += std::to_string(k + 1);
    out += ',';
    out += json(cmc[k]).dump();
    out += '\n';
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::string out = "param,value,ok,rank1,rank5,map,error\n";
  for (const AblationCell& c : cells) {
    out += c.param;
    out += ',';
    out += c.value;
    out += ',';
    out += c.ok ? "1" : "0";
    out += ',';
    out += json(c.rank1).dump();
    out += ',';
    out += json(c.rank5).dump();
    out += ',';
    out += json(c.map).dump();
    out += ',';
    out += json(c.error).dump();  // quoted, commas stay inside
    out += '\n';
  }
  return out;
}

inline json ablation_json(const std::vector<AblationCell>& cells) {
  json rows = json::array();
  for (const AblationCell& c : cells) {
    json j;
    j["param"] = c.param;
    j["value"] = c.value;
    j["ok"] = c.ok;
    if (c.ok) {
      j["rank1"] = c.rank1;
      j["rank5"] = c.rank5;
      j["map"] = c.map;
    } else {
      j["error"] = c.error;
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

inline json gen_config_json(const GenConfig& c) {
  json j;
  j["n_vehicles"] = c.n_vehicles;
  j["n_cameras"] = c.n_cameras;
  j["min_cams_per_vehicle"] = c.min_cams_per_vehicle;
  j["max_cams_per_vehicle"] = c.max_cams_per_vehicle;
  j["min_tracklet_len"] = c.min_tracklet_len;
  j["max_tracklet_len"] = c.max_tracklet_len;
  j["d_in"] = c.d_in;
  j["domain_gap"] = c.domain_gap;
  j["intra_noise"] = c.intra_noise;
  j["seed"] = c.seed;
  return j;
}

inline json train_config_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.optim.epochs;
  j["batch_size"] = c.optim.batch_size;
  j["base_lr"] = c.optim.base_lr;
  j["momentum"] = c.optim.momentum;
  j["decay_factor"] = c.optim.decay_factor;
  j["decay_every"] = c.optim.decay_every;
  j["tau"] = c.hyper.tau;
  j["lambda"] = c.hyper.lambda;
  j["k"] = c.hyper.mining.k;
  j["gamma"] = c.hyper.mining.gamma;
  j["exclude_own_camera"] = c.hyper.mining.exclude_own_camera;
  j["warmup_epochs"] = c.warmup_epochs;
  j["overhaul_every"] = c.overhaul_every;
  j["eval_every"] = c.eval_every;
  j["cmc_kmax"] = c.cmc_kmax;
  j["sscl_noise"] = c.sscl_noise;
  j["variant"] = variant_name(c.variant);
  j["seed"] = c.seed;
  j["hidden"] = c.hidden;
  j["d_out"] = c.d_out;
  j["dataset"] = c.dataset_path;
  j["out_dir"] = c.out_dir;
  return j;
}

/// Fully resolved run description, written before any computation starts.
inline json run_manifest(const std::string& command, const json& config,
                         std::uint64_t seed,
                         const std::vector<std::pair<std::string, std::string>>& inputs,
                         const std::vector<std::string>& outputs) {
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  json in = json::object();
  for (const auto& [path, digest] : inputs) in[path] = digest;
  j["input_digests"] = in;
  j["outputs"] = outputs;
  return j;
}

}  // namespace ctacl
