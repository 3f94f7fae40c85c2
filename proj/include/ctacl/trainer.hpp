#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctacl/ctam.hpp"
#include "ctacl/dataset.hpp"
#include "ctacl/encoder.hpp"
#include "ctacl/eval.hpp"
#include "ctacl/losses.hpp"
#include "ctacl/mining.hpp"
#include "ctacl/rng.hpp"
#include "ctacl/synthdata.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

enum class Variant { sscl, ctacl, ctacl_da };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::sscl: return "sscl";
    case Variant::ctacl: return "ctacl";
    case Variant::ctacl_da: return "ctacl-da";
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "sscl") return Variant::sscl;
  if (s == "ctacl") return Variant::ctacl;
  if (s == "ctacl-da") return Variant::ctacl_da;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected sscl|ctacl|ctacl-da)");
}

struct TrainConfig {
  OptimConfig optim;
  HyperParams hyper;
  std::size_t warmup_epochs = 5;
  std::size_t overhaul_every = 5;
  std::size_t eval_every = 5;  // 0 = final epoch only
  std::size_t cmc_kmax = 10;
  double sscl_noise = 0.25;  // embedding-space perturbation for the baseline
  Variant variant = Variant::ctacl_da;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t d_out = 64;
  std::string dataset_path;  // used by the CLI layer only
  std::string out_dir;
};

inline void check(const TrainConfig& c) {
  check(c.optim);
  check(c.hyper);
  check(c.hyper.mining);
  if (c.warmup_epochs > c.optim.epochs) {
    throw std::invalid_argument("train: warmup_epochs must not exceed epochs");
  }
  if (c.overhaul_every == 0) {
    throw std::invalid_argument("train: overhaul_every must be >= 1");
  }
  if (c.d_out == 0) throw std::invalid_argument("train: d_out must be > 0");
  for (std::size_t h : c.hidden) {
    if (h == 0) throw std::invalid_argument("train: zero-width hidden layer");
  }
  if (c.sscl_noise < 0.0) {
    throw std::invalid_argument("train: sscl_noise must be >= 0");
  }
  if (c.cmc_kmax == 0) throw std::invalid_argument("train: cmc_kmax must be >= 1");
}

struct MiningStats {
  std::uint64_t calls = 0;
  std::uint64_t empty_pools = 0;
  double mean_pool_size = 0.0;
  double mean_grey_dropped = 0.0;
  std::uint64_t dedup_hits = 0;  // hard positives already mined as easy
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_contrastive = 0.0;
  std::optional<double> loss_da;  // absent whenever no DA term was evaluated
  bool warmup = false;
  bool overhauled = false;
  MiningStats mining;
  std::uint64_t degenerate_slot_updates = 0;  // cumulative
  std::optional<EvalReport> eval;
  double wall_ms = 0.0;  // excluded from the reproducible report stream
};

struct FitResult {
  EncoderParams params;
  std::vector<EpochReport> reports;
  EvalReport final_eval;
  QueryGallerySplit split;
  std::uint32_t epochs_completed = 0;
  std::array<std::uint64_t, 4> rng_state{};  // batching stream at exit
};

/// Runs the full protocol on an in-memory dataset: warm-up epochs use the
/// in-subdomain objective only; later epochs mine against the current
/// memory snapshot and (for the DA variant) add the uniformity term.
/// Memory slots of a batch are folded in after its optimizer step, and the
/// whole memory is rebuilt from the encoder every overhaul_every epochs.
/// The SSCL variant ignores the memory entirely and trains the
/// perturbation-based baseline for the same number of epochs.
inline FitResult fit(const TrainConfig& config, const Dataset& ds,
                     const EvalLabels& labels) {
  check(config);
  validate(ds);
  if (labels.vehicle_ids.size() != ds.samples.size()) {
    throw std::invalid_argument("fit: labels do not match dataset");
  }
  const bool use_memory = config.variant != Variant::sscl;
  HyperParams hyper = config.hyper;
  if (config.variant != Variant::ctacl_da) hyper.lambda = 0.0;

  FitResult res;
  res.split = split_query_gallery(ds, labels, config.seed);

  std::vector<std::size_t> dims;
  dims.push_back(ds.d_in);
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.d_out);
  res.params = encoder_init(dims, config.seed);
  EncoderParams& params = res.params;

  const auto encode = [&params](const Sample& s) {
    return encoder_forward(params, s.input);
  };

  Rng batching = Rng::stream(config.seed, "batching");
  Rng augment = Rng::stream(config.seed, "augment");

  std::optional<Ctam> memory;
  if (use_memory) memory.emplace(Ctam::build(ds, encode));

  const std::size_t n = ds.samples.size();
  std::vector<std::uint32_t> perm(n);
  for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;

  for (std::size_t epoch = 1; epoch <= config.optim.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, config.optim);
    const bool warm = use_memory && epoch <= config.warmup_epochs;
    batching.shuffle(perm);

    // batch boundaries; a trailing singleton folds into the previous batch
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t b = 0; b < n; b += config.optim.batch_size) {
      batches.emplace_back(b, std::min(n, b + config.optim.batch_size));
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = n;
      batches.pop_back();
    }

    double sum_total = 0.0;
    double sum_contrastive = 0.0;
    double sum_da = 0.0;
    bool da_present = false;
    std::size_t n_anchors = 0;
    MiningStats stats;
    double pool_sum = 0.0;
    double grey_sum = 0.0;

    for (const auto& [lo, hi] : batches) {
      const std::size_t bn = hi - lo;
      EncoderGrads grads;
      std::vector<std::pair<std::uint32_t, FeatureVec>> pending;

      if (!use_memory) {
        std::vector<ForwardCache> caches(bn);
        std::vector<std::pair<FeatureVec, FeatureVec>> pairs;
        pairs.reserve(bn);
        for (std::size_t i = 0; i < bn; ++i) {
          const Sample& s = ds.samples[perm[lo + i]];
          FeatureVec z = encoder_forward(params, s.input, &caches[i]);
          Vec perturbed = z.v;
          for (double& x : perturbed) x += config.sscl_noise * augment.gaussian();
          pairs.emplace_back(std::move(z), l2_normalize(perturbed));
        }
        std::vector<LossGrad> lgs = sscl_loss(pairs, hyper.tau);
        for (std::size_t i = 0; i < bn; ++i) {
          sum_total += lgs[i].value;
          sum_contrastive += lgs[i].value;
          accumulate(grads, encoder_backward(params, caches[i], lgs[i].grad));
        }
      } else {
        CentroidSet centroids;
        if (!warm && hyper.lambda != 0.0) {
          centroids = memory->camera_centroids();
        }
        for (std::size_t i = 0; i < bn; ++i) {
          const std::uint32_t image_id = perm[lo + i];
          const Sample& s = ds.samples[image_id];
          ForwardCache cache;
          FeatureVec z = encoder_forward(params, s.input, &cache);
          LossGrad lg;
          if (warm) {
            lg = ctacl_sub(z, *memory, s.key(), hyper.tau);
            sum_contrastive += lg.value;
          } else {
            std::optional<MiningResult> mined =
                mine(z, *memory, s.key(), hyper.mining);
            ++stats.calls;
            if (mined.has_value()) {
              const std::size_t pool = mined->candidate_rank.size();
              const std::size_t remainder = pool - mined->positives_union.size();
              pool_sum += static_cast<double>(pool);
              grey_sum += static_cast<double>(remainder - mined->negatives.size());
              stats.dedup_hits += mined->easy.size() + mined->hard.size() -
                                  mined->positives_union.size();
              lg = ctacl_extended(z, *memory, s.key(), *mined, hyper.tau);
            } else {
              ++stats.empty_pools;
              lg = ctacl_sub(z, *memory, s.key(), hyper.tau);
            }
            sum_contrastive += lg.value;
            if (hyper.lambda != 0.0) {
              const LossGrad da = da_loss(z, centroids);
              lg.value += hyper.lambda * da.value;
              for (std::size_t j = 0; j < lg.grad.size(); ++j) {
                lg.grad[j] += hyper.lambda * da.grad[j];
              }
              sum_da += da.value;
              da_present = true;
            }
          }
          sum_total += lg.value;
          accumulate(grads, encoder_backward(params, cache, lg.grad));
          pending.emplace_back(image_id, std::move(z));
        }
      }

      scale(grads, 1.0 / static_cast<double>(bn));
      sgd_step(params, grads, lr, config.optim.momentum);
      for (const auto& [id, z] : pending) memory->slot_update(id, z);
      n_anchors += bn;
    }

    if (stats.calls > 0) {
      const double denom = static_cast<double>(stats.calls - stats.empty_pools);
      if (denom > 0.0) {
        stats.mean_pool_size = pool_sum / denom;
        stats.mean_grey_dropped = grey_sum / denom;
      }
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.lr = lr;
    rep.loss_total = sum_total / static_cast<double>(n_anchors);
    rep.loss_contrastive = sum_contrastive / static_cast<double>(n_anchors);
    if (da_present) rep.loss_da = sum_da / static_cast<double>(n_anchors);
    rep.warmup = warm;
    rep.mining = stats;

    if (use_memory && epoch % config.overhaul_every == 0) {
      memory->overhaul(ds, encode);
      rep.overhauled = true;
    }
    if (use_memory) rep.degenerate_slot_updates = memory->degenerate_updates();

    const bool scheduled =
        config.eval_every > 0 && epoch % config.eval_every == 0;
    if (scheduled || epoch == config.optim.epochs) {
      rep.eval = evaluate(params, ds, labels, res.split, config.cmc_kmax);
    }
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (epoch == config.optim.epochs) res.final_eval = *rep.eval;
    res.reports.push_back(std::move(rep));
  }

  res.epochs_completed = static_cast<std::uint32_t>(config.optim.epochs);
  res.rng_state = batching.state();
  return res;
}

struct AblationCell {
  std::string param;
  std::string value;
  bool ok = false;
  std::string error;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double map = 0.0;
};

/// One fit per grid value, all sharing the base config's seed. A failing
/// cell records its error and the sweep moves on.
inline std::vector<AblationCell> run_ablation(const TrainConfig& base,
                                              const std::string& param,
                                              const std::vector<std::string>& values,
                                              const Dataset& ds,
                                              const EvalLabels& labels) {
  if (values.empty()) throw std::invalid_argument("ablation: empty grid");
  if (param != "k" && param != "gamma" && param != "lambda" &&
      param != "variant") {
    throw std::invalid_argument("ablation: unknown grid parameter '" + param +
                                "' (expected k|gamma|lambda|variant)");
  }
  if (base.cmc_kmax < 5) {
    throw std::invalid_argument("ablation: cmc_kmax must be >= 5 for rank-5");
  }
  std::vector<AblationCell> table;
  for (const std::string& v : values) {
    AblationCell cell;
    cell.param = param;
    cell.value = v;
    try {
      TrainConfig cfg = base;
      if (param == "k") {
        cfg.hyper.mining.k = std::stoul(v);
      } else if (param == "gamma") {
        cfg.hyper.mining.gamma = std::stod(v);
      } else if (param == "lambda") {
        cfg.hyper.lambda = std::stod(v);
      } else {
        cfg.variant = parse_variant(v);
      }
      FitResult fr = fit(cfg, ds, labels);
      cell.rank1 = fr.final_eval.cmc[0];
      cell.rank5 = fr.final_eval.cmc[4];
      cell.map = fr.final_eval.map;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    table.push_back(std::move(cell));
  }
  return table;
}

}  // namespace ctacl
