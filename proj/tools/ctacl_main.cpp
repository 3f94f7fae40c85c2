#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctacl/dataset.hpp"
#include "ctacl/encoder.hpp"
#include "ctacl/eval.hpp"
#include "ctacl/report_io.hpp"
#include "ctacl/synthdata.hpp"
#include "ctacl/trainer.hpp"

namespace fs = std::filesystem;
using ctacl::json;

namespace {

// CTACL_OUT_ROOT prefixes every relative output path when set.
std::string resolve_out(const std::string& path) {
  const char* root = std::getenv("CTACL_OUT_ROOT");
  if (root != nullptr && *root != '\0' && fs::path(path).is_relative()) {
    return (fs::path(root) / path).string();
  }
  return path;
}

void ensure_parent_dir(const std::string& file_path) {
  const fs::path parent = fs::path(file_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

struct GenArgs {
  ctacl::GenConfig cfg;
  std::string out;
};

int run_gen(const GenArgs& a) {
  ctacl::check(a.cfg);
  const std::string out = resolve_out(a.out);
  const std::string sidecar = out + ".json";
  const std::string manifest_path = out + ".manifest.json";
  ensure_parent_dir(out);

  ctacl::write_text_file(
      manifest_path,
      ctacl::run_manifest("gen", ctacl::gen_config_json(a.cfg), a.cfg.seed, {},
                          {out, sidecar})
              .dump(2) +
          "\n");

  const ctacl::GeneratedDataset g = ctacl::generate(a.cfg);
  ctacl::save_dataset(out, g.data, g.labels);

  json side;
  side["config"] = ctacl::gen_config_json(a.cfg);
  side["n_samples"] = g.data.samples.size();
  side["n_cameras"] = g.data.n_cameras;
  side["n_tracklets"] = ctacl::tracklet_count(g.data);
  side["n_vehicles"] = g.labels.n_vehicles;
  side["per_camera_counts"] = ctacl::per_camera_counts(g.data);
  side["digest"] = ctacl::file_digest_hex(out);
  ctacl::write_text_file(sidecar, side.dump(2) + "\n");

  const auto counts = ctacl::per_camera_counts(g.data);
  std::cout << "wrote " << g.data.samples.size() << " samples to " << out << "\n";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::cout << "  camera " << c << ": " << counts[c] << " samples\n";
  }
  return 0;
}

struct TrainArgs {
  ctacl::TrainConfig cfg;
  std::string variant = "ctacl-da";
};

int run_train(TrainArgs& a) {
  a.cfg.variant = ctacl::parse_variant(a.variant);
  a.cfg.dataset_path = resolve_out(a.cfg.dataset_path);
  a.cfg.out_dir = resolve_out(a.cfg.out_dir);
  ctacl::check(a.cfg);
  fs::create_directories(a.cfg.out_dir);
  const fs::path out(a.cfg.out_dir);

  const std::vector<std::string> outputs = {
      (out / "reports.jsonl").string(), (out / "timing.jsonl").string(),
      (out / "checkpoint.bin").string(), (out / "eval.json").string(),
      (out / "cmc.csv").string()};
  ctacl::write_text_file(
      (out / "manifest.json").string(),
      ctacl::run_manifest(
          "train", ctacl::train_config_json(a.cfg), a.cfg.seed,
          {{a.cfg.dataset_path, ctacl::file_digest_hex(a.cfg.dataset_path)}},
          outputs)
              .dump(2) +
          "\n");

  const ctacl::LoadedDataset ds = ctacl::load_dataset(a.cfg.dataset_path);
  ctacl::FitResult res = ctacl::fit(a.cfg, ds.data, ds.labels);

  ctacl::write_text_file(outputs[0], ctacl::reports_jsonl(res.reports));
  ctacl::write_text_file(outputs[1], ctacl::timing_jsonl(res.reports));
  ctacl::Checkpoint ck;
  ck.params = std::move(res.params);
  ck.epochs_completed = res.epochs_completed;
  ck.rng_state = res.rng_state;
  ctacl::save_checkpoint(outputs[2], ck);
  ctacl::write_text_file(outputs[3],
                         ctacl::eval_report_json(res.final_eval).dump(2) + "\n");
  ctacl::write_text_file(outputs[4], ctacl::cmc_csv(res.final_eval.cmc));

  std::cout << "trained " << a.variant << " for " << res.epochs_completed
            << " epochs: rank-1 " << res.final_eval.cmc[0] << ", mAP "
            << res.final_eval.map << "\n"
            << "artifacts in " << a.cfg.out_dir << "\n";
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t cmc_kmax = 10;
};

int run_eval(const EvalArgs& a) {
  const std::string data = resolve_out(a.data);
  const std::string ckpt = resolve_out(a.checkpoint);
  const std::string out_dir = resolve_out(a.out);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  json cfg;
  cfg["data"] = data;
  cfg["checkpoint"] = ckpt;
  cfg["seed"] = a.seed;
  cfg["cmc_kmax"] = a.cmc_kmax;
  const std::vector<std::string> outputs = {(out / "eval.json").string(),
                                            (out / "cmc.csv").string()};
  ctacl::write_text_file(
      (out / "manifest.json").string(),
      ctacl::run_manifest("eval", cfg, a.seed,
                          {{data, ctacl::file_digest_hex(data)},
                           {ckpt, ctacl::file_digest_hex(ckpt)}},
                          outputs)
              .dump(2) +
          "\n");

  const ctacl::LoadedDataset ds = ctacl::load_dataset(data);
  const ctacl::Checkpoint ck = ctacl::load_checkpoint(ckpt);
  const ctacl::QueryGallerySplit split =
      ctacl::split_query_gallery(ds.data, ds.labels, a.seed);
  const ctacl::EvalReport rep =
      ctacl::evaluate(ck.params, ds.data, ds.labels, split, a.cmc_kmax);

  ctacl::write_text_file(outputs[0], ctacl::eval_report_json(rep).dump(2) + "\n");
  ctacl::write_text_file(outputs[1], ctacl::cmc_csv(rep.cmc));
  std::cout << "rank-1 " << rep.cmc[0] << ", mAP " << rep.map << " over "
            << rep.n_queries << " queries\n";
  return 0;
}

struct AblateArgs {
  TrainArgs train;
  std::string grid;
};

std::pair<std::string, std::vector<std::string>> parse_grid(const std::string& s) {
  const std::size_t eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--grid", "expected param=v1,v2,...");
  }
  std::vector<std::string> values;
  std::string rest = s.substr(eq + 1);
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = rest.find(',', pos);
    const std::string tok = rest.substr(pos, comma - pos);
    if (tok.empty()) throw CLI::ValidationError("--grid", "empty grid value");
    values.push_back(tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return {s.substr(0, eq), values};
}

int run_ablate(AblateArgs& a) {
  const auto [param, values] = parse_grid(a.grid);
  a.train.cfg.variant = ctacl::parse_variant(a.train.variant);
  a.train.cfg.dataset_path = resolve_out(a.train.cfg.dataset_path);
  a.train.cfg.out_dir = resolve_out(a.train.cfg.out_dir);
  ctacl::check(a.train.cfg);
  fs::create_directories(a.train.cfg.out_dir);
  const fs::path out(a.train.cfg.out_dir);

  json cfg = ctacl::train_config_json(a.train.cfg);
  cfg["grid"] = a.grid;
  const std::vector<std::string> outputs = {(out / "ablation.csv").string(),
                                            (out / "ablation.json").string()};
  ctacl::write_text_file(
      (out / "manifest.json").string(),
      ctacl::run_manifest("ablate", cfg, a.train.cfg.seed,
                          {{a.train.cfg.dataset_path,
                            ctacl::file_digest_hex(a.train.cfg.dataset_path)}},
                          outputs)
              .dump(2) +
          "\n");

  const ctacl::LoadedDataset ds = ctacl::load_dataset(a.train.cfg.dataset_path);
  const std::vector<ctacl::AblationCell> table =
      ctacl::run_ablation(a.train.cfg, param, values, ds.data, ds.labels);

  ctacl::write_text_file(outputs[0], ctacl::ablation_csv(table));
  ctacl::write_text_file(outputs[1], ctacl::ablation_json(table).dump(2) + "\n");
  for (const ctacl::AblationCell& c : table) {
    if (c.ok) {
      std::cout << c.param << "=" << c.value << ": rank-1 " << c.rank1
                << ", mAP " << c.map << "\n";
    } else {
      std::cout << c.param << "=" << c.value << ": FAILED (" << c.error << ")\n";
    }
  }
  return 0;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool grid_required,
                     std::string* grid) {
  cmd->configurable();
  cmd->add_option("--data", a.cfg.dataset_path, "dataset file")->required();
  cmd->add_option("--out", a.cfg.out_dir, "output directory")->required();
  cmd->add_option("--seed", a.cfg.seed, "root seed");
  cmd->add_option("--epochs", a.cfg.optim.epochs, "training epochs");
  cmd->add_option("--batch", a.cfg.optim.batch_size, "batch size");
  cmd->add_option("--lr", a.cfg.optim.base_lr, "base learning rate");
  cmd->add_option("--tau", a.cfg.hyper.tau, "softmax temperature");
  cmd->add_option("--lambda", a.cfg.hyper.lambda, "DA loss weight");
  cmd->add_option("--gamma", a.cfg.hyper.mining.gamma, "grey-zone fraction");
  cmd->add_option("--k", a.cfg.hyper.mining.k, "positives mined per list");
  cmd->add_option("--warmup", a.cfg.warmup_epochs, "warm-up epochs");
  cmd->add_option("--overhaul-every", a.cfg.overhaul_every,
                  "memory rebuild period (epochs)");
  cmd->add_flag("--exclude-own-camera", a.cfg.hyper.mining.exclude_own_camera,
                "mine candidates outside the whole camera, not just the tracklet");
  cmd->add_option("--variant", a.variant, "training objective")
      ->check(CLI::IsMember({"sscl", "ctacl", "ctacl-da"}));
  cmd->add_option("--eval-every", a.cfg.eval_every,
                  "evaluation period in epochs (0 = final only)");
  cmd->add_option("--cmc-kmax", a.cfg.cmc_kmax, "CMC curve length");
  cmd->add_option("--sscl-noise", a.cfg.sscl_noise,
                  "embedding perturbation scale for the sscl baseline");
  cmd->add_option("--hidden", a.cfg.hidden, "hidden layer widths")
      ->delimiter(',');
  cmd->add_option("--d-out", a.cfg.d_out, "embedding dimension");
  cmd->add_option("--momentum", a.cfg.optim.momentum, "SGD momentum");
  if (grid != nullptr) {
    auto* opt = cmd->add_option("--grid", *grid, "sweep, e.g. lambda=0,0.2");
    if (grid_required) opt->required();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camera-tracklet-aware contrastive representation learning"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "config file (TOML/INI; keys live in a [subcommand] section; "
                 "command-line flags win over file values)");

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->configurable();
  gen->add_option("--out", gen_args.out, "dataset file to write")->required();
  gen->add_option("--seed", gen_args.cfg.seed, "generator seed");
  gen->add_option("--cameras", gen_args.cfg.n_cameras, "number of cameras");
  gen->add_option("--vehicles", gen_args.cfg.n_vehicles, "number of vehicles");
  gen->add_option("--d-in", gen_args.cfg.d_in, "input feature dimension");
  gen->add_option("--gap", gen_args.cfg.domain_gap, "camera domain gap strength");
  gen->add_option("--noise", gen_args.cfg.intra_noise,
                  "tracklet drift / frame jitter scale");
  gen->add_option("--min-cams", gen_args.cfg.min_cams_per_vehicle,
                  "min cameras per vehicle");
  gen->add_option("--max-cams", gen_args.cfg.max_cams_per_vehicle,
                  "max cameras per vehicle");
  gen->add_option("--min-len", gen_args.cfg.min_tracklet_len,
                  "min tracklet length");
  gen->add_option("--max-len", gen_args.cfg.max_tracklet_len,
                  "max tracklet length");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train an encoder");
  add_train_flags(train, train_args, false, nullptr);

  EvalArgs eval_args;
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  evalc->configurable();
  evalc->add_option("--data", eval_args.data, "dataset file")->required();
  evalc->add_option("--checkpoint", eval_args.checkpoint, "encoder checkpoint")
      ->required();
  evalc->add_option("--out", eval_args.out, "output directory")->required();
  evalc->add_option("--seed", eval_args.seed, "query/gallery split seed");
  evalc->add_option("--cmc-kmax", eval_args.cmc_kmax, "CMC curve length");

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "sweep one parameter");
  add_train_flags(ablate, ablate_args.train, true, &ablate_args.grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (evalc->parsed()) return run_eval(eval_args);
    if (ablate->parsed()) return run_ablate(ablate_args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
