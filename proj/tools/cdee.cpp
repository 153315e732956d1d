// Command-line front end: one subcommand per pipeline stage plus `pipeline`.
#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "cdee/io.hpp"
#include "cdee/manifest.hpp"
#include "cdee/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cdee;

namespace {

std::vector<std::string> ppm_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

Split parse_split_arg(const std::string& s) { return parse_split(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duodenal biopsy patch classification pipeline"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic slide corpus");
  SyntheticSpec spec;
  fs::path synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", seed);
  synth->add_option("--slides-per-class", spec.slides_per_class);
  synth->add_option("--patch-size", spec.patch_size);
  synth->add_option("--grid", spec.grid, "cells per slide side");
  synth->add_option("--tissue-cells", spec.tissue_cells);

  // patch
  auto* patch = app.add_subcommand("patch", "tile slides into patches");
  std::size_t patch_size = 64;
  double test_fraction = 0.25;
  fs::path patch_in, patch_out, patch_manifest;
  patch->add_option("--size", patch_size);
  patch->add_option("--in", patch_in, "slide directory with slides.csv")->required();
  patch->add_option("--out", patch_out, "patch directory")->required();
  patch->add_option("--manifest", patch_manifest)->required();
  patch->add_option("--test-fraction", test_fraction);
  patch->add_option("--seed", seed);

  // cluster
  auto* cluster = app.add_subcommand("cluster", "autoencoder + k-means patch filtering");
  fs::path cluster_in, cluster_manifest, cluster_summary;
  AutoencoderConfig ae;
  cluster->add_option("--in", cluster_in, "patch directory")->required();
  cluster->add_option("--manifest", cluster_manifest)->required();
  cluster->add_option("--summary", cluster_summary, "cluster summary output");
  cluster->add_option("--epochs", ae.epochs);
  cluster->add_option("--seed", seed);

  // balance
  auto* balance = app.add_subcommand("balance", "color-balance sweep");
  std::string percentages = "0.5,1.0,1.5,2.0";
  fs::path balance_in, balance_out, balance_manifest;
  std::string balance_split = "all";
  balance->add_option("--percentages", percentages);
  balance->add_option("--in", balance_in)->required();
  balance->add_option("--out", balance_out)->required();
  balance->add_option("--manifest", balance_manifest,
                      "restrict to non-rejected patches of this manifest");
  balance->add_option("--split", balance_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  balance->add_option("--seed", seed, "accepted for uniformity; balancing is deterministic");

  // train
  auto* trainc = app.add_subcommand("train", "train the classifier");
  fs::path train_manifest, train_patches, train_cfg, train_out, train_history;
  trainc->add_option("--manifest", train_manifest)->required();
  trainc->add_option("--patches", train_patches, "patch directory or sweep root")->required();
  trainc->add_option("--config", train_cfg, "key = value training config");
  trainc->add_option("--out", train_out)->required();
  trainc->add_option("--history", train_history, "per-epoch CSV");
  auto* train_seed = trainc->add_option("--seed", seed);

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path eval_model, eval_manifest, eval_patches, eval_out;
  std::string eval_split = "test";
  evalc->add_option("--model", eval_model)->required();
  evalc->add_option("--manifest", eval_manifest)->required();
  evalc->add_option("--patches", eval_patches)->required();
  evalc->add_option("--out", eval_out)->required();
  evalc->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test"}));
  evalc->add_option("--seed", seed, "accepted for uniformity; evaluation is deterministic");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run every stage");
  fs::path pipe_cfg, pipe_work;
  pipe->add_option("--config", pipe_cfg, "key = value pipeline config");
  pipe->add_option("--work", pipe_work, "work directory (overrides work_dir)");
  auto* pipe_seed = pipe->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      spec.seed = seed;
      write_synthetic(generate_synthetic(spec), synth_out);
    } else if (*patch) {
      const auto r = run_patch_stage(patch_in, patch_size, patch_out,
                                     patch_manifest, test_fraction, seed);
      std::cout << r.records.size() << " patches from " << r.slides << " slides\n";
    } else if (*cluster) {
      FilterConfig fc;
      fc.seed = derive_seed(seed, "kmeans");
      fc.autoencoder = ae;
      fc.autoencoder.seed = derive_seed(seed, "autoencoder");
      const auto r = run_cluster_stage(cluster_in, cluster_manifest, fc);
      const std::string text = format_cluster_summary(r.records);
      if (!cluster_summary.empty()) write_text_atomic(cluster_summary, text);
      std::cout << text;
    } else if (*balance) {
      const auto pcts = parse_double_list(percentages);
      std::vector<std::string> names;
      if (balance_manifest.empty()) {
        names = ppm_names(balance_in);
      } else {
        for (const auto& r : read_manifest(balance_manifest)) {
          if (r.cluster == Cluster::not_useful) continue;
          if (balance_split != "all" && r.split != parse_split_arg(balance_split)) continue;
          names.push_back(patch_file_name(r));
        }
      }
      if (names.empty()) throw std::invalid_argument("no images to balance");
      run_balance_stage(balance_in, names, pcts, balance_out);
    } else if (*trainc) {
      KeyValueConfig cfg;
      if (!train_cfg.empty()) cfg = KeyValueConfig::load(train_cfg);
      TrainConfig tc = train_config_from(cfg);
      cfg.reject_unknown();
      if (train_seed->count()) tc.seed = seed;
      if (train_history.empty()) train_history = fs::path(train_out).concat(".history.csv");
      const auto records = select_records(read_manifest(train_manifest), Split::train);
      const auto r = run_train_stage(patch_roots(train_patches), records, tc,
                                     train_out, train_history);
      const auto& last = r.train.history.back();
      std::cout << r.samples << " samples, final loss " << last.loss
                << ", accuracy " << last.accuracy << "\n";
    } else if (*evalc) {
      const auto records = select_records(read_manifest(eval_manifest),
                                          parse_split_arg(eval_split));
      const Evaluation e = run_eval_stage(eval_model, patch_roots(eval_patches),
                                          records, eval_out);
      std::cout << format_report(e, default_class_names());
    } else if (*pipe) {
      KeyValueConfig cfg;
      if (!pipe_cfg.empty()) cfg = KeyValueConfig::load(pipe_cfg);
      if (!pipe_work.empty()) cfg.set("work_dir", pipe_work.string());
      if (pipe_seed->count()) cfg.set("seed", std::to_string(seed));
      const PipelineConfig pc = PipelineConfig::from(cfg);
      const PipelineResult r = run_pipeline(pc, &std::cerr);
      std::cout << "summary: " << r.summary_path.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
