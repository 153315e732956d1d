#include "cdee/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "cdee/checkpoint.hpp"
#include "cdee/io.hpp"
#include "cdee/manifest.hpp"

namespace cdee {

namespace fs = std::filesystem;

namespace {

fs::path staging_dir(const fs::path& dir) {
  fs::path p = dir;
  p += ".tmp";
  if (fs::exists(p)) fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<RgbImage> load_patches(const fs::path& dir,
                                   const std::vector<PatchRecord>& records) {
  std::vector<RgbImage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(read_image(dir / patch_file_name(r)));
  return out;
}

std::string join_doubles(std::span<const double> v) {
  std::string s;
  for (double d : v) s += (s.empty() ? "" : ",") + format_percentage(d);
  return s;
}

}  // namespace

PatchStageResult run_patch_stage(const fs::path& slide_dir,
                                 std::size_t patch_size,
                                 const fs::path& patch_dir,
                                 const fs::path& manifest_path,
                                 double test_fraction, std::uint64_t seed) {
  const auto slides = read_slide_index(slide_dir / kSlideIndexName);
  if (slides.empty()) throw std::invalid_argument("no slides listed");
  const fs::path staging = staging_dir(patch_dir);
  PatchStageResult result;
  std::vector<PatchRecord> records;
  for (const auto& s : slides) {
    fs::path file = slide_dir / s.file;
    if (!fs::exists(file)) file = slide_dir / "slides" / s.file;
    const RgbImage slide = read_image(file);
    for (auto& [rec, img] : extract_patches(slide, patch_size, s.slide_id, s.class_label)) {
      write_image(staging / patch_file_name(rec), img);
      records.push_back(std::move(rec));
    }
    ++result.slides;
  }
  result.records = assign_split(std::move(records), test_fraction, seed);
  commit_directory(staging, patch_dir);
  write_manifest(manifest_path, result.records);
  return result;
}

ClusterStageResult run_cluster_stage(const fs::path& patch_dir,
                                     const fs::path& manifest_path,
                                     const FilterConfig& config) {
  ClusterStageResult out;
  out.records = read_manifest(manifest_path);
  const auto patches = load_patches(patch_dir, out.records);
  out.filter = filter_patches(patches, config);
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].cluster = out.filter.useful[i] ? Cluster::useful : Cluster::not_useful;
  }
  write_manifest(manifest_path, out.records);
  return out;
}

std::string format_cluster_summary(const std::vector<PatchRecord>& records) {
  struct Row {
    std::size_t useful = 0, other = 0;
  };
  std::vector<Row> rows(kNumClasses);
  Row total;
  for (const auto& r : records) {
    Row& row = rows[static_cast<int>(r.class_label)];
    if (r.cluster == Cluster::useful) {
      ++row.useful;
      ++total.useful;
    } else {
      ++row.other;
      ++total.other;
    }
  }
  auto cell = [](std::size_t n, std::size_t of) {
    char buf[48];
    const double pct = of ? 100.0 * double(n) / double(of) : 0.0;
    std::snprintf(buf, sizeof buf, "%zu (%.0f%%)", n, pct);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %16s %16s\n", "class", "total",
                "useful", "not useful");
  out << line;
  auto emit = [&](const std::string& name, const Row& r) {
    const std::size_t n = r.useful + r.other;
    std::snprintf(line, sizeof line, "%-8s %8zu %16s %16s\n", name.c_str(), n,
                  cell(r.useful, n).c_str(), cell(r.other, n).c_str());
    out << line;
  };
  for (int k = 0; k < kNumClasses; ++k) {
    emit(std::string(to_string(static_cast<ClassLabel>(k))), rows[k]);
  }
  emit("total", total);
  return out.str();
}

void run_balance_stage(const fs::path& in_dir,
                       const std::vector<std::string>& names,
                       std::span<const double> percentages,
                       const fs::path& out_dir, const BalanceOptions& options) {
  const fs::path staging = staging_dir(out_dir);
  std::vector<fs::path> dirs;
  for (double p : percentages) {
    dirs.push_back(staging / ("pct_" + format_percentage(p)));
    fs::create_directories(dirs.back());
  }
  for (const auto& name : names) {
    const RgbImage img = read_image(in_dir / name);
    const auto out = balance_sweep(img, percentages, options);
    for (std::size_t i = 0; i < out.size(); ++i) write_image(dirs[i] / name, out[i]);
  }
  commit_directory(staging, out_dir);
}

std::vector<fs::path> patch_roots(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) {
    throw std::invalid_argument(root.string() + " is not a directory");
  }
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("pct_", 0) == 0) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) out.push_back(root);
  return out;
}

std::vector<PatchRecord> select_records(const std::vector<PatchRecord>& records,
                                        Split split) {
  std::vector<PatchRecord> out;
  for (const auto& r : records) {
    if (r.split == split && r.cluster != Cluster::not_useful) out.push_back(r);
  }
  return out;
}

std::vector<LabeledImage> load_labeled(const std::vector<fs::path>& roots,
                                       const std::vector<PatchRecord>& records) {
  std::vector<LabeledImage> out;
  out.reserve(roots.size() * records.size());
  for (const auto& root : roots) {
    for (const auto& r : records) {
      out.push_back({read_image(root / patch_file_name(r)),
                     static_cast<int>(r.class_label)});
    }
  }
  return out;
}

TrainStageResult run_train_stage(const std::vector<fs::path>& roots,
                                 const std::vector<PatchRecord>& records,
                                 const TrainConfig& config,
                                 const fs::path& checkpoint_path,
                                 const fs::path& history_path) {
  config.validate();
  const auto data = load_labeled(roots, records);
  if (data.empty()) throw std::invalid_argument("no training patches selected");
  const std::vector<std::size_t> chain =
      config.pool_chain.empty() ? default_pool_chain(config.patch_size) : config.pool_chain;
  LayerStack<float> model = build_model<float>(config.patch_size, chain, config.seed);

  TrainStageResult out;
  out.samples = data.size();
  out.train = train(model, data, config);
  save_checkpoint(checkpoint_path, model, &out.train.optimizer);

  std::ostringstream hist;
  hist << "epoch,loss,accuracy\n";
  char buf[96];
  for (std::size_t e = 0; e < out.train.history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e + 1,
                  out.train.history[e].loss, out.train.history[e].accuracy);
    hist << buf;
  }
  write_text_atomic(history_path, hist.str());
  return out;
}

Evaluation run_eval_stage(const fs::path& checkpoint_path,
                          const std::vector<fs::path>& roots,
                          const std::vector<PatchRecord>& records,
                          const fs::path& out_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const auto data = load_labeled(roots, records);
  if (data.empty()) throw std::invalid_argument("no evaluation patches selected");
  std::vector<RgbImage> images;
  std::vector<int> labels;
  images.reserve(data.size());
  for (const auto& d : data) {
    images.push_back(d.image);
    labels.push_back(d.label);
  }
  const Evaluation eval = evaluate(labels, predict(ckpt.model, images));
  write_evaluation(eval, default_class_names(), out_dir);
  return eval;
}

TrainConfig train_config_from(const KeyValueConfig& cfg, const std::string& p) {
  TrainConfig t;
  t.learning_rate = cfg.get_double(p + "learning_rate", t.learning_rate);
  t.beta1 = cfg.get_double(p + "beta1", t.beta1);
  t.beta2 = cfg.get_double(p + "beta2", t.beta2);
  t.epsilon = cfg.get_double(p + "epsilon", t.epsilon);
  t.batch_size = cfg.get_u64(p + "batch_size", t.batch_size);
  t.epochs = cfg.get_u64(p + "epochs", t.epochs);
  t.seed = cfg.get_u64(p + "seed", t.seed);
  t.patch_size = cfg.get_u64(p + "patch_size", t.patch_size);
  t.pool_chain = cfg.get_sizes(p + "pool_chain", t.pool_chain);
  return t;
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& cfg) {
  PipelineConfig c;
  c.work_dir = cfg.get_string("work_dir", "");
  if (c.work_dir.empty()) throw std::invalid_argument("config needs work_dir");
  c.slide_dir = cfg.get_string("slide_dir", "");
  c.seed = cfg.get_u64("seed", c.seed);
  c.patch_size = cfg.get_u64("patch_size", c.patch_size);
  c.test_fraction = cfg.get_double("test_fraction", c.test_fraction);

  SyntheticSpec& s = c.synthetic;
  s.slides_per_class = cfg.get_u64("synth.slides_per_class", s.slides_per_class);
  s.grid = cfg.get_u64("synth.grid", s.grid);
  s.tissue_cells = cfg.get_u64("synth.tissue_cells", s.tissue_cells);
  s.margin = cfg.get_u64("synth.margin", s.margin);
  s.noise = cfg.get_double("synth.noise", s.noise);

  AutoencoderConfig& a = c.autoencoder;
  a.epochs = cfg.get_u64("autoencoder.epochs", a.epochs);
  a.batch_size = cfg.get_u64("autoencoder.batch_size", a.batch_size);
  a.adam.alpha = cfg.get_double("autoencoder.learning_rate", a.adam.alpha);

  c.train_percentages = cfg.get_doubles("balance.train_percentages", c.train_percentages);
  c.test_percentages = cfg.get_doubles("balance.test_percentages", c.test_percentages);
  c.train = train_config_from(cfg, "train.");
  cfg.reject_unknown();
  return c;
}

KeyValueConfig PipelineConfig::canonical() const {
  KeyValueConfig k;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  k.set("work_dir", work_dir.string());
  k.set("slide_dir", slide_dir.string());
  k.set("seed", std::to_string(seed));
  k.set("patch_size", std::to_string(patch_size));
  k.set("test_fraction", num(test_fraction));
  k.set("synth.slides_per_class", std::to_string(synthetic.slides_per_class));
  k.set("synth.grid", std::to_string(synthetic.grid));
  k.set("synth.tissue_cells", std::to_string(synthetic.tissue_cells));
  k.set("synth.margin", std::to_string(synthetic.margin));
  k.set("synth.noise", num(synthetic.noise));
  k.set("autoencoder.epochs", std::to_string(autoencoder.epochs));
  k.set("autoencoder.batch_size", std::to_string(autoencoder.batch_size));
  k.set("autoencoder.learning_rate", num(autoencoder.adam.alpha));
  k.set("balance.train_percentages", join_doubles(train_percentages));
  k.set("balance.test_percentages", join_doubles(test_percentages));
  k.set("train.learning_rate", num(train.learning_rate));
  k.set("train.beta1", num(train.beta1));
  k.set("train.beta2", num(train.beta2));
  k.set("train.epsilon", num(train.epsilon));
  k.set("train.batch_size", std::to_string(train.batch_size));
  k.set("train.epochs", std::to_string(train.epochs));
  std::string chain;
  for (auto p : train.pool_chain) chain += (chain.empty() ? "" : ",") + std::to_string(p);
  k.set("train.pool_chain", chain);
  return k;
}

namespace {

class StageRunner {
 public:
  StageRunner(fs::path work, std::ostream* log)
      : stamps_(std::move(work) / ".stamps"), log_(log) {}

  // Runs `body` unless every output exists, the stamp matches and nothing
  // upstream ran in this invocation.
  template <typename F>
  void stage(const std::string& name, const std::string& stamp,
             const std::vector<fs::path>& outputs, F&& body) {
    const fs::path stamp_path = stamps_ / (name + ".stamp");
    bool current = !upstream_ran_ && fs::exists(stamp_path);
    for (const auto& o : outputs) current = current && fs::exists(o);
    if (current) {
      const auto bytes = read_file(stamp_path);
      current = std::string(bytes.begin(), bytes.end()) == stamp;
    }
    if (current) {
      result.skipped.push_back(name);
      if (log_) *log_ << "[" << name << "] up to date\n";
      return;
    }
    if (log_) *log_ << "[" << name << "] running\n" << std::flush;
    // A stale stamp must not survive a failed rerun.
    fs::remove(stamp_path);
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    write_text_atomic(stamp_path, stamp);
    upstream_ran_ = true;
    result.ran.push_back(name);
  }

  PipelineResult result;

 private:
  fs::path stamps_;
  std::ostream* log_;
  bool upstream_ran_ = false;
};

nlohmann::json eval_summary(const Evaluation& e) {
  nlohmann::json j;
  j["samples"] = e.matrix.total();
  j["accuracy"] = e.metrics.accuracy;
  j["macro_f1"] = e.metrics.macro.f1;
  j["micro_f1"] = e.metrics.micro.f1;
  j["macro_auc"] = e.roc.macro.auc;
  j["micro_auc"] = e.roc.micro.auc;
  nlohmann::json f1 = nlohmann::json::object();
  const auto names = default_class_names();
  for (std::size_t c = 0; c < e.metrics.per_class.size(); ++c) {
    f1[names[c]] = e.metrics.per_class[c].f1;
  }
  j["f1"] = f1;
  return j;
}


}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log) {
  const fs::path work = config.work_dir;
  fs::create_directories(work);
  const KeyValueConfig canon = config.canonical();
  auto stamp_of = [&](std::initializer_list<const char*> keys) {
    std::string s;
    for (const char* k : keys) s += std::string(k) + " = " + canon.values().at(k) + "\n";
    return s;
  };

  StageRunner runner(work, log);

  fs::path slide_dir = config.slide_dir;
  if (slide_dir.empty()) {
    slide_dir = work / "synth";
    SyntheticSpec spec = config.synthetic;
    spec.seed = config.seed;
    spec.patch_size = config.patch_size;
    runner.stage("synth",
                 stamp_of({"seed", "patch_size", "synth.slides_per_class",
                           "synth.grid", "synth.tissue_cells", "synth.margin",
                           "synth.noise"}),
                 {slide_dir / kSlideIndexName, slide_dir / "truth.csv"}, [&] {
                   write_synthetic(generate_synthetic(spec), slide_dir);
                 });
  }

  const fs::path patch_dir = work / "patches";
  const fs::path manifest = work / "manifest.csv";
  runner.stage("patch",
               stamp_of({"slide_dir", "seed", "patch_size", "test_fraction"}),
               {patch_dir, manifest}, [&] {
                 run_patch_stage(slide_dir, config.patch_size, patch_dir, manifest,
                                 config.test_fraction, config.seed);
               });

  const fs::path cluster_summary = work / "cluster_summary.txt";
  runner.stage("cluster",
               stamp_of({"seed", "autoencoder.epochs", "autoencoder.batch_size",
                         "autoencoder.learning_rate"}),
               {cluster_summary}, [&] {
                 FilterConfig fc;
                 fc.seed = derive_seed(config.seed, "kmeans");
                 fc.autoencoder = config.autoencoder;
                 fc.autoencoder.seed = derive_seed(config.seed, "autoencoder");
                 const auto res = run_cluster_stage(patch_dir, manifest, fc);
                 write_text_atomic(cluster_summary, format_cluster_summary(res.records));
               });

  const fs::path train_sweep = work / "balanced" / "train_sweep";
  const fs::path test_sweep = work / "balanced" / "test_sweep";
  runner.stage("balance",
               stamp_of({"balance.train_percentages", "balance.test_percentages"}),
               {train_sweep, test_sweep}, [&] {
                 const auto records = read_manifest(manifest);
                 std::vector<std::string> useful, useful_test;
                 for (const auto& r : records) {
                   if (r.cluster == Cluster::not_useful) continue;
                   useful.push_back(patch_file_name(r));
                   if (r.split == Split::test) useful_test.push_back(patch_file_name(r));
                 }
                 run_balance_stage(patch_dir, useful, config.train_percentages, train_sweep);
                 run_balance_stage(patch_dir, useful_test, config.test_percentages, test_sweep);
               });

  const fs::path model = work / "model.ckpt";
  const fs::path history = work / "train_history.csv";
  runner.stage("train",
               stamp_of({"seed", "patch_size", "train.learning_rate", "train.beta1",
                         "train.beta2", "train.epsilon", "train.batch_size",
                         "train.epochs", "train.pool_chain"}),
               {model, history}, [&] {
                 TrainConfig tc = config.train;
                 tc.seed = config.seed;
                 tc.patch_size = config.patch_size;
                 const auto records = select_records(read_manifest(manifest), Split::train);
                 run_train_stage(patch_roots(train_sweep), records, tc, model, history);
               });

  const fs::path same_dir = work / "eval" / "same_balance";
  const fs::path shift_dir = work / "eval" / "shifted_balance";
  const fs::path summary = work / "summary.json";
  runner.stage("eval", "eval 1\n",
               {same_dir / "metrics.json", shift_dir / "metrics.json", summary}, [&] {
                 const auto records = select_records(read_manifest(manifest), Split::test);
                 const Evaluation same =
                     run_eval_stage(model, patch_roots(train_sweep), records, same_dir);
                 const Evaluation shifted =
                     run_eval_stage(model, patch_roots(test_sweep), records, shift_dir);
                 nlohmann::json j;
                 j["seed"] = config.seed;
                 j["test_patches"] = records.size();
                 j["same_balance"] = eval_summary(same);
                 j["shifted_balance"] = eval_summary(shifted);
                 j["macro_f1_drop"] = same.metrics.macro.f1 - shifted.metrics.macro.f1;
                 write_text_atomic(summary, j.dump(2) + "\n");
               });

  runner.result.summary_path = summary;
  return runner.result;
}

}  // namespace cdee
