#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cdee/checkpoint.hpp"
#include "cdee/classifier.hpp"
#include "cdee/pipeline.hpp"
#include "cdee/config.hpp"
#include "cdee/io.hpp"
#include "cdee/manifest.hpp"
#include "cdee/synthetic.hpp"
#include "common/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace cdee;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdee_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return {s.begin(), s.end()};
}

std::string error_of(const std::vector<std::uint8_t>& b) {
  try {
    decode_ppm(b);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

LayerStack<float> random_model(Rng& rng) {
  const std::size_t c1 = 1 + rng.below(4), c2 = 1 + rng.below(4);
  const std::size_t side = 2 * (1 + rng.below(3));
  LayerStack<float> m({side, side, c1});
  m.add(make_conv2d<float>(c1, c2, rng.below(2) ? 3 : 1));
  m.add(make_activation<float>(LayerKind::relu));
  m.add(make_maxpool<float>(2));
  m.add(make_flatten<float>());
  const std::size_t flat = (side / 2) * (side / 2) * c2;
  const std::size_t hidden = 1 + rng.below(6);
  m.add(make_dense<float>(flat, hidden));
  m.add(make_activation<float>(LayerKind::sigmoid));
  m.add(make_dense<float>(hidden, 3));
  m.add(make_activation<float>(LayerKind::softmax));
  for (auto& p : m.params())
    for (auto& v : p.value->storage()) v = static_cast<float>(rng.normal());
  return m;
}

void expect_same_params(LayerStack<float>& a, LayerStack<float>& b) {
  auto pa = a.params(), pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i].value->shape(), pb[i].value->shape());
    for (std::size_t j = 0; j < pa[i].value->size(); ++j)
      ASSERT_EQ(std::bit_cast<std::uint32_t>((*pa[i].value)[j]),
                std::bit_cast<std::uint32_t>((*pb[i].value)[j]));
  }
}

}  // namespace

TEST(Ppm, RoundTrips) {
  RgbImage red(1, 1);
  red.at(0, 0, 0) = 255;
  EXPECT_EQ(decode_ppm(encode_ppm(red)), red);
  const RgbImage white(5, 3, 255);
  EXPECT_EQ(decode_ppm(encode_ppm(white)), white);
  Rng rng(3);
  RgbImage noise(16, 16);
  for (auto& b : noise.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  EXPECT_EQ(decode_ppm(encode_ppm(noise)), noise);

  const fs::path dir = scratch("ppm");
  write_image(dir / "n.ppm", noise);
  EXPECT_EQ(read_image(dir / "n.ppm"), noise);
  EXPECT_FALSE(fs::exists(dir / "n.ppm.tmp"));
}

TEST(Ppm, AcceptsCommentsInHeader) {
  auto b = bytes_of("P6 # made by hand\n2 1\n# max\n255\n");
  for (int i = 0; i < 6; ++i) b.push_back(static_cast<std::uint8_t>(i));
  const RgbImage img = decode_ppm(b);
  EXPECT_EQ(img.width(), 2u);
  EXPECT_EQ(img.at(1, 0, 2), 5);
}

TEST(Ppm, ErrorsCarryOffsets) {
  EXPECT_NE(error_of(bytes_of("P3\n1 1\n255\n")).find("offset 0"), std::string::npos);
  EXPECT_NE(error_of(bytes_of("P6\n1 1\n65535\nxx")).find("offset 7"), std::string::npos);
  const std::string trunc = error_of(bytes_of("P6\n2 2\n255\nabc"));
  EXPECT_NE(trunc.find("truncated"), std::string::npos);
  EXPECT_NE(trunc.find("offset 14"), std::string::npos) << trunc;
  EXPECT_NE(error_of(bytes_of("P6\nx")).find("width"), std::string::npos);
  EXPECT_NE(error_of(bytes_of("P6\n0 4\n255\n")).find("zero"), std::string::npos);
}

TEST(Manifest, RoundTripPreservesRowsAndOrder) {
  std::vector<PatchRecord> recs;
  for (std::size_t i = 0; i < 7; ++i) {
    PatchRecord r;
    r.slide_id = "slide" + std::to_string(i % 3);
    r.grid_x = i;
    r.grid_y = 6 - i;
    r.patch_id = make_patch_id(r.slide_id, r.grid_x, r.grid_y);
    r.class_label = static_cast<ClassLabel>(i % 3);
    r.cluster = static_cast<Cluster>(i % 3);
    r.split = i % 2 ? Split::test : Split::train;
    recs.push_back(r);
  }
  std::reverse(recs.begin(), recs.end());
  const std::string text = format_manifest(recs);
  EXPECT_EQ(text.substr(0, text.find('\n')), kManifestHeader);
  EXPECT_EQ(parse_manifest(text), recs);

  const fs::path dir = scratch("manifest");
  write_manifest(dir / "m.csv", recs);
  EXPECT_EQ(read_manifest(dir / "m.csv"), recs);
}

TEST(Manifest, RejectsBadInput) {
  EXPECT_THROW(parse_manifest("id,slide\n"), std::invalid_argument);
  const std::string h = std::string(kManifestHeader) + "\n";
  EXPECT_THROW(parse_manifest(h + "a,s,EE,0,0,useful\n"), std::invalid_argument);
  EXPECT_THROW(parse_manifest(h + "a,s,EE,0,0,useful,train\na,s,EE,1,0,useful,train\n"),
               std::invalid_argument);
  EXPECT_THROW(parse_manifest(h + "a,s,EE,-1,0,useful,train\n"), std::invalid_argument);
  EXPECT_THROW(parse_manifest(h + "a,s,XX,0,0,useful,train\n"), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExactOverRandomModels) {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    LayerStack<float> m = random_model(rng);
    std::vector<AdamState<float>> states;
    const bool with_adam = trial % 2 == 0;
    if (with_adam) {
      states = make_adam_states(m, AdamConfig{0.003, 0.8, 0.99, 1e-7});
      for (auto& s : states) {
        s.t = rng.below(1000);
        for (auto& v : s.m.storage()) v = float(rng.normal());
        for (auto& v : s.v.storage()) v = float(rng.uniform());
      }
    }
    const auto bytes = encode_checkpoint(m, with_adam ? &states : nullptr);
    Checkpoint back = decode_checkpoint(bytes);
    expect_same_params(m, back.model);
    EXPECT_EQ(back.model.input_shape(), m.input_shape());
    ASSERT_EQ(back.model.layer_count(), m.layer_count());
    for (std::size_t i = 0; i < m.layer_count(); ++i) {
      EXPECT_EQ(back.model.layer(i).kind(), m.layer(i).kind());
      EXPECT_EQ(back.model.layer(i).config(), m.layer(i).config());
    }
    ASSERT_EQ(back.optimizer.has_value(), with_adam);
    if (with_adam) {
      for (std::size_t i = 0; i < states.size(); ++i) {
        EXPECT_EQ(back.optimizer->at(i).t, states[i].t);
        EXPECT_EQ(back.optimizer->at(i).m, states[i].m);
        EXPECT_EQ(back.optimizer->at(i).v, states[i].v);
        EXPECT_EQ(back.optimizer->at(i).config.beta1, 0.8);
      }
    }
    EXPECT_EQ(encode_checkpoint(back.model, back.optimizer ? &*back.optimizer : nullptr),
              bytes);
  }
}

TEST(Checkpoint, LayoutHeaderAndCrc) {
  Rng rng(1);
  const auto bytes = encode_checkpoint(random_model(rng));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CDEE");
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), kCheckpointVersion);
  const std::uint32_t stored = bytes[bytes.size() - 4] | (bytes[bytes.size() - 3] << 8) |
                               (bytes[bytes.size() - 2] << 16) |
                               (std::uint32_t(bytes[bytes.size() - 1]) << 24);
  EXPECT_EQ(stored, crc32_of(std::span(bytes).first(bytes.size() - 4)));
  // Reference CRC-32 value.
  const std::string check = "123456789";
  EXPECT_EQ(crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), 9)),
            0xCBF43926u);
}

TEST(Checkpoint, DetectsCorruptionAndTruncation) {
  Rng rng(2);
  auto bytes = encode_checkpoint(random_model(rng));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(flipped), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 9)), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
}

TEST(Checkpoint, FileRoundTripOfClassifier) {
  LayerStack<float> m = build_model<float>(64, default_pool_chain(64), 5);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "m.ckpt", m);
  Checkpoint back = load_checkpoint(dir / "m.ckpt");
  expect_same_params(m, back.model);
  EXPECT_EQ(back.model.summary().size(), m.summary().size());
  EXPECT_FALSE(back.optimizer.has_value());
}

TEST(Config, ParsesFlatKeyValues) {
  const auto c = KeyValueConfig::parse(
      "# comment\n\nseed = 12\n  name=abc  \nlist = 0.5, 1,1.5\nflag = true\n");
  EXPECT_EQ(c.get_u64("seed", 0), 12u);
  EXPECT_EQ(c.get_string("name", ""), "abc");
  EXPECT_EQ(c.get_doubles("list", {}), (std::vector<double>{0.5, 1.0, 1.5}));
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_int("missing", -3), -3);
  EXPECT_NO_THROW(c.reject_unknown());
}

TEST(Config, RejectsMalformedAndUnknown) {
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), std::invalid_argument);
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), std::invalid_argument);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), std::invalid_argument);
  const auto c = KeyValueConfig::parse("epochs = ten\ntypo = 1\n");
  EXPECT_THROW(c.get_u64("epochs", 1), std::invalid_argument);
  EXPECT_THROW(c.reject_unknown(), std::invalid_argument);
}

TEST(Synthetic, SameSeedSameBytes) {
  SyntheticSpec spec;
  spec.slides_per_class = 2;
  spec.seed = 9;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  ASSERT_EQ(a.slides.size(), 6u);
  for (std::size_t i = 0; i < a.slides.size(); ++i) {
    EXPECT_EQ(encode_ppm(a.slides[i].image), encode_ppm(b.slides[i].image));
  }
  spec.seed = 10;
  EXPECT_NE(generate_synthetic(spec).slides[0].image, a.slides[0].image);
}

TEST(Synthetic, SlidesMixTissueAndBackground) {
  SyntheticSpec spec;
  spec.slides_per_class = 2;
  const auto corpus = generate_synthetic(spec);
  EXPECT_EQ(corpus.truth.size(), 6 * spec.grid * spec.grid);
  for (const auto& s : corpus.slides) {
    std::size_t tissue = 0, background = 0;
    for (const auto& t : corpus.truth) {
      if (t.slide_id != s.entry.slide_id) continue;
      t.tissue ? ++tissue : ++background;
      EXPECT_EQ(t.class_label, s.entry.class_label);
      const RgbImage cell = crop(s.image, t.grid_x * spec.patch_size,
                                 t.grid_y * spec.patch_size, spec.patch_size,
                                 spec.patch_size);
      if (!t.tissue) {
        for (int c = 0; c < 3; ++c) {
          double mean = 0, sq = 0;
          const double n = double(cell.pixel_count());
          for (std::size_t i = c; i < cell.bytes().size(); i += 3) mean += cell.bytes()[i];
          mean /= n;
          for (std::size_t i = c; i < cell.bytes().size(); i += 3)
            sq += (cell.bytes()[i] - mean) * (cell.bytes()[i] - mean);
          EXPECT_LT(std::sqrt(sq / n), 2.0);
          EXPECT_GT(mean, 235.0);
        }
      }
    }
    EXPECT_EQ(tissue, spec.tissue_cells);
    EXPECT_EQ(background, spec.grid * spec.grid - spec.tissue_cells);
    EXPECT_EQ(s.image.width(), spec.grid * spec.patch_size + spec.margin);
  }
}

// Mean gradient energy over 30 patches per class, fixed seed. The checker
// has the shortest period, the stripes the next, the blobs are smooth.
TEST(Synthetic, GradientEnergyOrderedByRecipe) {
  Rng rng(2468);
  std::array<double, 3> energy{};
  for (int k = 0; k < kNumClasses; ++k) {
    for (int i = 0; i < 30; ++i)
      energy[k] += gradient_energy(synth_tissue_patch(static_cast<ClassLabel>(k), 64, rng));
    energy[k] /= 30;
  }
  const int ee = 0, cd = 1, normal = 2;
  EXPECT_GT(energy[ee], 1.5 * energy[cd]);
  EXPECT_GT(energy[cd], 1.5 * energy[normal]) << energy[cd] << " " << energy[normal];
  Rng bg(1);
  EXPECT_LT(gradient_energy(synth_background_patch(64, bg)), energy[normal]);
}

TEST(Synthetic, WritesCorpusFiles) {
  SyntheticSpec spec;
  spec.slides_per_class = 2;
  const fs::path dir = scratch("synth");
  write_synthetic(generate_synthetic(spec), dir);
  const auto slides = read_slide_index(dir / kSlideIndexName);
  ASSERT_EQ(slides.size(), 6u);
  for (const auto& s : slides) EXPECT_TRUE(fs::exists(dir / "slides" / s.file));
  EXPECT_EQ(read_truth(dir / "truth.csv").size(), 6 * spec.grid * spec.grid);
}

namespace {

PipelineConfig tiny_pipeline(const fs::path& work) {
  PipelineConfig c;
  c.work_dir = work;
  c.seed = 5;
  c.synthetic.slides_per_class = 2;
  c.synthetic.grid = 2;
  c.synthetic.tissue_cells = 2;
  c.test_fraction = 0.5;
  c.autoencoder.epochs = 1;
  c.train.epochs = 1;
  c.train_percentages = {0.001, 1.0};
  c.test_percentages = {0.5};
  return c;
}

}  // namespace

TEST(Pipeline, StagesAreIdempotentAndResumable) {
  const fs::path work = scratch("pipeline");
  const PipelineConfig cfg = tiny_pipeline(work);
  const auto first = run_pipeline(cfg);
  EXPECT_EQ(first.ran, (std::vector<std::string>{"synth", "patch", "cluster",
                                                 "balance", "train", "eval"}));
  EXPECT_TRUE(fs::exists(work / "summary.json"));
  EXPECT_TRUE(fs::exists(work / "eval" / "shifted_balance" / "report.txt"));
  EXPECT_TRUE(fs::exists(work / "eval" / "same_balance" / "roc.csv"));
  EXPECT_TRUE(fs::exists(work / "balanced" / "train_sweep" / "pct_0.001"));

  for (const auto& e : fs::recursive_directory_iterator(work))
    EXPECT_NE(e.path().extension(), ".tmp") << e.path();

  const auto model_bytes = read_file(work / "model.ckpt");
  const auto second = run_pipeline(cfg);
  EXPECT_TRUE(second.ran.empty());
  EXPECT_EQ(second.skipped.size(), 6u);

  fs::remove(work / "model.ckpt");
  const auto third = run_pipeline(cfg);
  EXPECT_EQ(third.ran, (std::vector<std::string>{"train", "eval"}));
  EXPECT_EQ(read_file(work / "model.ckpt"), model_bytes);

  PipelineConfig changed = cfg;
  changed.test_percentages = {0.5, 2.0};
  const auto fourth = run_pipeline(changed);
  EXPECT_EQ(fourth.ran, (std::vector<std::string>{"balance", "train", "eval"}));

  const auto manifest = read_manifest(work / "manifest.csv");
  for (const auto& r : manifest) {
    EXPECT_NE(r.cluster, Cluster::unassigned);
    EXPECT_TRUE(fs::exists(work / "patches" / patch_file_name(r)));
  }
}

TEST(Pipeline, FailureNamesTheStage) {
  const fs::path work = scratch("pipeline_fail");
  PipelineConfig cfg = tiny_pipeline(work);
  cfg.slide_dir = work / "does_not_exist";
  try {
    run_pipeline(cfg);
    FAIL() << "expected failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "patch");
  }
}

TEST(Pipeline, ConfigFromKeyValues) {
  const auto kv = KeyValueConfig::parse(
      "work_dir = /tmp/x\nseed = 4\ntrain.epochs = 3\nbalance.test_percentages = 0.5,2\n");
  const PipelineConfig c = PipelineConfig::from(kv);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.test_percentages, (std::vector<double>{0.5, 2.0}));
  EXPECT_THROW(PipelineConfig::from(KeyValueConfig::parse("work_dir = a\nbogus = 1\n")),
               std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from(KeyValueConfig::parse("seed = 1\n")),
               std::invalid_argument);
}
