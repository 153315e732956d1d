#include <gtest/gtest.h>

#include <map>
#include <set>

#include "cdee/patching.hpp"
#include "cdee/rng.hpp"

using namespace cdee;

namespace {

RgbImage gradient_slide(std::size_t w, std::size_t h) {
  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(x * 7 + y);
      img.at(x, y, 1) = static_cast<std::uint8_t>(y * 13 + x / 3);
      img.at(x, y, 2) = static_cast<std::uint8_t>((x ^ y) & 0xff);
    }
  return img;
}

std::vector<PatchRecord> records_for(int slides_per_class, int patches_per_slide) {
  std::vector<PatchRecord> out;
  for (int k = 0; k < kNumClasses; ++k)
    for (int s = 0; s < slides_per_class; ++s)
      for (int p = 0; p < patches_per_slide; ++p) {
        PatchRecord r;
        r.slide_id = "c" + std::to_string(k) + "s" + std::to_string(s);
        r.class_label = static_cast<ClassLabel>(k);
        r.grid_x = static_cast<std::size_t>(p);
        r.patch_id = make_patch_id(r.slide_id, r.grid_x, 0);
        out.push_back(r);
      }
  return out;
}

}  // namespace

TEST(Patching, CountsAndGridPositions) {
  const auto patches = extract_patches(RgbImage(2000, 3000), 1000, "s", ClassLabel::CD);
  ASSERT_EQ(patches.size(), 6u);
  std::size_t i = 0;
  for (std::size_t gy = 0; gy < 3; ++gy)
    for (std::size_t gx = 0; gx < 2; ++gx, ++i) {
      EXPECT_EQ(patches[i].first.grid_x, gx);
      EXPECT_EQ(patches[i].first.grid_y, gy);
      EXPECT_EQ(patches[i].first.class_label, ClassLabel::CD);
      EXPECT_EQ(patches[i].first.slide_id, "s");
    }
}

TEST(Patching, SlideSmallerThanPatchFails) {
  try {
    extract_patches(RgbImage(999, 999), 1000, "s", ClassLabel::EE);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("999"), std::string::npos);
  }
  EXPECT_THROW(extract_patches(RgbImage(10, 10), 0, "s", ClassLabel::EE),
               std::invalid_argument);
}

TEST(Patching, PixelsEqualSlideCrop) {
  const RgbImage slide = gradient_slide(4000, 4000);
  const auto patches = extract_patches(slide, 1000, "big", ClassLabel::Normal);
  ASSERT_EQ(patches.size(), 16u);
  for (const auto& [rec, img] : patches) {
    ASSERT_EQ(img.width(), 1000u);
    for (std::size_t y = 0; y < 1000; y += 37)
      for (std::size_t x = 0; x < 1000; x += 41)
        for (int c = 0; c < 3; ++c)
          ASSERT_EQ(img.at(x, y, c),
                    slide.at(rec.grid_x * 1000 + x, rec.grid_y * 1000 + y, c));
    EXPECT_EQ(img, crop(slide, rec.grid_x * 1000, rec.grid_y * 1000, 1000, 1000));
  }
}

TEST(Patching, ClosedFormCountWithBorders) {
  for (auto [w, h, ps] : {std::tuple{130, 70, 32}, {64, 64, 64}, {100, 33, 10}}) {
    const auto p = extract_patches(gradient_slide(w, h), ps, "s", ClassLabel::EE);
    EXPECT_EQ(p.size(), std::size_t(w / ps) * std::size_t(h / ps));
    std::set<std::string> ids;
    for (const auto& [r, img] : p) ids.insert(r.patch_id);
    EXPECT_EQ(ids.size(), p.size());
  }
}

TEST(Split, TwoTestSlidesPerClassAtTwentyPercent) {
  const auto out = assign_split(records_for(10, 3), 0.2, 9);
  std::map<int, std::set<std::string>> test_slides;
  for (const auto& r : out)
    if (r.split == Split::test) test_slides[int(r.class_label)].insert(r.slide_id);
  for (int k = 0; k < kNumClasses; ++k) EXPECT_EQ(test_slides[k].size(), 2u);
}

TEST(Split, SlidesNeverStraddleAndSeedsRepeat) {
  const auto a = assign_split(records_for(6, 4), 0.25, 3);
  const auto b = assign_split(records_for(6, 4), 0.25, 3);
  EXPECT_EQ(a, b);
  std::map<std::string, std::set<Split>> per_slide;
  for (const auto& r : a) per_slide[r.slide_id].insert(r.split);
  for (const auto& [slide, splits] : per_slide) EXPECT_EQ(splits.size(), 1u) << slide;

  bool differs = false;
  for (std::uint64_t seed = 4; seed < 12 && !differs; ++seed)
    differs = assign_split(records_for(6, 4), 0.25, seed) != a;
  EXPECT_TRUE(differs);
}

TEST(Split, RejectsSingleSlideClassAndBadFraction) {
  EXPECT_THROW(assign_split(records_for(1, 2), 0.5, 0), std::invalid_argument);
  EXPECT_THROW(assign_split(records_for(4, 2), 0.0, 0), std::invalid_argument);
  EXPECT_THROW(assign_split(records_for(4, 2), 1.0, 0), std::invalid_argument);
}

TEST(Labels, RoundTripNames) {
  for (int k = 0; k < kNumClasses; ++k) {
    const auto c = static_cast<ClassLabel>(k);
    EXPECT_EQ(parse_class_label(to_string(c)), c);
  }
  EXPECT_EQ(parse_cluster(to_string(Cluster::not_useful)), Cluster::not_useful);
  EXPECT_EQ(parse_split(to_string(Split::test)), Split::test);
  EXPECT_THROW(parse_class_label("XX"), std::invalid_argument);
}
