#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "hucd/embedding.hpp"
#include "model_zoo.hpp"

using namespace hucd;
using namespace hucd::testing;

namespace {

std::vector<DatasetItem> grid_dataset(const ModelGraph& g, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DatasetItem> items;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "img%03d", i);
    auto ms = synthetic_segmenter(g.input.h, g.input.w, grid_spec(3, 3), 0, id);
    items.push_back({id, i % 2, random_image(g, rng), select_granular(ms)});
  }
  return items;
}

bool tables_identical(const SegmentTable& a, const SegmentTable& b) {
  if (a.dim != b.dim || a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto &x = a.rows[i], &y = b.rows[i];
    if (x.image_id != y.image_id || x.segment_id != y.segment_id || x.area_fraction != y.area_fraction) return false;
    if (std::memcmp(x.phi.data(), y.phi.data(), sizeof(double) * static_cast<std::size_t>(x.phi.size())) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST(EmbedSegments, WholeImageSegmentEqualsForward) {
  const ModelGraph g = zoo_residual(1);
  std::mt19937_64 rng(1);
  const Tensor img = random_image(g, rng);
  MaskSet ms{"w", 16, 16, {make_mask_entry(1, Mask(16, 16, true))}};
  const auto rows = embed_segments(g, img, select_granular(ms));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].phi, forward_image(g, img).phi);
}

TEST(EmbedSegments, ScramblingOtherSegmentLeavesSegmentUnchanged) {
  const ModelGraph g = zoo_pooled(2);
  std::mt19937_64 rng(2);
  const Tensor img = random_image(g, rng);
  // Segment 1 = left 6 columns, segment 2 = right 8 columns; the 2-column gap covers the kernel radius.
  MaskSet ms{"s", 16, 16, {}};
  Mask a(16, 16), b(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 6; ++x) a.set(y, x, true);
    for (int x = 8; x < 16; ++x) b.set(y, x, true);
  }
  ms.masks = {make_mask_entry(1, a), make_mask_entry(2, b)};
  const LabelMap lm = select_granular(ms);
  Tensor scrambled = img;
  std::uniform_real_distribution<double> ud(-9, 9);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 8; x < 16; ++x) scrambled.at(0, c, y, x) = ud(rng);
  const auto before = embed_segments(g, img, lm);
  const auto after = embed_segments(g, scrambled, lm);
  EXPECT_EQ(before[0].phi, after[0].phi);
  EXPECT_NE(before[1].phi, after[1].phi);
}

TEST(EmbedSegments, OnePerSegmentInIdOrder) {
  const ModelGraph g = zoo_minimal(3);
  std::mt19937_64 rng(3);
  const LabelMap lm = select_granular(synthetic_segmenter(12, 12, voronoi_spec(5), 3, "v"));
  const auto rows = embed_segments(g, random_image(g, rng), lm);
  ASSERT_EQ(static_cast<int>(rows.size()), lm.segments);
  for (int s = 0; s < lm.segments; ++s) EXPECT_EQ(rows[static_cast<std::size_t>(s)].segment_id, s + 1);
}

TEST(EmbedDataset, SingleImageSingleSegment) {
  const ModelGraph g = zoo_minimal(4);
  std::mt19937_64 rng(4);
  MaskSet ms{"one", 12, 12, {make_mask_entry(1, Mask(12, 12, true))}};
  const auto res = embed_dataset(g, {{"one", 0, random_image(g, rng), select_granular(ms)}});
  EXPECT_EQ(res.table.size(), 1u);
  EXPECT_EQ(res.table.dim, g.feature_dim());
}

TEST(EmbedDataset, TwentyGridImagesGive180Rows) {
  const ModelGraph g = zoo_pooled(5);
  const auto res = embed_dataset(g, grid_dataset(g, 20, 5));
  EXPECT_EQ(res.table.size(), 180u);
  for (const auto& r : res.table.rows) EXPECT_EQ(r.phi.size(), g.feature_dim());
}

TEST(EmbedDataset, IdenticalAcrossParallelism) {
  const ModelGraph g = zoo_residual(6);
  auto items = grid_dataset(g, 12, 6);
  std::reverse(items.begin(), items.end());
  const auto one = embed_dataset(g, items, {}, 1);
  const auto eight = embed_dataset(g, items, {}, 8);
  EXPECT_TRUE(tables_identical(one.table, eight.table));
  EXPECT_EQ(one.table.rows.front().image_id, "img000");
}

TEST(EmbedDataset, ImageFailuresAreCollectedWithIds) {
  const ModelGraph g = zoo_minimal(7);
  auto items = grid_dataset(g, 4, 7);
  items[1].image = Tensor(1, 3, 10, 10);
  items[3].image = Tensor(1, 2, 12, 12);
  try {
    embed_dataset(g, items);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("img001"), std::string::npos);
    EXPECT_NE(msg.find("img003"), std::string::npos);
    EXPECT_NE(msg.find("2 image(s)"), std::string::npos);
  }
}

TEST(SegmentTableIo, RoundTripAtF32Precision) {
  const ModelGraph g = zoo_minimal(8);
  const auto res = embed_dataset(g, grid_dataset(g, 3, 8));
  const auto dir = std::filesystem::temp_directory_path() / "hucd_embed";
  std::filesystem::create_directories(dir);
  save_segment_table(res.table, dir / "segments.csv", dir / "phi.f32");
  const SegmentTable back = load_segment_table(dir / "segments.csv", dir / "phi.f32");
  ASSERT_EQ(back.size(), res.table.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back.rows[i].image_id, res.table.rows[i].image_id);
    EXPECT_EQ(back.rows[i].class_label, res.table.rows[i].class_label);
    EXPECT_EQ(back.rows[i].area_fraction, res.table.rows[i].area_fraction);
    for (int d = 0; d < back.dim; ++d)
      EXPECT_EQ(back.rows[i].phi(d), static_cast<double>(static_cast<float>(res.table.rows[i].phi(d))));
  }
}

TEST(ImageIo, RawF32WithShapeHeader) {
  std::mt19937_64 rng(9);
  const ModelGraph g = zoo_pooled(9);
  const Tensor img = random_image(g, rng);
  const auto p = std::filesystem::temp_directory_path() / "hucd_embed" / "img.f32";
  std::filesystem::create_directories(p.parent_path());
  io::write_image(p, img);
  const Tensor back = io::read_image(p);
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.data()[i], static_cast<float>(img.data()[i]));
  io::write_file(p, "abc");
  EXPECT_THROW(io::read_image(p), DataError);
}
