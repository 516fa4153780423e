#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "hucd/error.hpp"
#include "hucd/io.hpp"
#include "hucd/parallel.hpp"
#include "hucd/runtime.hpp"
#include "hucd/segments.hpp"

namespace hucd {

struct SegmentEmbedding {
  std::string image_id;
  int segment_id = 0;
  Vector phi;
  double area_fraction = 0.0;
  int class_label = -1;  // -1 = unknown
};

struct SegmentTable {
  int dim = 0;
  std::vector<SegmentEmbedding> rows;

  std::size_t size() const { return rows.size(); }
  Matrix phi_matrix() const {
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].phi.transpose();
    return m;
  }
};

/// One embedding per segment 1..S of `lm`, via masked_forward on that segment's mask.
inline std::vector<SegmentEmbedding> embed_segments(const ModelGraph& g, const Tensor& image, const LabelMap& lm,
                                                    const MaskingOptions& opt = {}, int class_label = -1) {
  if (lm.h != image.h() || lm.w != image.w())
    throw ArgumentError(detail::cat("embed_segments: label map ", lm.h, "x", lm.w, " does not match image ",
                                    image.h(), "x", image.w()));
  std::vector<SegmentEmbedding> out;
  out.reserve(static_cast<std::size_t>(lm.segments));
  for (int s = 1; s <= lm.segments; ++s) {
    const Mask m = lm.segment_mask(s);
    auto r = masked_forward(g, image, m, opt);
    out.push_back({lm.image_id, s, std::move(r.phi), m.area_fraction(), class_label});
  }
  return out;
}

struct DatasetItem {
  std::string image_id;
  int class_label = -1;
  Tensor image;
  LabelMap map;
};

struct EmbedResult {
  SegmentTable table;
  std::vector<int> segment_counts;    // per item, in the table's image order
  std::vector<std::string> warnings;  // dropped segments
};

/// Embeds every segment of every item. Rows are ordered by (image_id, segment_id)
/// whatever the parallelism. Segments whose forward pass fails or is non-finite
/// are dropped with a warning; image-level failures are collected and raised together.
inline EmbedResult embed_dataset(const ModelGraph& g, const std::vector<DatasetItem>& items,
                                 const MaskingOptions& opt = {}, int parallelism = 1) {
  if (items.empty()) throw ArgumentError("embed_dataset: empty dataset");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].image_id < items[b].image_id; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (items[order[i]].image_id == items[order[i - 1]].image_id)
      throw DataError(detail::cat("embed_dataset: duplicate image id '", items[order[i]].image_id, "'"));

  struct Slot {
    std::vector<SegmentEmbedding> rows;
    std::vector<std::string> warnings;
    std::string error;
  };
  std::vector<Slot> slots(items.size());
  parallel_for(items.size(), parallelism, [&](std::size_t k) {
    const auto& it = items[order[k]];
    Slot& slot = slots[k];
    try {
      detail::check_image(g, it.image, "embed_dataset");
      if (it.map.h != it.image.h() || it.map.w != it.image.w())
        throw ArgumentError(detail::cat("label map ", it.map.h, "x", it.map.w, " does not match image"));
    } catch (const Error& e) {
      slot.error = detail::cat(it.image_id, ": ", e.what());
      return;
    }
    for (int s = 1; s <= it.map.segments; ++s) {
      const Mask m = it.map.segment_mask(s);
      try {
        auto r = masked_forward(g, it.image, m, opt);
        if (!r.phi.allFinite()) throw NumericError("non-finite embedding");
        slot.rows.push_back({it.image_id, s, std::move(r.phi), m.area_fraction(), it.class_label});
      } catch (const Error& e) {
        slot.warnings.push_back(detail::cat("dropped segment ", it.image_id, "/", s, ": ", e.what()));
      }
    }
  });

  std::vector<std::string> errors;
  for (const auto& s : slots)
    if (!s.error.empty()) errors.push_back(s.error);
  if (!errors.empty()) {
    std::string msg = detail::cat("embed_dataset: ", errors.size(), " image(s) failed");
    for (const auto& e : errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  EmbedResult out;
  out.table.dim = g.feature_dim();
  for (auto& s : slots) {
    out.segment_counts.push_back(static_cast<int>(s.rows.size()));
    for (auto& r : s.rows) out.table.rows.push_back(std::move(r));
    for (auto& w : s.warnings) out.warnings.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: CSV (ids, area, label) + f32 sidecar of φ rows
// ---------------------------------------------------------------------------

inline void save_segment_table(const SegmentTable& t, const std::filesystem::path& csv_path,
                               const std::filesystem::path& phi_path) {
  io::CsvWriter csv({"row", "image_id", "segment_id", "area_fraction", "class_label"});
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    csv.row({std::to_string(i), r.image_id, std::to_string(r.segment_id), io::fmt(r.area_fraction),
             std::to_string(r.class_label)});
  }
  csv.save(csv_path);
  Matrix phi = t.rows.empty() ? Matrix(0, t.dim) : t.phi_matrix();
  io::write_matrix(phi_path, phi);
}

inline SegmentTable load_segment_table(const std::filesystem::path& csv_path, const std::filesystem::path& phi_path) {
  const auto csv = io::read_csv(csv_path);
  const Matrix phi = io::read_matrix(phi_path);
  if (static_cast<std::size_t>(phi.rows()) != csv.rows.size())
    throw DataError(detail::cat("segment table: ", csv.rows.size(), " CSV rows but ", phi.rows(), " embeddings"));
  const auto ci = csv.column("image_id"), cs = csv.column("segment_id"), ca = csv.column("area_fraction"),
             cl = csv.column("class_label");
  SegmentTable t;
  t.dim = static_cast<int>(phi.cols());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    try {
      t.rows.push_back({r[ci], std::stoi(r[cs]), phi.row(static_cast<Eigen::Index>(i)).transpose(), std::stod(r[ca]),
                        std::stoi(r[cl])});
    } catch (const std::logic_error&) {
      throw DataError(detail::cat("'", csv_path.string(), "' row ", i, ": malformed number"));
    }
  }
  return t;
}

}  // namespace hucd
