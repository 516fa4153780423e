#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hucd/constants.hpp"
#include "hucd/error.hpp"
#include "hucd/model.hpp"
#include "hucd/png.hpp"
#include "hucd/tensor.hpp"

namespace hucd {

struct MaskEntry {
  int id = 0;
  Mask mask;
  double area_fraction = 0.0;  // always popcount / (h·w)
  friend bool operator==(const MaskEntry&, const MaskEntry&) = default;
};

/// Possibly overlapping binary masks over one image.
struct MaskSet {
  std::string image_id;
  int h = 0, w = 0;
  std::vector<MaskEntry> masks;
  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Non-overlapping decomposition: 0 = unassigned, 1..S = segments.
struct LabelMap {
  std::string image_id;
  int h = 0, w = 0;
  std::vector<int> labels;      // row-major
  int segments = 0;
  std::vector<int> source_ids;  // source mask id of segment s at [s - 1]

  Mask segment_mask(int s) const {
    Mask m(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(y, x, labels[static_cast<std::size_t>(y) * w + x] == s);
    return m;
  }
  std::vector<std::size_t> segment_sizes() const {
    std::vector<std::size_t> n(static_cast<std::size_t>(segments) + 1, 0);
    for (int l : labels) ++n[static_cast<std::size_t>(l)];
    return n;
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// ---------------------------------------------------------------------------
// RLE: run lengths over the row-major pixel order, alternating off/on, starting with off.
// ---------------------------------------------------------------------------

inline std::vector<std::int64_t> rle_encode(const Mask& m) {
  std::vector<std::int64_t> runs;
  bool cur = false;
  std::int64_t len = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] != cur) {
      runs.push_back(len);
      cur = !cur;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline Mask rle_decode(const std::vector<std::int64_t>& runs, int h, int w, const std::string& what) {
  const std::int64_t total = static_cast<std::int64_t>(h) * w;
  std::int64_t sum = 0;
  for (auto r : runs) {
    if (r < 0) throw DataError(detail::cat(what, ": negative run length"));
    sum += r;
    if (sum > total) break;
  }
  if (sum != total)
    throw DataError(detail::cat(what, ": RLE covers ", sum, " pixels, expected ", total, " (", h, "x", w, ")"));
  Mask m(h, w);
  std::size_t pos = 0;
  bool on = false;
  for (auto r : runs) {
    if (on)
      for (std::int64_t k = 0; k < r; ++k) m.set(static_cast<int>((pos + k) / w), static_cast<int>((pos + k) % w), true);
    pos += static_cast<std::size_t>(r);
    on = !on;
  }
  return m;
}

inline MaskEntry make_mask_entry(int id, Mask m) {
  const double frac = m.area_fraction();
  return {id, std::move(m), frac};
}

namespace detail {

inline int checked_mask_id(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw DataError(cat(where, ": mask id must be an integer"));
  const auto id = v.get<std::int64_t>();
  if (id < 0 || id > std::numeric_limits<std::int32_t>::max())
    throw DataError(cat(where, ": mask id ", id, " overflows the supported range [0, 2^31)"));
  return static_cast<int>(id);
}

inline MaskSet parse_rle_json(const std::string& text, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(cat(where, ": parse error: ", e.what()));
  }
  if (!j.is_object()) throw DataError(cat(where, ": expected a JSON object"));
  for (const char* key : {"h", "w", "masks"})
    if (!j.contains(key)) throw DataError(cat(where, ": missing field '", key, "'"));
  MaskSet ms;
  if (j.contains("image_id")) ms.image_id = j["image_id"].is_string() ? j["image_id"].get<std::string>() : j["image_id"].dump();
  if (!j["h"].is_number_integer() || !j["w"].is_number_integer() || j["h"].get<int>() < 1 || j["w"].get<int>() < 1)
    throw DataError(cat(where, ": h and w must be positive integers"));
  ms.h = j["h"].get<int>();
  ms.w = j["w"].get<int>();
  if (!j["masks"].is_array()) throw DataError(cat(where, ": 'masks' must be an array"));
  std::vector<int> seen;
  for (std::size_t i = 0; i < j["masks"].size(); ++i) {
    const auto& e = j["masks"][i];
    const std::string at = cat(where, ": masks[", i, "]");
    if (!e.is_object() || !e.contains("id") || !e.contains("rle") || !e["rle"].is_array())
      throw DataError(cat(at, ": expected {id, rle}"));
    const int id = checked_mask_id(e["id"], at);
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) throw DataError(cat(at, ": duplicate mask id ", id));
    seen.push_back(id);
    std::vector<std::int64_t> runs;
    for (const auto& r : e["rle"]) {
      if (!r.is_number_integer()) throw DataError(cat(at, ": run lengths must be integers"));
      runs.push_back(r.get<std::int64_t>());
    }
    ms.masks.push_back(make_mask_entry(id, rle_decode(runs, ms.h, ms.w, cat(at, " (id ", id, ")"))));
  }
  return ms;
}

}  // namespace detail

inline std::string serialize_masks(const MaskSet& ms) {
  nlohmann::json j;
  j["image_id"] = ms.image_id;
  j["h"] = ms.h;
  j["w"] = ms.w;
  j["masks"] = nlohmann::json::array();
  for (const auto& m : ms.masks) j["masks"].push_back({{"id", m.id}, {"rle", rle_encode(m.mask)}});
  return j.dump() + "\n";
}

inline void save_masks(const MaskSet& ms, const std::filesystem::path& path) {
  detail::write_file(path, serialize_masks(ms));
}

/// A 16-bit label-map image as a MaskSet: one mask per distinct nonzero value.
inline MaskSet masks_from_gray16(const png::Gray16& img, const std::string& image_id) {
  MaskSet ms{image_id, img.h, img.w, {}};
  std::map<int, Mask> by_id;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const int v = img.pixels[static_cast<std::size_t>(y) * img.w + x];
      if (v == 0) continue;
      auto it = by_id.try_emplace(v, img.h, img.w).first;
      it->second.set(y, x, true);
    }
  for (auto& [id, m] : by_id) ms.masks.push_back(make_mask_entry(id, std::move(m)));
  return ms;
}

/// RLE-JSON (.json) or 16-bit grayscale label map (.png). Areas are recomputed from pixels.
inline MaskSet load_masks(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(detail::cat("mask file '", path.string(), "' does not exist"));
  if (path.extension() == ".png") return masks_from_gray16(png::read_gray16(path), path.stem().string());
  MaskSet ms = detail::parse_rle_json(detail::read_file(path), path.string());
  if (ms.image_id.empty()) ms.image_id = path.stem().string();
  return ms;
}

inline void save_label_map_png(const LabelMap& lm, const std::filesystem::path& path) {
  if (lm.segments > 65535) throw DataError(detail::cat("label map '", lm.image_id, "': too many segments for 16 bits"));
  png::Gray16 img{lm.h, lm.w, {}};
  img.pixels.reserve(lm.labels.size());
  for (int l : lm.labels) img.pixels.push_back(static_cast<std::uint16_t>(l));
  png::write_gray16(path, img);
}

// ---------------------------------------------------------------------------
// Granular selection
// ---------------------------------------------------------------------------

/// Keeps masks covering at least `min_area_frac` of the image and assigns every
/// covered pixel to its smallest covering mask (ties: lower mask id). A kept mask
/// whose assigned share then falls below the threshold is dropped, smallest share
/// first, and the assignment is redone until every segment meets it.
inline LabelMap select_granular(const MaskSet& ms, double min_area_frac = defaults::kMinAreaFrac) {
  if (ms.h < 1 || ms.w < 1) throw ArgumentError("select_granular: invalid image size");
  const std::size_t npix = static_cast<std::size_t>(ms.h) * ms.w;
  std::vector<std::size_t> order;  // candidate masks by (area, id)
  for (std::size_t i = 0; i < ms.masks.size(); ++i) {
    const auto& m = ms.masks[i];
    if (m.mask.h() != ms.h || m.mask.w() != ms.w)
      throw ArgumentError(detail::cat("select_granular: mask ", m.id, " has inconsistent size"));
    if (static_cast<double>(m.mask.count()) / npix >= min_area_frac) order.push_back(i);
  }
  std::vector<std::size_t> area(ms.masks.size());
  for (auto i : order) area[i] = ms.masks[i].mask.count();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return area[a] != area[b] ? area[a] < area[b] : ms.masks[a].id < ms.masks[b].id;
  });
  std::vector<bool> active(ms.masks.size(), false);
  for (auto i : order) active[i] = true;

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(npix, kNone);
  for (;;) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::vector<std::size_t> share(ms.masks.size(), 0);
    for (auto i : order) {
      if (!active[i]) continue;
      const auto& bits = ms.masks[i].mask.bits();
      for (std::size_t p = 0; p < npix; ++p)
        if (bits[p] && owner[p] == kNone) owner[p] = i, ++share[i];
    }
    std::size_t drop = kNone;
    for (auto i : order) {
      if (!active[i] || static_cast<double>(share[i]) / npix >= min_area_frac) continue;
      if (drop == kNone || share[i] < share[drop] || (share[i] == share[drop] && ms.masks[i].id < ms.masks[drop].id))
        drop = i;
    }
    if (drop == kNone) break;
    active[drop] = false;
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ms.masks.size(); ++i)
    if (active[i]) kept.push_back(i);
  std::stable_sort(kept.begin(), kept.end(),
                   [&](std::size_t a, std::size_t b) { return ms.masks[a].id < ms.masks[b].id; });
  std::vector<int> label_of(ms.masks.size(), 0);
  LabelMap lm{ms.image_id, ms.h, ms.w, std::vector<int>(npix, 0), static_cast<int>(kept.size()), {}};
  for (std::size_t s = 0; s < kept.size(); ++s) {
    label_of[kept[s]] = static_cast<int>(s) + 1;
    lm.source_ids.push_back(ms.masks[kept[s]].id);
  }
  for (std::size_t p = 0; p < npix; ++p)
    if (owner[p] != kNone) lm.labels[p] = label_of[owner[p]];
  return lm;
}

// ---------------------------------------------------------------------------
// Synthetic segmentations
// ---------------------------------------------------------------------------

struct SegmenterSpec {
  enum class Kind { Grid, Voronoi } kind = Kind::Grid;
  int rows = 3, cols = 3;  // grid
  int sites = 9;           // voronoi
};

inline SegmenterSpec grid_spec(int rows, int cols) { return {SegmenterSpec::Kind::Grid, rows, cols, 0}; }
inline SegmenterSpec voronoi_spec(int sites) { return {SegmenterSpec::Kind::Voronoi, 0, 0, sites}; }

/// Non-overlapping tiling masks with ids starting at 1. Voronoi sites are drawn
/// from a seeded engine; pixels go to the nearest site (lower index on ties) and
/// sites that win no pixel are omitted.
inline MaskSet synthetic_segmenter(int h, int w, const SegmenterSpec& spec, std::uint64_t seed,
                                   const std::string& image_id = {}) {
  if (h < 1 || w < 1) throw ArgumentError("synthetic_segmenter: image size must be positive");
  MaskSet ms{image_id, h, w, {}};
  if (spec.kind == SegmenterSpec::Kind::Grid) {
    if (spec.rows < 1 || spec.cols < 1 || spec.rows > h || spec.cols > w)
      throw ArgumentError("synthetic_segmenter: grid must have 1..h rows and 1..w columns");
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < spec.cols; ++c) {
        Mask m(h, w);
        for (int y = r * h / spec.rows; y < (r + 1) * h / spec.rows; ++y)
          for (int x = c * w / spec.cols; x < (c + 1) * w / spec.cols; ++x) m.set(y, x, true);
        ms.masks.push_back(make_mask_entry(r * spec.cols + c + 1, std::move(m)));
      }
    return ms;
  }
  if (spec.sites < 1) throw ArgumentError("synthetic_segmenter: voronoi needs at least one site");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> uy(0, h - 1), ux(0, w - 1);
  std::vector<std::pair<int, int>> sites(static_cast<std::size_t>(spec.sites));
  for (auto& s : sites) s = {uy(rng), ux(rng)};
  std::vector<Mask> cells(sites.size(), Mask(h, w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t best = 0;
      long best_d = std::numeric_limits<long>::max();
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const long dy = y - sites[i].first, dx = x - sites[i].second;
        const long d = dy * dy + dx * dx;
        if (d < best_d) best_d = d, best = i;
      }
      cells[best].set(y, x, true);
    }
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!cells[i].empty()) ms.masks.push_back(make_mask_entry(static_cast<int>(i) + 1, std::move(cells[i])));
  return ms;
}

/// Mean segment count over the label maps.
inline double segments_per_image_stats(const std::vector<LabelMap>& maps) {
  if (maps.empty()) throw ArgumentError("segments_per_image_stats: empty list");
  double sum = 0.0;
  for (const auto& m : maps) sum += m.segments;
  return sum / static_cast<double>(maps.size());
}

}  // namespace hucd
