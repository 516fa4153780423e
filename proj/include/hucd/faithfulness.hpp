#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hucd/concepts.hpp"
#include "hucd/embedding.hpp"
#include "hucd/error.hpp"
#include "hucd/io.hpp"
#include "hucd/parallel.hpp"
#include "hucd/runtime.hpp"

namespace hucd {

struct PlanStep {
  int concept_id = 0;
  double importance = 0.0;  // mean local relevance of the member segments
  int segments = 0;
  Mask mask;                // union of member segment pixels
};

struct FlipPlan {
  std::string image_id;
  int class_label = -1;
  int h = 0, w = 0;
  std::vector<PlanStep> steps;  // importance descending, concept id ascending on ties
  bool skipped = false;         // no segment was assigned to a concept
};

/// Assigns and scores precomputed segment embeddings of one image; residual
/// segments are left out of the plan.
inline FlipPlan build_flip_plan(const std::vector<SegmentEmbedding>& rows, const LabelMap& lm, int class_label,
                                const ConceptSpace& sp, const ClassHead& head) {
  FlipPlan plan{lm.image_id, class_label, lm.h, lm.w, {}, false};
  std::map<int, PlanStep> by_concept;  // keyed by concept index in sp
  for (const auto& r : rows) {
    if (r.segment_id < 1 || r.segment_id > lm.segments)
      throw DataError(detail::cat("build_flip_plan: ", lm.image_id, " has no segment ", r.segment_id));
    if (!(r.phi.norm() > 0.0)) continue;
    const auto dec = decompose(r.phi, sp);
    const int l = assign_segment(activation_scores(dec, r.phi));
    if (l == kResidual) continue;
    const double rel = local_relevance(dec, head.w)(l);
    auto [it, fresh] = by_concept.try_emplace(l);
    PlanStep& st = it->second;
    if (fresh) {
      st.concept_id = sp.bases[static_cast<std::size_t>(l)].concept_id;
      st.mask = Mask(lm.h, lm.w);
    }
    st.importance += rel;
    ++st.segments;
    st.mask |= lm.segment_mask(r.segment_id);
  }
  for (auto& [l, st] : by_concept) {
    st.importance /= st.segments;
    plan.steps.push_back(std::move(st));
  }
  std::sort(plan.steps.begin(), plan.steps.end(), [](const PlanStep& a, const PlanStep& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.concept_id < b.concept_id;
  });
  plan.skipped = plan.steps.empty();
  return plan;
}

/// Embeds every segment of `item` with `opt`, then plans as above.
inline FlipPlan build_flip_plan(const ModelGraph& g, const DatasetItem& item, const ConceptSpace& sp,
                                const ClassHead& head, const MaskingOptions& opt = {}) {
  return build_flip_plan(embed_segments(g, item.image, item.map, opt, item.class_label), item.map, item.class_label,
                         sp, head);
}

using ClassConcept = std::pair<int, int>;  // (class label, concept id)

/// Concepts present in at least `presence_threshold` of the images of their
/// class (skipped plans count as images without concepts).
inline std::set<ClassConcept> filter_common_concepts(const std::vector<FlipPlan>& plans,
                                                     double presence_threshold = defaults::kPresenceThreshold) {
  if (plans.empty()) throw ArgumentError("filter_common_concepts: no plans");
  if (!(presence_threshold >= 0.0 && presence_threshold <= 1.0))
    throw ArgumentError("filter_common_concepts: presence_threshold must lie in [0, 1]");
  std::map<int, int> images;
  std::map<ClassConcept, int> seen;
  for (const auto& p : plans) {
    ++images[p.class_label];
    for (const auto& s : p.steps) ++seen[{p.class_label, s.concept_id}];
  }
  std::set<ClassConcept> out;
  for (const auto& [key, count] : seen)
    if (static_cast<double>(count) >= presence_threshold * images[key.first]) out.insert(key);
  if (out.empty())
    throw DataError(detail::cat("filter_common_concepts: no concept is present in ", presence_threshold * 100.0,
                                "% of its class images; lower presence_threshold"));
  return out;
}

enum class FlipDirection { Deletion, Insertion };

inline const char* to_string(FlipDirection d) { return d == FlipDirection::Deletion ? "deletion" : "insertion"; }

struct ImageTrace {
  std::string image_id;
  int class_label = -1;
  std::vector<double> fraction;    // flipped pixel fraction per step
  std::vector<double> true_logit;  // logit of the true class per step
  std::vector<int> predicted;
};

/// x = mean fraction of pixels flipped so far (occluded for deletion, revealed
/// for insertion), y = accuracy; point 0 is the unflipped state.
struct FlipCurve {
  FlipDirection direction = FlipDirection::Deletion;
  std::vector<double> fraction;
  std::vector<double> accuracy;
  int n_images = 0;
  std::vector<std::string> excluded;  // "<image_id>: <cause>"
  std::vector<ImageTrace> traces;     // sorted by image id
  double auc = std::numeric_limits<double>::quiet_NaN();

  std::size_t steps() const { return fraction.size(); }
};

/// Trapezoidal area under (fraction, accuracy).
inline double curve_auc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ArgumentError("curve_auc: length mismatch");
  if (x.size() < 2) throw ArgumentError("curve_auc: need at least 2 points");
  double a = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) a += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return a;
}

inline double curve_auc(const FlipCurve& c) { return curve_auc(c.fraction, c.accuracy); }

namespace detail {

inline int argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace detail

/// One concept per step in plan order, restricted to `concepts`. Images with
/// fewer concepts keep their last state; skipped plans and failing images are
/// excluded and listed. `items` and `plans` are matched by image id.
inline FlipCurve flip_curve(FlipDirection dir, const ModelGraph& g, const std::vector<DatasetItem>& items,
                            const std::vector<FlipPlan>& plans, const std::set<ClassConcept>& concepts,
                            const MaskingOptions& opt = {}, int parallelism = 1) {
  std::map<std::string, const DatasetItem*> by_id;
  for (const auto& it : items) by_id[it.image_id] = &it;
  std::vector<const FlipPlan*> order;
  for (const auto& p : plans) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const FlipPlan* a, const FlipPlan* b) { return a->image_id < b->image_id; });

  std::size_t steps = 0;
  std::vector<std::vector<const PlanStep*>> chosen(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& s : order[i]->steps)
      if (concepts.count({order[i]->class_label, s.concept_id})) chosen[i].push_back(&s);
    if (!order[i]->skipped) steps = std::max(steps, chosen[i].size());
  }

  struct Slot {
    ImageTrace trace;
    std::string error;
  };
  std::vector<Slot> slots(order.size());
  parallel_for(order.size(), parallelism, [&](std::size_t i) {
    const FlipPlan& p = *order[i];
    Slot& slot = slots[i];
    if (p.skipped) {
      slot.error = p.image_id + ": no concept segments";
      return;
    }
    const auto found = by_id.find(p.image_id);
    if (found == by_id.end()) {
      slot.error = p.image_id + ": image missing from dataset";
      return;
    }
    const DatasetItem& item = *found->second;
    try {
      slot.trace.image_id = p.image_id;
      slot.trace.class_label = item.class_label;
      Mask flipped(p.h, p.w);
      ForwardResult r;
      for (std::size_t t = 0; t <= steps; ++t) {
        if (t == 0 || t <= chosen[i].size()) {
          if (t > 0) flipped |= chosen[i][t - 1]->mask;
          if (dir == FlipDirection::Deletion)
            r = flipped.empty() ? forward_image(g, item.image) : occluded_forward(g, item.image, flipped.inverted(), opt);
          else
            r = occluded_forward(g, item.image, flipped, opt);
          if (!r.logits.allFinite()) throw NumericError("non-finite logits");
        }
        slot.trace.fraction.push_back(flipped.area_fraction());
        slot.trace.true_logit.push_back(item.class_label >= 0 && item.class_label < r.logits.size()
                                            ? r.logits(item.class_label)
                                            : std::numeric_limits<double>::quiet_NaN());
        slot.trace.predicted.push_back(detail::argmax(r.logits));
      }
    } catch (const Error& e) {
      slot.error = p.image_id + ": " + e.what();
    }
  });

  FlipCurve out;
  out.direction = dir;
  out.fraction.assign(steps + 1, 0.0);
  out.accuracy.assign(steps + 1, 0.0);
  for (auto& s : slots) {
    if (!s.error.empty()) {
      out.excluded.push_back(std::move(s.error));
      continue;
    }
    for (std::size_t t = 0; t <= steps; ++t) {
      out.fraction[t] += s.trace.fraction[t];
      out.accuracy[t] += s.trace.predicted[t] == s.trace.class_label ? 1.0 : 0.0;
    }
    ++out.n_images;
    out.traces.push_back(std::move(s.trace));
  }
  if (out.n_images == 0) throw DataError("flip_curve: every image was excluded");
  for (std::size_t t = 0; t <= steps; ++t) {
    out.fraction[t] /= out.n_images;
    out.accuracy[t] /= out.n_images;
  }
  if (out.steps() >= 2) out.auc = curve_auc(out);
  return out;
}

inline FlipCurve c_deletion(const ModelGraph& g, const std::vector<DatasetItem>& items, const std::vector<FlipPlan>& plans,
                            const std::set<ClassConcept>& concepts, const MaskingOptions& opt = {}, int parallelism = 1) {
  return flip_curve(FlipDirection::Deletion, g, items, plans, concepts, opt, parallelism);
}

inline FlipCurve c_insertion(const ModelGraph& g, const std::vector<DatasetItem>& items, const std::vector<FlipPlan>& plans,
                             const std::set<ClassConcept>& concepts, const MaskingOptions& opt = {}, int parallelism = 1) {
  return flip_curve(FlipDirection::Insertion, g, items, plans, concepts, opt, parallelism);
}

/// Baseline accuracy of the unmasked model over the items (ties → lowest class).
inline double baseline_accuracy(const ModelGraph& g, const std::vector<DatasetItem>& items) {
  if (items.empty()) throw ArgumentError("baseline_accuracy: empty dataset");
  int hit = 0;
  for (const auto& it : items) hit += detail::argmax(forward_image(g, it.image).logits) == it.class_label;
  return static_cast<double>(hit) / static_cast<double>(items.size());
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline void append_curve_rows(io::CsvWriter& csv, const FlipCurve& c) {
  for (std::size_t t = 0; t < c.steps(); ++t)
    csv.row({to_string(c.direction), std::to_string(t), io::fmt(c.fraction[t]), io::fmt(c.accuracy[t]),
             std::to_string(c.n_images)});
}

inline io::CsvWriter curves_csv(const std::vector<const FlipCurve*>& curves) {
  io::CsvWriter csv({"direction", "step", "mean_occluded_fraction", "accuracy", "n_images"});
  for (const auto* c : curves) append_curve_rows(csv, *c);
  return csv;
}

inline nlohmann::json traces_json(const FlipCurve& c) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : c.traces)
    j.push_back({{"image_id", t.image_id},
                 {"class_label", t.class_label},
                 {"fraction", t.fraction},
                 {"true_logit", t.true_logit},
                 {"predicted", t.predicted}});
  return j;
}

}  // namespace hucd
