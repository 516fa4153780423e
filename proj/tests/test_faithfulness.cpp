#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "hucd/faithfulness.hpp"
#include "hucd/synthetic.hpp"
#include "oracles.hpp"

using namespace hucd;
using namespace hucd::testing;

namespace {

FlipPlan fake_plan(const std::string& id, int cls, std::vector<int> concepts) {
  FlipPlan p{id, cls, 2, 2, {}, concepts.empty()};
  for (int c : concepts) p.steps.push_back({c, 1.0, 1, Mask(2, 2)});
  return p;
}

}  // namespace

TEST(FlipPlan, SingleConceptImage) {
  const auto pb = synth::planted_bench({1.0}, 1, 1);
  const auto plan = build_flip_plan(pb.model, pb.items[0], pb.space, pb.head, pb.opt);
  ASSERT_EQ(plan.steps.size(), 1u);
  EXPECT_FALSE(plan.skipped);
  EXPECT_EQ(plan.steps[0].concept_id, 0);
}

TEST(FlipPlan, ImportanceEqualsPlantedContributionAndOrders) {
  const auto pb = synth::planted_bench({2.0, -0.5, 1.0, 0.3}, 20, 2);
  for (std::size_t i = 0; i < pb.items.size(); ++i) {
    const auto plan = build_flip_plan(pb.model, pb.items[i], pb.space, pb.head, pb.opt);
    ASSERT_EQ(plan.steps.size(), 4u);
    for (std::size_t k = 0; k < plan.steps.size(); ++k) {
      EXPECT_NEAR(plan.steps[k].importance, contribution(pb, i, plan.steps[k].concept_id), 1e-9);
      if (k > 0) EXPECT_GE(plan.steps[k - 1].importance, plan.steps[k].importance);
    }
    // masks disjoint
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) {
        Mask both = plan.steps[a].mask.inverted();
        both |= plan.steps[b].mask.inverted();
        EXPECT_TRUE(both.full());
      }
  }
}

TEST(FlipPlan, BackgroundOnlyImageIsSkipped) {
  auto pb = synth::planted_bench({1.0, 1.0}, 1, 3);
  auto& img = pb.items[0].image;
  for (int c = 0; c < 2; ++c)
    for (auto& v : img.plane(0, c)) v = 0.0;
  for (auto& v : img.plane(0, 2)) v = 1.0;
  EXPECT_TRUE(build_flip_plan(pb.model, pb.items[0], pb.space, pb.head, pb.opt).skipped);
}

TEST(FilterCommonConcepts, PresenceFractions) {
  std::vector<FlipPlan> plans;
  for (int i = 0; i < 10; ++i) {
    std::vector<int> c;
    if (i < 8) c.push_back(0);
    if (i < 7) c.push_back(1);
    if (i < 1) c.push_back(2);
    plans.push_back(fake_plan("i" + std::to_string(i), 0, c));
  }
  EXPECT_EQ(filter_common_concepts(plans), (std::set<ClassConcept>{{0, 0}}));
  EXPECT_EQ(filter_common_concepts(plans, 0.0).size(), 3u);
  EXPECT_THROW(filter_common_concepts(plans, 0.9), DataError);
  EXPECT_THROW(filter_common_concepts({}), ArgumentError);
}

TEST(FilterCommonConcepts, CountsPerClass) {
  // Concept 0 is in every class-1 image but only 1 of 4 class-0 images.
  std::vector<FlipPlan> plans{fake_plan("a", 0, {0, 1}), fake_plan("b", 0, {1}), fake_plan("c", 0, {1}),
                              fake_plan("d", 0, {1}), fake_plan("e", 1, {0}), fake_plan("f", 1, {0})};
  EXPECT_EQ(filter_common_concepts(plans), (std::set<ClassConcept>{{0, 1}, {1, 0}}));
}

TEST(CurveAuc, Examples) {
  EXPECT_DOUBLE_EQ(curve_auc({0.0, 0.5, 1.0}, {1.0, 1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(curve_auc({0.0, 1.0}, {1.0, 0.0}), 0.5);
  EXPECT_THROW(curve_auc({0.0}, {1.0}), ArgumentError);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(30), y(30);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  std::sort(x.begin(), x.end());
  double oracle = 0.0;  // mean height × width, summed right to left
  for (std::size_t i = x.size() - 1; i > 0; --i) oracle += (y[i] + y[i - 1]) / 2.0 * (x[i] - x[i - 1]);
  EXPECT_NEAR(curve_auc(x, y), oracle, 1e-12);
}

TEST(Deletion, PointZeroIsBaselineAndFractionsMonotone) {
  const auto pb = synth::planted_bench({1.0, 0.8, -0.4}, 30, 5, 0.3);
  const auto plans = plans_for(pb);
  const auto curve = c_deletion(pb.model, pb.items, plans, all_concepts(3), pb.opt);
  EXPECT_EQ(curve.accuracy[0], baseline_accuracy(pb.model, pb.items));
  EXPECT_EQ(curve.fraction[0], 0.0);
  EXPECT_EQ(curve.steps(), 4u);
  for (const auto& t : curve.traces)
    for (std::size_t s = 1; s < t.fraction.size(); ++s) EXPECT_GE(t.fraction[s], t.fraction[s - 1]);
  EXPECT_EQ(curve.n_images, 30);
  EXPECT_TRUE(std::isfinite(curve.auc));
}

TEST(Deletion, PlantedLogitDropsByRemovedContribution) {
  const auto pb = synth::planted_bench({1.5, 0.7, -0.3, 0.9, 0.2}, 15, 6, 0.0, 0.25);
  const auto plans = plans_for(pb);
  const auto curve = c_deletion(pb.model, pb.items, plans, all_concepts(5), pb.opt);
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < pb.items.size(); ++i) idx[pb.items[i].image_id] = i;
  for (std::size_t p = 0; p < plans.size(); ++p) {
    const auto& t = curve.traces[p];
    const std::size_t i = idx.at(t.image_id);
    for (std::size_t s = 1; s < t.true_logit.size(); ++s) {
      const int removed = plans[i].steps[s - 1].concept_id;
      EXPECT_NEAR(t.true_logit[s - 1] - t.true_logit[s], contribution(pb, i, removed), 1e-4);
    }
  }
}

TEST(Insertion, PlantedEndpointsAndSymmetryWithDeletion) {
  const auto pb = synth::planted_bench({1.5, 0.7, -0.3, 0.9}, 12, 7, 0.1, 0.5);
  const auto plans = plans_for(pb);
  const auto del = c_deletion(pb.model, pb.items, plans, all_concepts(4), pb.opt);
  const auto ins = c_insertion(pb.model, pb.items, plans, all_concepts(4), pb.opt);
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < pb.items.size(); ++i) idx[pb.items[i].image_id] = i;
  for (std::size_t p = 0; p < ins.traces.size(); ++p) {
    const auto& ti = ins.traces[p];
    const auto& td = del.traces[p];
    const std::size_t i = idx.at(ti.image_id);
    double total = 0.0;
    for (int l = 0; l < 4; ++l) total += contribution(pb, i, l);
    EXPECT_NEAR(ti.true_logit.front(), pb.head.bias, 1e-4);
    EXPECT_NEAR(ti.true_logit.back(), pb.head.bias + total, 1e-4);
    const double full = td.true_logit.front();
    for (std::size_t s = 0; s < ti.true_logit.size(); ++s) {
      // what insertion has revealed is exactly what deletion has removed
      EXPECT_NEAR(ti.true_logit[s] - pb.head.bias, full - td.true_logit[s], 1e-4);
      EXPECT_EQ(ti.fraction[s], td.fraction[s]);
    }
  }
}

TEST(Deletion, GreedyOrderMinimizesStepsToMisclassification) {
  const std::vector<double> w{1.2, -0.6, 0.8, 0.5, 0.3};
  const auto pb = synth::planted_bench(w, 8, 8, 0.02);
  const auto plans = plans_for(pb);
  const auto concepts = all_concepts(5);
  const auto greedy = c_deletion(pb.model, pb.items, plans, concepts, pb.opt);
  int multi = 0;
  for (const auto& t : greedy.traces) multi += first_wrong(t) >= 2 && first_wrong(t) <= 5;
  EXPECT_GE(multi, 4);  // most images need more than one deletion
  for (std::size_t p = 0; p < plans.size(); ++p) {
    const std::vector<DatasetItem> one{pb.items[p]};
    int best = std::numeric_limits<int>::max();
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      FlipPlan alt = plans[p];
      for (int k = 0; k < 5; ++k) alt.steps[static_cast<std::size_t>(k)] = plans[p].steps[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
      best = std::min(best, first_wrong(c_deletion(pb.model, one, {alt}, concepts, pb.opt).traces[0]));
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto it = std::find_if(greedy.traces.begin(), greedy.traces.end(),
                                 [&](const ImageTrace& t) { return t.image_id == plans[p].image_id; });
    EXPECT_EQ(first_wrong(*it), best) << plans[p].image_id;
  }
}

TEST(Deletion, ShortPlansCarryTheirLastState) {
  const auto pb = synth::planted_bench({1.0, 0.5, 0.2}, 4, 9);
  auto plans = plans_for(pb);
  plans[0].steps.resize(1);
  const auto curve = c_deletion(pb.model, pb.items, plans, all_concepts(3), pb.opt);
  const auto& t = curve.traces[0];
  ASSERT_EQ(t.fraction.size(), 4u);
  EXPECT_EQ(t.fraction[1], t.fraction[3]);
  EXPECT_EQ(t.true_logit[1], t.true_logit[3]);
}

TEST(Deletion, SkippedAndMissingImagesAreExcluded) {
  const auto pb = synth::planted_bench({1.0, 0.5}, 5, 10);
  auto plans = plans_for(pb);
  plans[1].steps.clear();
  plans[1].skipped = true;
  plans[2].image_id = "nowhere";
  const auto curve = c_deletion(pb.model, pb.items, plans, all_concepts(2), pb.opt);
  EXPECT_EQ(curve.n_images, 3);
  EXPECT_EQ(curve.excluded.size(), 2u);
}

TEST(Deletion, IdenticalAcrossParallelism) {
  const auto pb = synth::planted_bench({1.0, -0.5, 0.7}, 16, 11, 0.2);
  const auto plans = plans_for(pb);
  const auto a = c_deletion(pb.model, pb.items, plans, all_concepts(3), pb.opt, 1);
  const auto b = c_deletion(pb.model, pb.items, plans, all_concepts(3), pb.opt, 4);
  EXPECT_EQ(a.fraction, b.fraction);
  EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(CurvesCsv, Layout) {
  const auto pb = synth::planted_bench({1.0}, 3, 12);
  const auto plans = plans_for(pb);
  const auto d = c_deletion(pb.model, pb.items, plans, all_concepts(1), pb.opt);
  const auto i = c_insertion(pb.model, pb.items, plans, all_concepts(1), pb.opt);
  const std::string s = curves_csv({&d, &i}).str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "direction,step,mean_occluded_fraction,accuracy,n_images");
  EXPECT_NE(s.find("\ninsertion,1,"), std::string::npos);
}
