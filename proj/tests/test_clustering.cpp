#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "hucd/clustering.hpp"
#include "oracles.hpp"

using namespace hucd;
using namespace hucd::testing;

namespace {

std::vector<int> run_ssc(const Matrix& x, int k, const SSCConfig& cfg) {
  return spectral_cluster(build_affinity(ssc_self_expression(x, cfg)), k, cfg.seed, cfg.restarts).labels;
}

}  // namespace

TEST(SscSelfExpression, TwoIdenticalDirectionsMatchOneAtomClosedForm) {
  Matrix x(2, 3);
  x << 1.0, 2.0, 2.0, 2.0, 4.0, 4.0;
  SSCConfig cfg;
  cfg.tol = 1e-10;
  const Matrix c = ssc_self_expression(x, cfg);
  // unit atom d, target d, λ = 0.05·(dᵀd): c = dᵀy − λ = 0.95.
  EXPECT_NEAR(c(1, 0), 0.95, 1e-8);
  EXPECT_NEAR(c(0, 1), 0.95, 1e-8);
}

TEST(SscSelfExpression, DiagonalIsExactlyZero) {
  std::mt19937_64 rng(1);
  const Matrix c = ssc_self_expression(random_matrix(30, 6, rng), {});
  for (Eigen::Index i = 0; i < c.rows(); ++i) EXPECT_EQ(c(i, i), 0.0);
}

TEST(SscSelfExpression, OrthogonalSubspacesGiveBlockDiagonal) {
  std::mt19937_64 rng(2);
  const Matrix q = random_orthonormal(12, 5, rng);
  Matrix x(40, 12);
  for (int i = 0; i < 40; ++i) {
    const Vector coef = random_vector(i < 20 ? 2 : 3, rng);
    x.row(i) = (i < 20 ? q.leftCols(2) * coef : q.rightCols(3) * coef).transpose();
  }
  const Matrix c = ssc_self_expression(x, {});
  double off = 0.0;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      if ((i < 20) != (j < 20)) off += std::abs(c(i, j));
  EXPECT_LE(off, 1e-6);
}

TEST(SscSelfExpression, IdenticalAcrossParallelism) {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(25, 5, rng);
  SSCConfig one, four;
  four.parallelism = 4;
  EXPECT_EQ(ssc_self_expression(x, one), ssc_self_expression(x, four));
}

TEST(SscSelfExpression, ConfigValidation) {
  SSCConfig bad;
  bad.lambda_rel = 1.5;
  EXPECT_THROW(ssc_self_expression(Matrix::Identity(3, 3), bad), ConfigError);
  EXPECT_THROW(ssc_self_expression(Matrix::Identity(1, 3), {}), ArgumentError);
}

TEST(BuildAffinity, Examples) {
  EXPECT_EQ(build_affinity(Matrix::Zero(3, 3)), Matrix::Zero(3, 3));
  Matrix c = Matrix::Zero(2, 2);
  c(0, 1) = -2.0;
  const Matrix w = build_affinity(c);
  EXPECT_EQ(w(0, 1), 2.0);
  EXPECT_EQ(w(1, 0), 2.0);
  std::mt19937_64 rng(4);
  const Matrix r = build_affinity(random_matrix(15, 15, rng));
  EXPECT_EQ(r, r.transpose());
  EXPECT_TRUE((r.array() >= 0.0).all());
  EXPECT_EQ(r.diagonal(), Vector::Zero(15));
}

TEST(SpectralCluster, TwoDisconnectedCliques) {
  Matrix w = Matrix::Zero(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      if (i != j && (i < 4) == (j < 4)) w(i, j) = 1.0;
  const auto r = spectral_cluster(w, 2, 0);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)] == r.labels[0], i < 4);
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(r.embedding.row(i).norm(), 1.0, 1e-6);
  EXPECT_THROW(spectral_cluster(w, 1, 0), ArgumentError);
}

TEST(SpectralCluster, PermutationGivesSamePartition) {
  const Planted p = planted_subspaces({2, 2, 3}, 20, 20, 0.0, 5);
  const Matrix w = build_affinity(ssc_self_expression(p.points, {}));
  const auto base = spectral_cluster(w, 3, 0).labels;
  std::vector<int> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix wp(60, 60);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) wp(i, j) = w(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  const auto got = spectral_cluster(wp, 3, 0).labels;
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j)
      EXPECT_EQ(got[static_cast<std::size_t>(i)] == got[static_cast<std::size_t>(j)],
                base[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
                    base[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]);
}

TEST(SpectralCluster, IsolatedNodesFlaggedAndAssigned) {
  Matrix w = Matrix::Zero(7, 7);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if (i != j && (i < 3) == (j < 3)) w(i, j) = 1.0;
  const auto r = spectral_cluster(w, 2, 0);
  EXPECT_EQ(r.isolated, (std::vector<int>{6}));
  EXPECT_GE(r.labels[6], 0);
  EXPECT_LT(r.labels[6], 2);
}

TEST(ChooseClusterCount, RoundingAndClamp) {
  EXPECT_EQ(choose_cluster_count(14.0, 100), 14);
  EXPECT_EQ(choose_cluster_count(1.2, 100), 2);
  EXPECT_EQ(choose_cluster_count(13.5, 100), 14);
  EXPECT_EQ(choose_cluster_count(40.0, 10), 9);
}

TEST(FilterClusters, SizesAgainstThreshold) {
  std::vector<int> labels;
  for (int i = 0; i < 120; ++i) labels.push_back(2);
  for (int i = 0; i < 60; ++i) labels.push_back(0);
  for (int i = 0; i < 10; ++i) labels.push_back(1);
  const auto a = filter_clusters(labels, 50);
  EXPECT_EQ(a.k, 2);
  EXPECT_EQ(a.residual_pool.size(), 10u);
  EXPECT_EQ(a.counts, (std::vector<int>{60, 120}));  // original order: cluster 0 then 2
  EXPECT_EQ(a.labels[0], 1);
  EXPECT_EQ(a.labels[125], 0);
  EXPECT_EQ(std::accumulate(a.counts.begin(), a.counts.end(), 0) + static_cast<int>(a.residual_pool.size()), 190);
}

TEST(FilterClusters, AllLargeAndAllSmall) {
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  EXPECT_TRUE(filter_clusters(labels, 2).residual_pool.empty());
  EXPECT_EQ(filter_clusters(labels, 5).k, 1);  // desk-scale override
  EXPECT_THROW(filter_clusters(labels, 50), DataError);
}

TEST(FilterClusters, CsvRoundTrip) {
  const auto a = filter_clusters({0, 1, 1, 1, 2, 2, 2, 2}, 2);
  const auto p = std::filesystem::temp_directory_path() / "hucd_assign.csv";
  save_assignment(a, p);
  const auto b = load_assignment(p);
  EXPECT_EQ(b.labels, a.labels);
  EXPECT_EQ(b.residual_pool, a.residual_pool);
  EXPECT_EQ(b.counts, a.counts);
}

TEST(SscPlanted, NoiselessThreeSubspacesFullAccuracy) {
  const auto t0 = std::chrono::steady_clock::now();
  const Planted p = planted_subspaces({2, 2, 3}, 60, 20, 0.0, 0);
  const auto labels = run_ssc(p.points, 3, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(matched_accuracy(labels, p.truth, 3), 1.0);
  EXPECT_LT(secs, 10.0);
}

TEST(SscPlanted, OnePercentNoiseAtLeast95) {
  const Planted p = planted_subspaces({2, 2, 3}, 60, 20, 0.01, 0);
  EXPECT_GE(matched_accuracy(run_ssc(p.points, 3, {}), p.truth, 3), 0.95);
}
