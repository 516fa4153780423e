#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hucd/constants.hpp"
#include "hucd/error.hpp"
#include "hucd/io.hpp"
#include "hucd/numerics.hpp"
#include "hucd/parallel.hpp"

namespace hucd {

struct SSCConfig {
  double lambda_rel = defaults::kLambdaRel;
  int max_iter = defaults::kAdmmMaxIter;
  double tol = defaults::kSscTol;
  std::uint64_t seed = 0;
  int restarts = defaults::kKMeansRestarts;
  int parallelism = 1;

  void validate() const {
    if (!(lambda_rel > 0.0 && lambda_rel <= 1.0)) throw ConfigError("ssc.lambda_rel must lie in (0, 1]");
    if (max_iter < 1) throw ConfigError("ssc.max_iter must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("ssc.tol must be positive");
    if (restarts < 1) throw ConfigError("ssc.restarts must be >= 1");
  }
};

/// n×n self-expression matrix: column i holds the lasso coefficients of the
/// ℓ₂-normalized row φ_i over all other normalized rows, with
/// λ_i = lambda_rel·‖Φ₋ᵢᵀφ_i‖_∞. The diagonal is exactly zero; zero rows get
/// a zero column.
inline Matrix ssc_self_expression(const Matrix& phi, const SSCConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = phi.rows();
  if (n < 2) throw ArgumentError("ssc_self_expression: need at least 2 rows");
  require_finite(phi, "ssc_self_expression");
  Matrix x = phi;  // normalized rows
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }
  const Matrix xt = x.transpose();  // D × n, columns = atoms
  Matrix c = Matrix::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), cfg.parallelism, [&](std::size_t ui) {
    const auto i = static_cast<Eigen::Index>(ui);
    const Vector y = xt.col(i);
    if (y.squaredNorm() == 0.0) return;
    Matrix dict(xt.rows(), n - 1);
    dict.leftCols(i) = xt.leftCols(i);
    dict.rightCols(n - 1 - i) = xt.rightCols(n - 1 - i);
    const double corr = (dict.transpose() * y).cwiseAbs().maxCoeff();
    if (corr == 0.0) return;
    LassoResult r;
    try {
      r = lasso_admm(dict, y, cfg.lambda_rel * corr, cfg.max_iter, cfg.tol);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(detail::cat("ssc column ", i, ": ", e.what()), e.residual());
    }
    for (Eigen::Index j = 0; j < n - 1; ++j) c(j < i ? j : j + 1, i) = r.coef(j);
  });
  return c;
}

/// W = |C| + |C|ᵀ with a zero diagonal.
inline Matrix build_affinity(const Matrix& c) {
  if (c.rows() != c.cols()) throw ArgumentError("build_affinity: C must be square");
  const Matrix a = c.cwiseAbs();
  Matrix w = a + a.transpose();
  w.diagonal().setZero();
  return w;
}

struct SpectralResult {
  std::vector<int> labels;
  std::vector<int> isolated;  // zero-degree rows, assigned to the nearest centroid
  Matrix embedding;           // n × k, rows ℓ₂-normalized (zero rows stay zero)
};

/// k smallest eigenvectors of L_sym = I − D^{-1/2} W D^{-1/2}, rows normalized,
/// then seeded k-means on the connected rows.
inline SpectralResult spectral_cluster(const Matrix& w, int k, std::uint64_t seed,
                                       int restarts = defaults::kKMeansRestarts) {
  const Eigen::Index n = w.rows();
  if (w.cols() != n) throw ArgumentError("spectral_cluster: W must be square");
  if (k < 2) throw ArgumentError("spectral_cluster: k must be >= 2");
  if (k > n) throw ArgumentError(detail::cat("spectral_cluster: k = ", k, " exceeds ", n, " points"));
  if ((w.array() < 0.0).any()) throw ArgumentError("spectral_cluster: W must be non-negative");
  const Vector deg = w.rowwise().sum();
  Vector inv_sqrt(n);
  SpectralResult out;
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
    if (deg(i) <= 0.0) out.isolated.push_back(static_cast<int>(i));
  }
  Matrix l = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  l = 0.5 * (l + l.transpose());
  const auto spec = eig_symmetric(l);
  out.embedding = spec.eigenvectors.rightCols(k).rowwise().reverse();  // ascending eigenvalues
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = out.embedding.row(i).norm();
    if (norm > 0.0) out.embedding.row(i) /= norm;
  }
  std::vector<Eigen::Index> connected;
  for (Eigen::Index i = 0; i < n; ++i)
    if (deg(i) > 0.0) connected.push_back(i);
  if (static_cast<Eigen::Index>(connected.size()) < k)
    throw NumericError(detail::cat("spectral_cluster: only ", connected.size(), " connected points for k = ", k));
  Matrix pts(static_cast<Eigen::Index>(connected.size()), k);
  for (std::size_t r = 0; r < connected.size(); ++r) pts.row(static_cast<Eigen::Index>(r)) = out.embedding.row(connected[r]);
  const auto km = kmeans(pts, k, seed, restarts);
  out.labels.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t r = 0; r < connected.size(); ++r) out.labels[static_cast<std::size_t>(connected[r])] = km.labels[r];
  for (int i : out.isolated) {
    int best = 0;
    double best_d = (out.embedding.row(i) - km.centroids.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double d = (out.embedding.row(i) - km.centroids.row(c)).squaredNorm();
      if (d < best_d) best_d = d, best = c;
    }
    out.labels[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// round-half-up(mean segments per image), clamped to [2, n − 1].
inline int choose_cluster_count(double mean_segments, Eigen::Index n) {
  if (!(mean_segments > 0.0)) throw ArgumentError("choose_cluster_count: mean must be positive");
  if (n < 3) throw ArgumentError(detail::cat("choose_cluster_count: need at least 3 rows, got ", n));
  const auto k = static_cast<Eigen::Index>(std::floor(mean_segments + 0.5));
  return static_cast<int>(std::clamp<Eigen::Index>(k, 2, n - 1));
}

/// Retained clusters (more than min_size members) re-indexed densely in original
/// order; rows of smaller clusters get label −1 and go to the residual pool.
struct ClusterAssignment {
  std::vector<int> labels;
  int k = 0;
  std::vector<int> counts;         // per retained cluster
  std::vector<int> residual_pool;  // row ids, ascending
  std::vector<int> source_cluster; // original cluster id of each retained cluster

  std::vector<int> members(int cluster) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cluster) out.push_back(static_cast<int>(i));
    return out;
  }
};

inline ClusterAssignment filter_clusters(const std::vector<int>& labels, int min_size = defaults::kMinClusterSize) {
  if (min_size < 0) throw ArgumentError("filter_clusters: min_size must be >= 0");
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw ArgumentError("filter_clusters: negative label");
    max_label = std::max(max_label, l);
  }
  std::vector<int> size(static_cast<std::size_t>(max_label + 1), 0);
  for (int l : labels) ++size[static_cast<std::size_t>(l)];
  std::vector<int> remap(size.size(), -1);
  ClusterAssignment out;
  for (std::size_t c = 0; c < size.size(); ++c)
    if (size[c] > min_size) {
      remap[c] = out.k++;
      out.counts.push_back(size[c]);
      out.source_cluster.push_back(static_cast<int>(c));
    }
  if (out.k == 0)
    throw DataError(detail::cat("filter_clusters: no cluster has more than ", min_size,
                                " members (empty concept set); lower min_cluster_size"));
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.labels[i] = remap[static_cast<std::size_t>(labels[i])];
    if (out.labels[i] < 0) out.residual_pool.push_back(static_cast<int>(i));
  }
  return out;
}

inline void save_assignment(const ClusterAssignment& a, const std::filesystem::path& p) {
  io::CsvWriter csv({"row_id", "cluster_id"});
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    csv.row({std::to_string(i), a.labels[i] < 0 ? "residual" : std::to_string(a.labels[i])});
  csv.save(p);
}

inline ClusterAssignment load_assignment(const std::filesystem::path& p) {
  const auto csv = io::read_csv(p);
  const auto ci = csv.column("cluster_id");
  ClusterAssignment a;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& v = csv.rows[i][ci];
    int l = -1;
    if (v != "residual") {
      try {
        l = std::stoi(v);
      } catch (const std::logic_error&) {
        throw DataError(detail::cat("'", p.string(), "' row ", i, ": bad cluster id '", v, "'"));
      }
    }
    a.labels.push_back(l);
    if (l < 0) a.residual_pool.push_back(static_cast<int>(i));
    if (l >= a.k) {
      a.k = l + 1;
      a.counts.resize(static_cast<std::size_t>(a.k), 0);
    }
    if (l >= 0) ++a.counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < a.k; ++c) a.source_cluster.push_back(c);
  return a;
}

}  // namespace hucd
