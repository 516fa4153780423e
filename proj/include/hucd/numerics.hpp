#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "hucd/constants.hpp"
#include "hucd/error.hpp"

namespace hucd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest absolute entry, 0 for empty matrices.
inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite())
    throw ArgumentError(detail::cat(what, ": non-finite entries in ", a.rows(), "x", a.cols(), " matrix"));
}

/// ‖AᵀA − I‖_max; 0 for a matrix with no columns.
inline double orthonormality_error(const Matrix& a) {
  if (a.cols() == 0) return 0.0;
  return max_abs(a.transpose() * a - Matrix::Identity(a.cols(), a.cols()));
}

// ---------------------------------------------------------------------------
// SVD / symmetric eigendecomposition
// ---------------------------------------------------------------------------

struct SvdResult {
  Matrix u;   // rows × r
  Vector s;   // r, descending, non-negative
  Matrix v;   // cols × r
};

/// Thin SVD, r = min(rows, cols). Singular values are returned descending.
inline SvdResult svd_thin(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) throw ArgumentError("svd_thin: empty matrix");
  require_finite(a, "svd_thin");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericError(detail::cat("svd_thin: no convergence for ", a.rows(), "x", a.cols(), " matrix"));
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

struct SpectrumResult {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns, matching eigenvalues
};

inline SpectrumResult eig_symmetric(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw ContractViolation(detail::cat("eig_symmetric: matrix must be square and non-empty, got ", a.rows(), "x", a.cols()));
  require_finite(a, "eig_symmetric");
  const double asym = max_abs(a - a.transpose());
  if (asym > tol::kSymmetry)
    throw ContractViolation(detail::cat("eig_symmetric: input not symmetric (max |A - A^T| = ", asym, ")"));
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success)
    throw NumericError(detail::cat("eig_symmetric: no convergence for ", a.rows(), "x", a.cols(), " matrix"));
  const Eigen::Index n = a.rows();
  SpectrumResult out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = es.eigenvalues()(n - 1 - i);
    out.eigenvectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lasso via ADMM
// ---------------------------------------------------------------------------

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double residual) : NumericError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

struct LassoResult {
  Vector coef;
  int iterations = 0;
  double residual = 0.0;            // max(primal, dual) at exit
  std::vector<double> objective;    // per-iterate objective, filled when tracing
};

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double lasso_objective(const Matrix& dict, const Vector& y, const Vector& c, double lambda) {
  return 0.5 * (y - dict * c).squaredNorm() + lambda * c.lpNorm<1>();
}

/// argmin_c ½‖y − Dc‖² + λ‖c‖₁ by scaled-form ADMM with a fixed penalty ρ = 1.
/// The ADMM recursion itself is left untouched; its sparse (z) iterates are
/// only accepted as the solution estimate when they do not increase the
/// objective, so the reported sequence is monotone.
inline LassoResult lasso_admm(const Matrix& dict, const Vector& y, double lambda, int max_iter, double tol,
                              bool trace = false) {
  if (dict.rows() != y.size())
    throw ArgumentError(detail::cat("lasso_admm: dictionary has ", dict.rows(), " rows but y has ", y.size()));
  if (!(lambda > 0.0)) throw ArgumentError("lasso_admm: lambda must be positive");
  if (max_iter < 1 || !(tol > 0.0)) throw ArgumentError("lasso_admm: max_iter >= 1 and tol > 0 required");
  require_finite(dict, "lasso_admm");
  require_finite(y, "lasso_admm");

  const Eigen::Index m = dict.rows();
  const Eigen::Index n = dict.cols();
  constexpr double rho = defaults::kAdmmRho;
  LassoResult out{Vector::Zero(n), 0, 0.0, {}};
  if (n == 0) return out;

  const Vector dty = dict.transpose() * y;
  if (dty.cwiseAbs().maxCoeff() <= lambda) {
    if (trace) out.objective.push_back(lasso_objective(dict, y, out.coef, lambda));
    return out;
  }

  // (DᵀD + ρI)⁻¹ either directly or via the matrix inversion lemma when D is wide.
  const bool wide = m < n;
  Eigen::LLT<Matrix> chol;
  if (wide) {
    Matrix small = dict * dict.transpose();
    small.diagonal().array() += rho;
    chol.compute(small);
  } else {
    Matrix gram = dict.transpose() * dict;
    gram.diagonal().array() += rho;
    chol.compute(gram);
  }
  if (chol.info() != Eigen::Success)
    throw NumericError(detail::cat("lasso_admm: factorization failed for ", m, "x", n, " dictionary"));

  auto solve = [&](const Vector& rhs) -> Vector {
    if (!wide) return chol.solve(rhs);
    const Vector t = chol.solve(dict * rhs);
    return (rhs - dict.transpose() * t) / rho;
  };

  Vector x = Vector::Zero(n), z = Vector::Zero(n), u = Vector::Zero(n), z_old(n);
  Vector best = z;
  double best_obj = lasso_objective(dict, y, best, lambda);
  if (trace) out.objective.push_back(best_obj);
  const double kappa = lambda / rho;
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iter; ++it) {
    x = solve(dty + rho * (z - u));
    z_old = z;
    for (Eigen::Index i = 0; i < n; ++i) z(i) = soft_threshold(x(i) + u(i), kappa);
    u += x - z;
    const double primal = (x - z).cwiseAbs().maxCoeff();
    const double dual = rho * (z - z_old).cwiseAbs().maxCoeff();
    residual = std::max(primal, dual);
    // z is sparse, so the residual is accumulated over its support only.
    Vector r = y;
    double l1 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (z(i) != 0.0) {
        r.noalias() -= z(i) * dict.col(i);
        l1 += std::abs(z(i));
      }
    const double obj = 0.5 * r.squaredNorm() + lambda * l1;
    if (obj <= best_obj) {
      best = z;
      best_obj = obj;
    }
    if (trace) out.objective.push_back(best_obj);
    if (residual <= tol) {
      ++it;
      break;
    }
  }
  out.coef = best;
  out.iterations = it;
  out.residual = residual;
  if (residual > 10.0 * tol)
    throw ConvergenceError(
        detail::cat("lasso_admm: no convergence after ", max_iter, " iterations (residual ", residual, ")"), residual);
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;  // k × d
  double wcss = 0.0;
};

namespace detail {

// Algorithm R with a seeded engine: k distinct row indices, slot order kept.
inline std::vector<Eigen::Index> reservoir_sample(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::vector<Eigen::Index> res(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i < k) {
      res[static_cast<std::size_t>(i)] = i;
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, i);
      const Eigen::Index j = pick(rng);
      if (j < k) res[static_cast<std::size_t>(j)] = i;
    }
  }
  return res;
}

inline KMeansResult lloyd(const Matrix& pts, Matrix centroids, int max_iter) {
  const Eigen::Index n = pts.rows();
  const Eigen::Index k = centroids.rows();
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (pts.row(i) - centroids.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = (pts.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) changed = true;
      labels[static_cast<std::size_t>(i)] = best;
      dist[static_cast<std::size_t>(i)] = best_d;
    }
    // Empty clusters steal the point farthest from its centroid.
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] < 2) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      if (far < 0) break;
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      dist[static_cast<std::size_t>(far)] = 0.0;
      counts[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }
    Matrix next = Matrix::Zero(k, pts.cols());
    for (Eigen::Index i = 0; i < n; ++i) next.row(labels[static_cast<std::size_t>(i)]) += pts.row(i);
    for (Eigen::Index c = 0; c < k; ++c)
      next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    centroids = std::move(next);
    if (!changed) break;
  }
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    wcss += (pts.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return {std::move(labels), std::move(centroids), wcss};
}

}  // namespace detail

/// Lloyd's k-means, best of `restarts` seeded reservoir initializations by WCSS.
inline KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts,
                           int max_iter = defaults::kKMeansMaxIter) {
  if (k < 1) throw ArgumentError("kmeans: k must be >= 1");
  if (k > points.rows())
    throw ArgumentError(detail::cat("kmeans: k = ", k, " exceeds number of points ", points.rows()));
  require_finite(points, "kmeans");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    const auto init = detail::reservoir_sample(points.rows(), k, rng);
    Matrix c(k, points.cols());
    for (int j = 0; j < k; ++j) c.row(j) = points.row(init[static_cast<std::size_t>(j)]);
    auto res = detail::lloyd(points, std::move(c), max_iter);
    if (!have || res.wcss < best.wcss) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Orthogonal complement
// ---------------------------------------------------------------------------

/// Orthonormal basis (D × (D−m)) of span(B)^⊥ for B with orthonormal columns.
inline Matrix orthonormal_complement(const Matrix& b) {
  const Eigen::Index d = b.rows();
  const Eigen::Index m = b.cols();
  if (m > d) throw ContractViolation(detail::cat("orthonormal_complement: ", m, " columns exceed dimension ", d));
  require_finite(b, "orthonormal_complement");
  if (m == 0) return Matrix::Identity(d, d);
  const double err = orthonormality_error(b);
  if (err > tol::kOrthonormal)
    throw ContractViolation(detail::cat("orthonormal_complement: input columns not orthonormal (error ", err, ")"));
  if (m == d) return Matrix(d, 0);
  Eigen::HouseholderQR<Matrix> qr(b);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  Matrix comp = q.rightCols(d - m);
  if (max_abs(b.transpose() * comp) > tol::kOrthonormal)
    throw ContractViolation("orthonormal_complement: input is ill-conditioned");
  return comp;
}

}  // namespace hucd
