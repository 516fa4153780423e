#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hucd/constants.hpp"
#include "hucd/error.hpp"
#include "hucd/io.hpp"
#include "hucd/model.hpp"
#include "hucd/numerics.hpp"

namespace hucd {

struct ConceptBasis {
  int concept_id = 0;
  Matrix basis;                   // D × d, orthonormal columns
  double captured_variance = 0.0; // fraction of Σσ² kept by the first d directions
  Vector mean;                    // centered mode only (empty otherwise)

  int dim() const { return static_cast<int>(basis.cols()); }
};

/// Top right singular vectors of the member matrix (m × D), keeping the fewest
/// that reach `var_threshold` of Σσ². The matrix is used as is (uncentered)
/// unless `centered` is set, in which case the mean row is removed and stored.
inline ConceptBasis fit_basis(const Matrix& members, double var_threshold = defaults::kVarThreshold, int concept_id = 0,
                              bool centered = false) {
  if (members.rows() < 2) throw ArgumentError(detail::cat("fit_basis: concept ", concept_id, " needs at least 2 members"));
  if (!(var_threshold > 0.0 && var_threshold <= 1.0)) throw ArgumentError("fit_basis: var_threshold must lie in (0, 1]");
  ConceptBasis out;
  out.concept_id = concept_id;
  Matrix x = members;
  if (centered) {
    out.mean = x.colwise().mean().transpose();
    x.rowwise() -= out.mean.transpose();
  }
  if (max_abs(x) == 0.0) throw DataError(detail::cat("fit_basis: concept ", concept_id, " is degenerate (zero matrix)"));
  const auto svd = svd_thin(x);
  const Vector energy = svd.s.array().square();
  const double total = energy.sum();
  double cum = 0.0;
  int d = 0;
  while (d < energy.size()) {
    cum += energy(d++);
    if (cum >= var_threshold * total - tol::kVarianceSlack * total) break;
  }
  out.basis = svd.v.leftCols(d);
  out.captured_variance = cum / total;
  return out;
}

/// Full basis B = [C¹ | … | Cⁿ | C^{n+1}] with a stored LU factorization.
struct ConceptSpace {
  std::vector<ConceptBasis> bases;            // after rank repair (a concept may end with 0 columns)
  Matrix complement;                          // D × (D − Σd)
  Matrix full;                                // D × D
  Eigen::PartialPivLU<Matrix> lu;
  std::vector<Eigen::Index> offsets;          // column start of concept l; offsets[n] = complement start
  std::vector<std::pair<int, int>> dropped;   // (concept_id, original column index)
  double condition = 1.0;                     // of the assembled concept columns

  int n() const { return static_cast<int>(bases.size()); }
  int dim() const { return static_cast<int>(full.rows()); }
  Eigen::Index width(int l) const { return offsets[static_cast<std::size_t>(l) + 1] - offsets[static_cast<std::size_t>(l)]; }
  Matrix concept_columns() const { return full.leftCols(offsets.back()); }
};

namespace detail {

inline double condition_number(const Matrix& a) {
  if (a.cols() == 0) return 1.0;
  if (a.cols() > a.rows()) return std::numeric_limits<double>::infinity();
  const auto s = svd_thin(a).s;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

inline void finish_space(ConceptSpace& sp, Eigen::Index d) {
  Matrix a = sp.concept_columns();
  Matrix q(d, 0);
  if (a.cols() > 0) {
    Eigen::HouseholderQR<Matrix> qr(a);
    q = (qr.householderQ() * Matrix::Identity(d, a.cols())).eval();
  }
  sp.complement = orthonormal_complement(q);
  sp.full.resize(d, d);
  sp.full << a, sp.complement;
  sp.lu.compute(sp.full);
}

}  // namespace detail

/// Assembles the concept columns, greedily drops the column whose removal most
/// improves conditioning until cond ≤ cond_cap (ties: the later column), adds the
/// orthonormal complement and factorizes B. With `rank_repair` off, Σd > D is a
/// dimension-overflow error and an ill-conditioned assembly a numeric error.
inline ConceptSpace build_space(std::vector<ConceptBasis> bases, double cond_cap = defaults::kCondCap,
                                bool rank_repair = true) {
  if (bases.empty()) throw ArgumentError("build_space: no concept bases");
  const Eigen::Index d = bases.front().basis.rows();
  Eigen::Index total = 0;
  for (const auto& b : bases) {
    if (b.basis.rows() != d) throw ArgumentError("build_space: bases have different feature dimensions");
    if (orthonormality_error(b.basis) > tol::kOrthonormal)
      throw ContractViolation(detail::cat("build_space: concept ", b.concept_id, " basis is not orthonormal"));
    total += b.basis.cols();
  }
  if (!rank_repair && total > d)
    throw DataError(detail::cat("build_space: dimension overflow, concepts span ", total, " columns in R^", d));

  // Columns tagged with (concept index, original column index).
  std::vector<std::pair<int, int>> cols;
  for (std::size_t l = 0; l < bases.size(); ++l)
    for (int j = 0; j < bases[l].dim(); ++j) cols.emplace_back(static_cast<int>(l), j);
  auto assemble = [&](const std::vector<std::pair<int, int>>& c) {
    Matrix a(d, static_cast<Eigen::Index>(c.size()));
    for (std::size_t k = 0; k < c.size(); ++k)
      a.col(static_cast<Eigen::Index>(k)) = bases[static_cast<std::size_t>(c[k].first)].basis.col(c[k].second);
    return a;
  };
  ConceptSpace sp;
  double cond = detail::condition_number(assemble(cols));
  if (!rank_repair && !(cond <= cond_cap))
    throw NumericError(detail::cat("build_space: concept columns have condition ", cond, " above cap ", cond_cap));
  while (!(cond <= cond_cap)) {
    std::size_t best = 0;
    double best_cond = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      auto trial = cols;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
      const double c = detail::condition_number(assemble(trial));
      if (c <= best_cond) best_cond = c, best = k;
    }
    sp.dropped.emplace_back(bases[static_cast<std::size_t>(cols[best].first)].concept_id, cols[best].second);
    cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(best));
    cond = best_cond;
  }
  // Rebuild each basis from its surviving columns.
  std::vector<ConceptBasis> kept = bases;
  for (std::size_t l = 0; l < bases.size(); ++l) {
    std::vector<int> keep;
    for (const auto& c : cols)
      if (c.first == static_cast<int>(l)) keep.push_back(c.second);
    kept[l].basis.resize(d, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) kept[l].basis.col(static_cast<Eigen::Index>(k)) = bases[l].basis.col(keep[k]);
  }
  sp.bases = std::move(kept);
  sp.offsets.push_back(0);
  for (const auto& b : sp.bases) sp.offsets.push_back(sp.offsets.back() + b.basis.cols());
  sp.condition = cond;
  sp.full.resize(d, sp.offsets.back());
  for (std::size_t l = 0; l < sp.bases.size(); ++l)
    sp.full.middleCols(sp.offsets[l], sp.bases[l].basis.cols()) = sp.bases[l].basis;
  detail::finish_space(sp, d);
  return sp;
}

/// φ = Σ_l φ^l with φ^l = C^l·coeffs_l; component n is the complement part.
struct Decomposition {
  Vector coeffs;      // length D
  Matrix components;  // D × (n + 1)
};

inline Decomposition decompose(const Vector& phi, const ConceptSpace& sp) {
  if (phi.size() != sp.dim())
    throw ArgumentError(detail::cat("decompose: feature length ", phi.size(), " but space dimension ", sp.dim()));
  Decomposition dec{sp.lu.solve(phi), Matrix::Zero(sp.dim(), sp.n() + 1)};
  for (int l = 0; l <= sp.n(); ++l) {
    const Eigen::Index start = sp.offsets[static_cast<std::size_t>(l)];
    const Eigen::Index width = l < sp.n() ? sp.width(l) : sp.dim() - start;
    if (width > 0) dec.components.col(l) = sp.full.middleCols(start, width) * dec.coeffs.segment(start, width);
  }
  return dec;
}

/// a_l = ‖φ^l‖/‖φ‖, l = 1..n+1.
inline Vector activation_scores(const Decomposition& dec, const Vector& phi) {
  const double norm = phi.norm();
  if (!(norm > 0.0)) throw ArgumentError("activation_scores: zero feature vector");
  return dec.components.colwise().norm().transpose() / norm;
}

/// r^l = φ^l·w; Σ r^l = φ·w.
inline Vector local_relevance(const Decomposition& dec, const Vector& w) {
  if (w.size() != dec.components.rows()) throw ArgumentError("local_relevance: weight length mismatch");
  return dec.components.transpose() * w;
}

struct GlobalScores {
  Vector g;           // ‖w^l‖²/‖w‖², l = 1..n+1 (last = complement)
  double eta = 0.0;   // 1 − ‖w^⊥‖²/‖w‖²
  Matrix components;  // w^l as columns
};

inline GlobalScores global_relevance(const ConceptSpace& sp, const Vector& w) {
  const double ww = w.squaredNorm();
  if (!(ww > 0.0)) throw ArgumentError("global_relevance: zero class weight vector");
  GlobalScores out;
  out.components = decompose(w, sp).components;
  out.g = out.components.colwise().squaredNorm().transpose() / ww;
  const double perp = std::clamp(out.g(sp.n()), 0.0, 1.0);
  out.g(sp.n()) = perp;
  out.eta = 1.0 - perp;
  return out;
}

struct ClassHead {
  int k = 0;
  Vector w;
  double bias = 0.0;
};

inline ClassHead class_head(const ModelGraph& g, int k) {
  const Linear& l = g.head();
  if (k < 0 || k >= l.out_features)
    throw ArgumentError(detail::cat("class_head: class ", k, " outside [0, ", l.out_features, ")"));
  ClassHead h{k, Vector(l.in_features), l.bias[static_cast<std::size_t>(k)]};
  for (int j = 0; j < l.in_features; ++j) h.w(j) = l.weight[static_cast<std::size_t>(k) * l.in_features + j];
  return h;
}

inline constexpr int kResidual = -1;

/// Index of the most activated concept (lowest on ties), or kResidual when the
/// complement activation is strictly the largest.
inline int assign_segment(const Vector& activations) {
  const Eigen::Index n = activations.size() - 1;
  if (n < 1) return kResidual;
  int best = 0;
  for (Eigen::Index l = 1; l < n; ++l)
    if (activations(l) > activations(best)) best = static_cast<int>(l);
  return activations(n) > activations(best) ? kResidual : best;
}

inline int assign_segment(const Vector& phi, const ConceptSpace& sp) {
  return assign_segment(activation_scores(decompose(phi, sp), phi));
}

struct Prototypes {
  std::vector<std::size_t> rows;
  bool truncated = false;  // fewer rows than top_k were available
};

/// Rows ordered by activation descending, ties by (image_id, segment_id).
template <typename Key>
Prototypes concept_prototypes(const std::vector<double>& activation, const std::vector<Key>& keys, std::size_t top_k) {
  if (top_k < 1) throw ArgumentError("concept_prototypes: top_k must be >= 1");
  if (activation.size() != keys.size()) throw ArgumentError("concept_prototypes: size mismatch");
  std::vector<std::size_t> idx(activation.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (activation[a] != activation[b]) return activation[a] > activation[b];
    return keys[a] < keys[b];
  });
  Prototypes out;
  out.truncated = idx.size() < top_k;
  idx.resize(std::min(idx.size(), top_k));
  out.rows = std::move(idx);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: JSON header + f32 sidecar holding B
// ---------------------------------------------------------------------------

inline nlohmann::json space_header(const ConceptSpace& sp) {
  nlohmann::json j;
  j["n"] = sp.n();
  j["dim"] = sp.dim();
  j["concept_ids"] = nlohmann::json::array();
  j["dims"] = nlohmann::json::array();
  j["captured_variance"] = nlohmann::json::array();
  for (const auto& b : sp.bases) {
    j["concept_ids"].push_back(b.concept_id);
    j["dims"].push_back(b.dim());
    j["captured_variance"].push_back(b.captured_variance);
  }
  j["complement_dim"] = sp.complement.cols();
  j["condition"] = sp.condition;
  j["dropped_directions"] = nlohmann::json::array();
  for (const auto& [c, k] : sp.dropped) j["dropped_directions"].push_back({{"concept_id", c}, {"column", k}});
  return j;
}

/// Writes `<stem>.json` (header plus `extra` fields) and `<stem>.f32` (B).
inline void save_space(const ConceptSpace& sp, const std::filesystem::path& stem, const nlohmann::json& extra = {}) {
  nlohmann::json j = space_header(sp);
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  j["basis_file"] = stem.filename().string() + ".f32";
  io::write_json(stem.string() + ".json", j);
  io::write_matrix(stem.string() + ".f32", sp.full);
}

/// Restores a space from its stored B (no rank repair is redone).
inline ConceptSpace load_space(const std::filesystem::path& stem) {
  const auto j = io::read_json(stem.string() + ".json");
  const Matrix b = io::read_matrix(stem.string() + ".f32");
  if (b.rows() != b.cols()) throw DataError(detail::cat("'", stem.string(), ".f32': basis matrix must be square"));
  ConceptSpace sp;
  sp.full = b;
  sp.offsets.push_back(0);
  try {
    const auto ids = j.at("concept_ids").get<std::vector<int>>();
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto var = j.at("captured_variance").get<std::vector<double>>();
    if (ids.size() != dims.size() || var.size() != dims.size()) throw DataError("length mismatch");
    for (std::size_t l = 0; l < dims.size(); ++l) {
      ConceptBasis cb;
      cb.concept_id = ids[l];
      cb.captured_variance = var[l];
      cb.basis = b.middleCols(sp.offsets.back(), dims[l]);
      sp.bases.push_back(std::move(cb));
      sp.offsets.push_back(sp.offsets.back() + dims[l]);
    }
    for (const auto& dd : j.at("dropped_directions"))
      sp.dropped.emplace_back(dd.at("concept_id").get<int>(), dd.at("column").get<int>());
    sp.condition = j.at("condition").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(detail::cat("'", stem.string(), ".json': ", e.what()));
  }
  if (sp.offsets.back() > b.cols()) throw DataError(detail::cat("'", stem.string(), ".json': dims exceed basis width"));
  sp.complement = b.rightCols(b.cols() - sp.offsets.back());
  sp.lu.compute(sp.full);
  return sp;
}

}  // namespace hucd
