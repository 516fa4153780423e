#pragma once

#include <algorithm>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "hucd/concepts.hpp"
#include "hucd/faithfulness.hpp"
#include "hucd/synthetic.hpp"
#include "test_util.hpp"

namespace hucd::testing {

inline Mask random_blob(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> py(0, h - 1), px(0, w - 1), rad(1, std::max(h, w) / 2);
  Mask m(h, w);
  const int blobs = 1 + static_cast<int>(rng() % 3);
  for (int b = 0; b < blobs; ++b) {
    const int cy = py(rng), cx = px(rng), r = rad(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.set(y, x, true);
  }
  return m;
}

// Chebyshev dilation by r.
inline Mask dilate(const Mask& m, int r) {
  Mask out(m.h(), m.w());
  for (int y = 0; y < m.h(); ++y)
    for (int x = 0; x < m.w(); ++x)
      if (m.at(y, x))
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < m.h() && xx >= 0 && xx < m.w()) out.set(yy, xx, true);
          }
  return out;
}

inline bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a(i), &b(i), sizeof(double)) != 0) return false;
  return true;
}

struct Planted {
  Matrix points;
  std::vector<int> truth;
};

// Points from independent random subspaces of the given dims in ℝ^ambient.
inline Planted planted_subspaces(const std::vector<int>& dims, int per, int ambient, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Planted p{Matrix(static_cast<Eigen::Index>(dims.size()) * per, ambient), {}};
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < dims.size(); ++s) {
    const Matrix basis = random_orthonormal(ambient, dims[s], rng);
    for (int i = 0; i < per; ++i, ++row) {
      Vector v = basis * random_vector(dims[s], rng);
      v.normalize();
      for (int d = 0; d < ambient; ++d) v(d) += noise * nd(rng);
      p.points.row(row) = v.transpose();
      p.truth.push_back(static_cast<int>(s));
    }
  }
  return p;
}

// Best accuracy over all label permutations.
inline double matched_accuracy(const std::vector<int>& got, const std::vector<int>& truth, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    int hit = 0;
    for (std::size_t i = 0; i < got.size(); ++i)
      if (got[i] >= 0 && perm[static_cast<std::size_t>(got[i])] == truth[i]) ++hit;
    best = std::max(best, static_cast<double>(hit) / static_cast<double>(got.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// n × D rows on the unit sphere of a random d-dim subspace of ℝ^D plus noise.
inline Matrix planted_cluster(int d, int n, int D, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Matrix q = random_orthonormal(D, d, rng);
  Matrix m(n, D);
  for (int i = 0; i < n; ++i) {
    Vector c = random_vector(d, rng);
    c.normalize();
    Vector x = q * c;
    for (int k = 0; k < D; ++k) x(k) += noise * nd(rng);
    m.row(i) = x.transpose();
  }
  return m;
}

inline ConceptBasis basis_of(const Matrix& c, int id = 0) {
  ConceptBasis b;
  b.concept_id = id;
  b.basis = c;
  b.captured_variance = 1.0;
  return b;
}

// Random oblique space: up to 4 concepts with independent random orthonormal bases.
inline std::vector<ConceptBasis> random_bases(int d, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(1, 4);
  const int n = nd(rng);
  std::vector<ConceptBasis> out;
  int left = d;
  for (int l = 0; l < n && left > 0; ++l) {
    std::uniform_int_distribution<int> dd(1, std::max(1, std::min(3, left - (l + 1 < n ? 1 : 0))));
    const int dl = std::min(dd(rng), left);
    out.push_back(basis_of(random_orthonormal(d, dl, rng), l));
    left -= dl;
  }
  return out;
}

// Closed-form contribution of concept l in planted image i: pixel share of channel l × amplitude × weight.
inline double contribution(const synth::PlantedBench& pb, std::size_t i, int l) {
  const Tensor& img = pb.items[i].image;
  int on = 0;
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x) on += img.at(0, l, y, x) != 0.0;
  return static_cast<double>(on) / (img.h() * img.w()) * pb.amp[i][static_cast<std::size_t>(l)] * pb.head.w(l);
}

inline std::vector<FlipPlan> plans_for(const synth::PlantedBench& pb) {
  std::vector<FlipPlan> out;
  for (const auto& it : pb.items) out.push_back(build_flip_plan(pb.model, it, pb.space, pb.head, pb.opt));
  return out;
}

inline std::set<ClassConcept> all_concepts(int n) {
  std::set<ClassConcept> s;
  for (int l = 0; l < n; ++l) s.insert({0, l});
  return s;
}

inline int first_wrong(const ImageTrace& t) {
  for (std::size_t s = 0; s < t.predicted.size(); ++s)
    if (t.predicted[s] != t.class_label) return static_cast<int>(s);
  return std::numeric_limits<int>::max();
}

}  // namespace hucd::testing
