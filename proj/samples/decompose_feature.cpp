// Fit two concept bases from clustered features, decompose a new feature
// vector and print its per-concept activation and relevance.
#include <cstdio>
#include <random>

#include "hucd/concepts.hpp"

int main() {
  using namespace hucd;
  constexpr int D = 6;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;

  // concept 0 lives on span(e0, e1), concept 1 on the line e2 + e3
  Matrix a(40, D), b(40, D);
  a.setZero();
  b.setZero();
  for (int i = 0; i < 40; ++i) {
    a(i, 0) = n01(rng);
    a(i, 1) = n01(rng);
    const double t = n01(rng);
    b(i, 2) = t;
    b(i, 3) = t;
  }
  std::vector<ConceptBasis> bases{fit_basis(a, 0.8, 0), fit_basis(b, 0.8, 1)};
  const ConceptSpace sp = build_space(std::move(bases), 1e6);

  Vector w(D);  // class weights
  w << 1.0, 0.5, 2.0, 0.0, -1.0, 0.3;
  Vector phi(D);
  phi << 0.9, 0.2, 0.6, 0.6, 0.1, 0.0;

  const auto dec = decompose(phi, sp);
  const Vector act = activation_scores(dec, phi);
  const Vector rel = local_relevance(dec, w);
  for (int l = 0; l <= sp.n(); ++l) {
    const long dim = l < sp.n() ? static_cast<long>(sp.width(l)) : static_cast<long>(sp.complement.cols());
    std::printf("%-10s dim %ld  activation %.4f  relevance %+.4f\n",
                l < sp.n() ? ("concept " + std::to_string(l)).c_str() : "residual", dim, act(l), rel(l));
  }
  std::printf("sum of relevances %.6f = phi.w %.6f\n", rel.sum(), phi.dot(w));
  const int s = assign_segment(act);
  std::printf("assigned to %s\n", s == kResidual ? "residual" : ("concept " + std::to_string(s)).c_str());
  std::printf("completeness of w: %.4f\n", global_relevance(sp, w).eta);
}
