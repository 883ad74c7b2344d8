#pragma once

#include <type_traits>
#include <utility>

#include "rdtf/field.hpp"

namespace rdtf {

/// Calls f(std::integral_constant<int, D>{}) for the runtime dimension.
template <class F>
decltype(auto) dispatch_dim(int dim, F&& f) {
  switch (dim) {
    case 2: return f(std::integral_constant<int, 2>{});
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
  }
  throw InvalidArgument("unsupported dimension");
}

/// Metric g = delta + h on a lattice. Only the perturbation h is stored; the
/// full metric is assembled on demand.
class MetricField {
 public:
  explicit MetricField(Sym2Field h) : h_(std::move(h)) {}
  static MetricField flat(const Lattice& l) { return MetricField(Sym2Field(l)); }
  static MetricField from_metric(const Sym2Field& g);

  const Lattice& lattice() const noexcept { return h_.lattice(); }
  const Sym2Field& h() const noexcept { return h_; }
  Sym2Field& h() noexcept { return h_; }
  Sym2Field g() const;
  double g(std::size_t node, int i, int j) const noexcept {
    return h_.at(node, i, j) + (i == j ? 1.0 : 0.0);
  }

 private:
  Sym2Field h_;
};

struct CurvatureField {
  ScalarField scalar;
  Sym2Field ricci;
  ScalarField riemann_norm;
};

/// Throws NotPositiveDefinite at the first node failing a Cholesky pivot test.
void require_positive_definite(const MetricField& m);

Sym2Field inverse_metric(const MetricField& m);
/// Slot (k, ij) holds Gamma^k_ij.
Sym3Field christoffel(const MetricField& m);
CurvatureField curvature(const MetricField& m, bool with_riemann_norm = true);
ScalarField scalar_curvature(const MetricField& m);
VectorField deturck_field(const MetricField& m);

struct EigenBounds {
  double lambda_min;
  double lambda_max;
};
EigenBounds bilipschitz_bounds(const MetricField& m);
/// Max over nodes of the operator norm of h (= L-infinity distance to delta).
double perturbation_sup(const Sym2Field& h);

Sym2Field rdtf_rhs_geometric(const MetricField& m);
Sym2Field rdtf_rhs_h(const MetricField& m);

/// Q0[h] and Q1[h] at nodes (central differences). Q1 slot (p, ij).
struct Nonlinearity {
  Sym2Field q0;
  Sym3Field q1;
};
Nonlinearity nonlinear_terms(const MetricField& m);

/// Pointwise |Ric - R g / n|^2_g.
ScalarField traceless_ricci_sq(const MetricField& m, const CurvatureField& c);

/// sqrt(det g) per node.
ScalarField volume_density(const MetricField& m);

/// g^{ij} d_i d_j f with compact second differences.
ScalarField metric_hessian_trace(const Sym2Field& ginv, const ScalarField& f);

}  // namespace rdtf
