#include <random>

#include <Eigen/Dense>
#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/geometry.hpp"

using namespace rdtf;

namespace {

MetricField conformal_exp(const Lattice& l, double amp) {
  // g = e^{2 phi} delta, phi = amp sin(2 pi x1 / L)
  Sym2Field h(l);
  const double w = 2 * M_PI / l.extent();
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const double phi = amp * std::sin(w * l.position(x)[0]);
    for (int i = 0; i < l.dim(); ++i) h.at(x, i, i) = std::exp(2 * phi) - 1;
  }
  return MetricField(std::move(h));
}

MetricField smooth_metric(const Lattice& l, double amp) {
  Sym2Field h(l);
  const double w = 2 * M_PI / l.extent();
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const Point p = l.position(x);
    h.at(x, 0, 0) = amp * std::sin(w * p[0]) * std::cos(w * p[1]);
    h.at(x, 1, 1) = amp * 0.7 * std::cos(w * (p[1] + p[2]));
    h.at(x, 2, 2) = amp * 0.5 * std::sin(w * (p[0] - p[2]));
    h.at(x, 0, 1) = amp * 0.3 * std::sin(w * p[2]);
    h.at(x, 1, 2) = amp * 0.2 * std::cos(w * (p[0] + p[1]));
  }
  return MetricField(std::move(h));
}

// Scalar curvature at one node by explicit index loops over the Riemann
// formula, with the same central differences for the metric.
// Plain index loops over the same stencil data: central first differences,
// compact second differences, d Gamma by the product rule.
double brute_scalar(const MetricField& m, std::size_t x0) {
  const Lattice& l = m.lattice();
  const int n = l.dim();
  const double dx = l.spacing();
  auto g = [&](std::size_t x, int i, int j) { return m.g(x, i, j); };
  auto sh = [&](std::size_t x, int k, int s) { return l.shifted(x, k, s); };
  auto dg = [&](int k, int i, int j) { return (g(sh(x0, k, 1), i, j) - g(sh(x0, k, -1), i, j)) / (2 * dx); };
  auto ddg = [&](int a, int b, int i, int j) {
    if (a == b) return (g(sh(x0, a, 1), i, j) - 2 * g(x0, i, j) + g(sh(x0, a, -1), i, j)) / (dx * dx);
    return (g(sh(sh(x0, a, 1), b, 1), i, j) - g(sh(sh(x0, a, 1), b, -1), i, j) -
            g(sh(sh(x0, a, -1), b, 1), i, j) + g(sh(sh(x0, a, -1), b, -1), i, j)) /
           (4 * dx * dx);
  };
  Eigen::MatrixXd gm(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gm(i, j) = g(x0, i, j);
  const Eigen::MatrixXd gi = gm.inverse();
  auto low = [&](int b, int i, int j) { return 0.5 * (dg(i, j, b) + dg(j, i, b) - dg(b, i, j)); };
  auto dlow = [&](int m_, int b, int i, int j) {
    return 0.5 * (ddg(m_, i, j, b) + ddg(m_, j, i, b) - ddg(m_, b, i, j));
  };
  auto dgi = [&](int m_, int a, int b) {
    double s = 0;
    for (int c = 0; c < n; ++c)
      for (int d = 0; d < n; ++d) s -= gi(a, c) * dg(m_, c, d) * gi(d, b);
    return s;
  };
  auto gamma = [&](int a, int i, int j) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += gi(a, b) * low(b, i, j);
    return s;
  };
  auto dgamma = [&](int m_, int a, int i, int j) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += dgi(m_, a, b) * low(b, i, j) + gi(a, b) * dlow(m_, b, i, j);
    return s;
  };
  double R = 0;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      double ric = 0;
      for (int i = 0; i < n; ++i) {
        ric += dgamma(i, i, j, k) - dgamma(j, i, i, k);
        for (int p = 0; p < n; ++p) ric += gamma(i, i, p) * gamma(p, j, k) - gamma(i, j, p) * gamma(p, i, k);
      }
      R += gi(j, k) * ric;
    }
  return R;
}

}  // namespace

TEST_CASE("inverse metric") {
  const Lattice l(3, 8, 1.0);
  CHECK(inverse_metric(MetricField::flat(l)).max_abs() == doctest::Approx(1.0));
  Sym2Field h(l);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  for (std::size_t x = 0; x < l.node_count(); ++x)
    for (int c = 0; c < 6; ++c) h(x, c) = U(rng);
  const MetricField m(h);
  const Sym2Field gi = inverse_metric(m);
  double worst = 0;
  for (std::size_t x = 0; x < l.node_count(); ++x)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m.g(x, i, k) * gi.at(x, k, j);
        worst = std::max(worst, std::abs(s - (i == j)));
      }
  CHECK(worst < 1e-12);
  Sym2Field c(l);
  for (std::size_t x = 0; x < l.node_count(); ++x)
    for (int i = 0; i < 3; ++i) c.at(x, i, i) = 1.5;
  CHECK(inverse_metric(MetricField(c)).at(3, 1, 1) == doctest::Approx(0.4));
  SUBCASE("non positive definite node is reported") {
    Sym2Field bad(l);
    bad.at(17, 2, 2) = -1.5;
    try {
      (void)inverse_metric(MetricField(bad));
      FAIL("expected NotPositiveDefinite");
    } catch (const NotPositiveDefinite& e) {
      CHECK(e.node() == 17);
      CHECK(e.eigenvalues().size() == 3);
    }
  }
}

TEST_CASE("christoffel and DeTurck field on conformal metrics") {
  std::vector<double> dxs, eg, ex;
  for (int N : {16, 32, 64}) {
    const Lattice l(3, N, 2 * M_PI);
    const double amp = 0.05, w = 2 * M_PI / l.extent();
    const MetricField m = conformal_exp(l, amp);
    const Sym3Field G = christoffel(m);
    const VectorField X = deturck_field(m);
    double e1 = 0, e2 = 0;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const double x1 = l.position(x)[0];
      const double d0 = amp * w * std::cos(w * x1);  // d_0 phi
      const double phi = amp * std::sin(w * x1);
      for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            const double dphi_i = i == 0 ? d0 : 0, dphi_j = j == 0 ? d0 : 0, dphi_k = k == 0 ? d0 : 0;
            const double exact = (k == i) * dphi_j + (k == j) * dphi_i - (i == j) * dphi_k;
            e1 = std::max(e1, std::abs(G.at(x, k, i, j) - exact));
          }
      e2 = std::max(e2, std::abs(X(x, 0) - (3 - 2) * std::exp(-2 * phi) * d0));
      e2 = std::max(e2, std::abs(X(x, 1)) + std::abs(X(x, 2)));
    }
    dxs.push_back(l.spacing());
    eg.push_back(e1);
    ex.push_back(e2);
  }
  CHECK(oracle::log_slope(dxs, eg) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(oracle::log_slope(dxs, ex) == doctest::Approx(2.0).epsilon(0.1));
  const Lattice l(3, 8, 1.0);
  CHECK(christoffel(MetricField::flat(l)).max_abs() == 0.0);
  CHECK(deturck_field(MetricField::flat(l)).max_abs() == 0.0);
}

TEST_CASE("scalar curvature") {
  SUBCASE("flat") {
    const auto c = curvature(MetricField::flat(Lattice(3, 8, 1.0)));
    CHECK(c.scalar.max_abs() == 0.0);
    CHECK(c.ricci.max_abs() == 0.0);
  }
  SUBCASE("index-loop oracle at one node") {
    const Lattice l(3, 16, 2 * M_PI);
    Sym2Field h(l);
    const double w = 2 * M_PI / l.extent();
    for (std::size_t x = 0; x < l.node_count(); ++x) h.at(x, 0, 0) = 0.1 * std::sin(w * l.position(x)[0]);
    const MetricField m(h);
    const ScalarField R = scalar_curvature(m);
    const std::size_t x0 = l.node({2 + 8, 5, 9});  // x1 = -L/2 + 10 dx = L/8
    const double b = brute_scalar(m, x0);
    CHECK(std::abs(R(x0) - b) <= 1e-10 * std::max(std::abs(b), 1e-12));
    const MetricField m2 = smooth_metric(l, 0.08);
    const std::size_t x1 = l.node({3, 11, 6});
    CHECK(scalar_curvature(m2)(x1) == doctest::Approx(brute_scalar(m2, x1)).epsilon(1e-10));
  }
  SUBCASE("conformal closed form R = -8 u^-5 lap u converges at second order") {
    std::vector<double> dxs, err;
    for (int N : {16, 32, 64}) {
      const Lattice l(3, N, 2 * M_PI);
      const double s = l.extent() / 10;
      Sym2Field h(l);
      ScalarField exact(l);
      for (std::size_t x = 0; x < l.node_count(); ++x) {
        const Point p = l.position(x);
        const double r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        const double e = 0.05 * std::exp(-r2 / (2 * s * s));
        const double u = 1 + e;
        const double lap = e * (r2 / (s * s * s * s) - 3 / (s * s));
        for (int i = 0; i < 3; ++i) h.at(x, i, i) = std::pow(u, 4) - 1;
        exact(x) = -8 * std::pow(u, -5) * lap;
      }
      dxs.push_back(l.spacing());
      err.push_back(oracle::max_diff(scalar_curvature(MetricField(h)), exact));
    }
    CHECK(oracle::log_slope(dxs, err) == doctest::Approx(2.0).epsilon(0.1));
  }
  SUBCASE("two dimensions: Ric = R g / 2") {
    const Lattice l(2, 32, 2 * M_PI);
    Sym2Field h(l);
    const double w = 2 * M_PI / l.extent();
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const Point p = l.position(x);
      h.at(x, 0, 0) = 0.05 * std::sin(w * p[0]);
      h.at(x, 1, 1) = 0.04 * std::cos(w * p[1]);
      h.at(x, 0, 1) = 0.02 * std::sin(w * (p[0] + p[1]));
    }
    const MetricField m(h);
    const auto c = curvature(m);
    double dev = 0, scale = 0;
    for (std::size_t x = 0; x < l.node_count(); ++x)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          dev = std::max(dev, std::abs(c.ricci.at(x, i, j) - 0.5 * c.scalar(x) * m.g(x, i, j)));
          scale = std::max(scale, std::abs(c.ricci.at(x, i, j)));
        }
    CHECK(dev < 0.05 * scale);
  }
}

TEST_CASE("bilipschitz bounds") {
  const Lattice l(3, 8, 1.0);
  const auto b = bilipschitz_bounds(MetricField::flat(l));
  CHECK(b.lambda_min == 1.0);
  CHECK(b.lambda_max == 1.0);
  Sym2Field h(l);
  for (std::size_t x = 0; x < l.node_count(); ++x)
    for (int i = 0; i < 3; ++i) h.at(x, i, i) = 0.05;
  const auto c = bilipschitz_bounds(MetricField(h));
  CHECK(c.lambda_min == doctest::Approx(1.05));
  CHECK(c.lambda_max == doctest::Approx(1.05));
  const MetricField m = smooth_metric(Lattice(3, 16, 2 * M_PI), 0.1);
  const auto d = bilipschitz_bounds(m);
  CHECK(d.lambda_max <= 1 + perturbation_sup(m.h()) + 1e-15);
}

TEST_CASE("flow right-hand sides") {
  SUBCASE("fixed points") {
    const Lattice l(3, 8, 1.0);
    CHECK(rdtf_rhs_h(MetricField::flat(l)).max_abs() == 0.0);
    CHECK(rdtf_rhs_geometric(MetricField::flat(l)).max_abs() == 0.0);
    Sym2Field c(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) c.at(x, 0, 1) = 0.1, c.at(x, 2, 2) = -0.05;
    CHECK(rdtf_rhs_h(MetricField(c)).max_abs() < 1e-14);
    CHECK(rdtf_rhs_geometric(MetricField(c)).max_abs() < 1e-14);
  }
  SUBCASE("linearisation: rhs = lap h + O(A^2)") {
    const Lattice l(3, 16, 2 * M_PI);
    const double w = 2 * M_PI / l.extent();
    auto rhs = [&](double A) {
      Sym2Field h(l);
      for (std::size_t x = 0; x < l.node_count(); ++x) h.at(x, 0, 0) = A * std::sin(w * l.position(x)[0]);
      return rdtf_rhs_geometric(MetricField(h));
    };
    std::vector<double> As, quad;
    for (double A : {1e-3, 2e-3, 4e-3}) {
      Sym2Field q = rhs(2 * A);
      Sym2Field r = rhs(A);
      r *= 2.0;
      q -= r;  // quadratic remainder
      As.push_back(A);
      quad.push_back(q.max_abs());
    }
    CHECK(oracle::log_slope(As, quad) == doctest::Approx(2.0).epsilon(0.1));
    // linear part: the heat operator on the mode, up to O(dx^2)
    const double A = 1e-6;
    const Sym2Field r = rhs(A);
    double d = 0;
    for (std::size_t x = 0; x < l.node_count(); ++x)
      for (int c = 0; c < 6; ++c) {
        const double lin = c == 0 ? -w * w * A * std::sin(w * l.position(x)[0]) : 0.0;
        d = std::max(d, std::abs(r(x, c) - lin));
      }
    CHECK(d < 0.5 * l.spacing() * l.spacing() * w * w * w * w * A);  // symbol error <= (w dx)^2 / 3
  }
  SUBCASE("the two forms agree at second order") {
    std::vector<double> dxs, err;
    for (int N : {16, 32, 64}) {
      const Lattice l(3, N, 2 * M_PI);
      const MetricField m = smooth_metric(l, 0.1);
      Sym2Field d = rdtf_rhs_h(m);
      d -= rdtf_rhs_geometric(m);
      dxs.push_back(l.spacing());
      err.push_back(d.max_abs());
    }
    const double p = oracle::log_slope(dxs, err);
    CHECK(p >= 1.8);
    CHECK(p <= 2.2);
  }
  SUBCASE("DeTurck field is odd to leading order") {
    const Lattice l(3, 16, 2 * M_PI);
    const MetricField a = smooth_metric(l, 1e-3);
    Sym2Field neg = a.h();
    neg *= -1.0;
    VectorField s = deturck_field(a);
    s += deturck_field(MetricField(neg));
    CHECK(s.max_abs() < 1e-2 * deturck_field(a).max_abs());
  }
}
