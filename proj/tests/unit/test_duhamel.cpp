#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/duhamel.hpp"

using namespace rdtf;

TEST_CASE("heat propagator") {
  const Lattice l(3, 16, 2 * M_PI);
  const HeatPropagator P(l);
  const double w = 2 * M_PI / l.extent();
  const auto f = oracle::sample(l, [&](const Point& p) { return std::sin(w * p[0]); });
  CHECK(heat_convolve(P, f, 0.0) == f);
  SUBCASE("Fourier mode") {
    const double tau = 0.3;
    ScalarField e = f;
    e *= std::exp(-w * w * tau);
    CHECK(oracle::max_diff(heat_convolve(P, f, tau), e) < 1e-8);
  }
  SUBCASE("mass and positivity") {
    const ScalarField one(l, 1.0);
    ScalarField c = heat_convolve(P, one, 0.7);
    c -= one;
    CHECK(c.max_abs() < 1e-12);
    double mass = 0, lo = 1;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const double k = P.kernel_value(l.multi_index(x), 0.2);
      mass += k * l.cell_volume();
      lo = std::min(lo, k);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(lo >= 0.0);
  }
  SUBCASE("semigroup on resolved modes") {
    // The sampled kernel is a semigroup only up to aliasing, which is
    // negligible for low modes on a fine lattice.
    const Lattice f32(3, 32, 2 * M_PI);
    const HeatPropagator Q(f32);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> U(-1, 1);
    double c[4];
    for (double& v : c) v = U(rng);
    const auto g = oracle::sample(f32, [&](const Point& p) {
      return c[0] * std::sin(p[0]) + c[1] * std::cos(2 * p[1] + p[2]) + c[2] * std::sin(3 * p[2]) +
             c[3] * std::cos(4 * (p[0] - p[1]));
    });
    const ScalarField a = heat_convolve(Q, heat_convolve(Q, g, 0.05), 0.11);
    CHECK(oracle::max_diff(a, heat_convolve(Q, g, 0.16)) < 1e-10);
  }
}

TEST_CASE("duhamel solver") {
  const Lattice l(3, 16, 2 * M_PI);
  const double w = 2 * M_PI / l.extent();
  SUBCASE("zero data") {
    const auto r = duhamel_solve(Sym2Field(l), 0.2);
    for (const auto& s : r.trajectory.slices) CHECK(s.metric.h().max_abs() == 0.0);
  }
  SUBCASE("linear mode matches the decay law after one iteration") {
    const double A = 1e-4;
    Sym2Field h(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) h.at(x, 0, 0) = A * std::sin(w * l.position(x)[0]);
    DuhamelOptions o;
    o.iterations = 1;
    const auto r = duhamel_solve(h, 0.3, o);
    const auto& last = r.trajectory.slices.back();
    double err = 0;
    for (std::size_t x = 0; x < l.node_count(); ++x)
      err = std::max(err, std::abs(last.metric.h().at(x, 0, 0) -
                                   A * std::exp(-w * w * last.time) * std::sin(w * l.position(x)[0])));
    CHECK(err < 10 * A * A);
  }
  SUBCASE("Picard increments contract for small data") {
    Sym2Field h(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const Point p = l.position(x);
      h.at(x, 0, 0) = std::sin(w * p[0]) * std::cos(w * p[1]);
      h.at(x, 1, 2) = 0.5 * std::cos(w * (p[0] + p[2]));
    }
    h *= 0.04 / perturbation_sup(h);
    const auto r = duhamel_solve(h, 0.3);
    REQUIRE(r.increment_X.size() >= 3);
    CHECK(r.contraction_ratio < 1.0);
    for (std::size_t m = 1; m < r.increment_X.size(); ++m) CHECK(r.increment_X[m] < r.increment_X[m - 1]);
  }
}

TEST_CASE("solver comparison") {
  const Lattice l(3, 8, 1.0);
  StorePolicy p;
  const auto a = evolve(MetricField::flat(l), 0.05, p);
  const auto c = compare_solvers(a, a);
  CHECK(c.max_ratio == 0.0);
  CHECK(c.final_sup_diff == 0.0);
  const auto b = evolve(MetricField::flat(Lattice(3, 16, 1.0)), 0.05, p);
  CHECK_THROWS_AS(compare_solvers(a, b), InvalidArgument);
}
