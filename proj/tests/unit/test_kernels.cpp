#include <complex>

#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/kernels.hpp"

using namespace rdtf;

namespace {

// Exact discrete propagator on a flat 2-D lattice: naive DFT, compact
// second-difference symbol, midpoint amplification per step.
ScalarField discrete_heat(const ScalarField& u0, double dt, long steps) {
  const Lattice& l = u0.lattice();
  const int N = l.resolution();
  const double dx = l.spacing();
  using C = std::complex<double>;
  std::vector<C> hat(l.node_count());
  auto phase = [&](int k0, int k1, int x0, int x1) {
    return std::polar(1.0, -2 * M_PI * (double(k0) * x0 + double(k1) * x1) / N);
  };
  for (int k0 = 0; k0 < N; ++k0)
    for (int k1 = 0; k1 < N; ++k1) {
      C s = 0;
      for (int x0 = 0; x0 < N; ++x0)
        for (int x1 = 0; x1 < N; ++x1) s += u0(l.node({x0, x1})) * phase(k0, k1, x0, x1);
      const double lam = (4 - 2 * std::cos(2 * M_PI * k0 / N) - 2 * std::cos(2 * M_PI * k1 / N)) / (dx * dx);
      const double amp = 1 - dt * lam + 0.5 * dt * dt * lam * lam;
      hat[k0 * N + k1] = s * std::pow(amp, double(steps));
    }
  ScalarField out(l);
  for (int x0 = 0; x0 < N; ++x0)
    for (int x1 = 0; x1 < N; ++x1) {
      C s = 0;
      for (int k0 = 0; k0 < N; ++k0)
        for (int k1 = 0; k1 < N; ++k1) s += hat[k0 * N + k1] * std::conj(phase(k0, k1, x0, x1));
      out(l.node({x0, x1})) = s.real() / double(l.node_count());
    }
  return out;
}

}  // namespace

TEST_CASE("dirac surrogate") {
  const Lattice l(3, 16, 2.0);
  const ScalarField d = dirac_surrogate(l, Point{0.1, 0.0, -0.3}, 2 * l.spacing());
  double mass = 0;
  for (std::size_t x = 0; x < l.node_count(); ++x) mass += d(x);
  CHECK(mass * l.cell_volume() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(dirac_surrogate(l, Point{}, 0.0), InvalidArgument);
}

TEST_CASE("kernels on the flat trajectory") {
  const Lattice l(2, 16, 2.0);
  const Point y{0.125, -0.25, 0.0};
  StorePolicy p;
  p.dense_from = 0.0;
  p.dense_to = 0.1;
  const auto flat = evolve(MetricField::flat(l), 0.1, p);

  SUBCASE("forward kernel equals the discrete propagator") {
    const auto k = forward_kernel(flat, y, 0.0, 0.1);
    const long steps = std::lround(0.1 / flat.dt);
    const ScalarField exact = discrete_heat(dirac_surrogate(l, y, 2 * l.spacing()), 0.1 / steps, steps);
    CHECK(oracle::max_diff(k.values.back(), exact) < 1e-12 * exact.max_abs());
    for (double m : k.mass_delta) CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(k.negativity);
  }
  SUBCASE("backward kernel is the time-reversed forward kernel") {
    const double t1 = flat.horizon, t0 = flat.slices[flat.slices.size() - 9].time;
    const auto b = backward_kernel(flat, y, t1, t0);
    REQUIRE(b.times.size() == 9);
    CHECK(b.times.front() == doctest::Approx(t0));
    const ScalarField exact = discrete_heat(dirac_surrogate(l, y, 2 * l.spacing()), flat.dt, 8);
    CHECK(oracle::max_diff(b.values.front(), exact) < 1e-12 * exact.max_abs());
  }
  SUBCASE("mass concentrates near the base point at early times") {
    const auto k = forward_kernel(flat, y, 0.0, 4 * flat.dt);
    // width 2dx surrogate: Gaussian tail beyond 8dx is ~exp(-64 / 2 sigma^2) < 1e-2
    CHECK(1 - tail_fraction(k.values.back(), y, 8 * l.spacing()) >= 0.99);
  }
  SUBCASE("pairing and c0 vanish") {
    const auto b = backward_kernel(flat, y, flat.horizon, flat.horizon / 2);
    const auto pc = pairing_curve(flat, b, true);
    for (double v : pc.values) CHECK(v == 0.0);
    CHECK(pc.monotonicity_defect == 0.0);
    CHECK(pc.max_rate_error == 0.0);
    CHECK(measure_c0(flat) == 0.0);
  }
}

TEST_CASE("backward kernel needs dense slices") {
  const Lattice l(2, 16, 2.0);
  const auto sparse = evolve(MetricField::flat(l), 0.1, StorePolicy{});
  CHECK_THROWS_AS(backward_kernel(sparse, Point{}, 0.1, 0.05), InvalidArgument);
  CHECK_THROWS_AS(backward_kernel(sparse, Point{}, 0.05, 0.1), InvalidArgument);
}

TEST_CASE("gaussian fit recovers the heat kernel constants") {
  const Lattice l(3, 48, 2.0);
  const double tau = 0.01;
  const Point y{};
  const auto phi = oracle::sample(l, [&](const Point& p) {
    return std::pow(4 * M_PI * tau, -1.5) * std::exp(-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (4 * tau));
  });
  const auto fit = gaussian_bound_fit(phi, y, tau);
  CHECK(fit.D_fit == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(fit.C_fit == doctest::Approx(std::pow(4 * M_PI, -1.5)).epsilon(1e-6));
  CHECK(fit.pointwise_ok);
  CHECK(fit.residual < 1e-8);
  // continuum tail mass outside r: erfc-type, below exp(-r^2 / 4 tau) * poly
  REQUIRE(fit.tail_radii.size() >= 3);
  CHECK(fit.tail_ok);
  CHECK(fit.D2 > 3.0);
}

TEST_CASE("tail fraction of a uniform field") {
  const Lattice l(2, 32, 1.0);
  const ScalarField one(l, 1.0);
  const double r = 0.25;
  const double frac = tail_fraction(one, Point{}, r);
  CHECK(frac == doctest::Approx(1 - M_PI * r * r).epsilon(0.02));
}

TEST_CASE("backward bound exponent") {
  const Lattice l(3, 8, 1.0);
  KernelField u;
  u.direction = KernelDirection::Backward;
  for (double t : {0.01, 0.02, 0.04, 0.08}) {
    u.times.push_back(t);
    u.values.emplace_back(l, std::pow(t, -0.5));
  }
  const auto plain = backward_bound_fit(u, 0.0, 3, 0.0, 1.0);
  CHECK(plain.exponent == doctest::Approx(-0.5));
  // c0 = 1.5 in n = 3 multiplies by t^{0.5}
  CHECK(backward_bound_fit(u, 1.5, 3, 0.0, 1.0).exponent == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(backward_bound_fit(u, 0.0, 3, 0.02, 0.04).times.size() == 2);
}
