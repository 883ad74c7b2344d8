#include <cstring>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>
#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/norms.hpp"
#include "rdtf/stencil.hpp"

using namespace rdtf;

TEST_CASE("lattice coordinates and periodic indexing") {
  const Lattice l(3, 8, 2.0);
  CHECK(l.spacing() == doctest::Approx(0.25));
  CHECK(l.coordinate(0) == doctest::Approx(-1.0));
  CHECK(l.node({-1, 0, 0}) == l.node({7, 0, 0}));
  const std::size_t x = l.node({3, 5, 7});
  CHECK(l.plus(x, 2) == l.node({3, 5, 0}));
  CHECK(l.minus(l.node({0, 0, 0}), 0) == l.node({7, 0, 0}));
  CHECK(l.min_image(1.9) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(Lattice(3, 4, 1.0), InvalidArgument);
  CHECK_THROWS_AS(Lattice(5, 8, 1.0), InvalidArgument);
}

TEST_CASE("restrict_ball") {
  const Lattice l(3, 32, 2 * M_PI);
  const double dx = l.spacing();
  SUBCASE("radius below dx/2 on a node is that node") {
    const Point c = l.position(l.node({4, 9, 17}));
    const NodeMask m = restrict_ball(l, c, 0.4 * dx);
    CHECK(count(m) == 1);
    CHECK(m[l.node({4, 9, 17})] == 1);
  }
  SUBCASE("large ball volume within 5%") {
    const double r = 0.5 * l.extent() - dx;
    const double ratio = double(count(restrict_ball(l, Point{0.3, -0.1, 0.7}, r))) / l.node_count();
    const double exact = 4.0 / 3.0 * M_PI * r * r * r / std::pow(l.extent(), 3);
    CHECK(std::abs(ratio / exact - 1) < 0.05);
  }
  SUBCASE("corner ball wraps into every octant") {
    const double h = 0.5 * l.extent();
    const NodeMask corner = restrict_ball(l, Point{-h, -h, -h}, l.extent() / 8);
    CHECK(count(corner) == count(restrict_ball(l, Point{0, 0, 0}, l.extent() / 8)));
    int octants = 0;
    for (int o = 0; o < 8; ++o) {
      bool hit = false;
      for (std::size_t x = 0; x < l.node_count() && !hit; ++x) {
        if (!corner[x]) continue;
        const Point p = l.position(x);
        int code = 0;
        for (int a = 0; a < 3; ++a) code |= (p[a] < 0 ? 1 : 0) << a;
        hit = code == o;
      }
      octants += hit;
    }
    CHECK(octants == 8);
  }
  CHECK_THROWS_AS(restrict_ball(l, Point{}, 0.5 * l.extent()), InvalidArgument);
}

TEST_CASE("sym2 storage is symmetric") {
  const Lattice l(3, 8, 1.0);
  Sym2Field h(l);
  h.at(5, 0, 2) = 1.5;
  CHECK(h.at(5, 2, 0) == 1.5);
  CHECK(h.components() == 6);
  Sym3Field d(l);
  CHECK(d.components() == 18);
}

TEST_CASE("checkpoint round trip and header layout") {
  const Lattice l(3, 8, 2.5);
  Sym2Field h(l);
  for (std::size_t i = 0; i < h.data().size(); ++i) h.data()[i] = std::sin(0.1 * i);
  const auto p = std::filesystem::temp_directory_path() / "rdtf_ckpt_test.rdtf";
  write_checkpoint(p, h, 0.125);
  {
    std::ifstream in(p, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::memcmp(magic, "RDTF", 4) == 0);
  }
  double t = 0;
  const Sym2Field back = read_checkpoint<FieldKind::Sym2>(p, &t);
  CHECK(t == 0.125);
  CHECK(back == h);
  CHECK_THROWS_AS(read_checkpoint<FieldKind::Scalar>(p), FormatError);
  std::filesystem::remove(p);
}

TEST_CASE("csv quoting round trip") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  const auto rows = parse_csv("x,\"a,b\",\"q\"\"q\"\n1,2,3\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == "a,b");
  CHECK(rows[0][2] == "q\"q");
  CHECK(rows[1][2] == "3");
}

TEST_CASE("finite differences") {
  SUBCASE("constant field") {
    const Lattice l(3, 16, 1.0);
    const ScalarField c(l, 3.7);
    CHECK(fd_derivative(c, 1, 1).max_abs() == 0.0);
    CHECK(laplacian(c).max_abs() < 1e-11);  // 1/dx^2 amplifies roundoff
  }
  SUBCASE("sine derivative and laplacian converge at second order") {
    std::vector<double> dxs, e1, e2;
    for (int N : {16, 32, 64}) {
      const Lattice l(2, N, 3.0);
      const double w = 2 * M_PI / l.extent();
      const auto f = oracle::sample(l, [&](const Point& p) { return std::sin(w * p[0]); });
      const auto df = oracle::sample(l, [&](const Point& p) { return w * std::cos(w * p[0]); });
      const auto lf = oracle::sample(l, [&](const Point& p) { return -w * w * std::sin(w * p[0]); });
      dxs.push_back(l.spacing());
      e1.push_back(oracle::max_diff(fd_derivative(f, 0, 1), df));
      e2.push_back(oracle::max_diff(laplacian(f), lf));
    }
    CHECK(oracle::log_slope(dxs, e1) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(oracle::log_slope(dxs, e2) == doctest::Approx(2.0).epsilon(0.1));
  }
  SUBCASE("shift commutes with the laplacian") {
    const Lattice l(3, 8, 1.0);
    ScalarField f(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) f(x) = std::cos(0.37 * x * x);
    CHECK(shift(laplacian(f), 1, 3) == laplacian(shift(f, 1, 3)));
  }
  SUBCASE("non-finite input names the node") {
    const Lattice l(2, 8, 1.0);
    ScalarField f(l);
    f(13) = std::nan("");
    try {
      (void)fd_derivative(f, 0, 1);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.node() == 13);
    }
  }
}

namespace {

// Straight loops over nodes, distances and time intervals for the X-norm.
double brute_X(const std::vector<Sym2Field>& hs, const std::vector<double>& ts, double T,
               int stride) {
  const Lattice& l = hs.front().lattice();
  const int n = l.dim();
  const double dx = l.spacing(), dv = l.cell_volume();
  double sup = 0;
  std::vector<std::vector<double>> g2;  // |grad h|^2 per slice
  for (const auto& h : hs) {
    std::vector<double> v(l.node_count(), 0.0);
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = h.at(x, i, j);
      sup = std::max(sup, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().cwiseAbs().maxCoeff());
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double d = (h.at(l.shifted(x, k, 1), i, j) - h.at(l.shifted(x, k, -1), i, j)) / (2 * dx);
            v[x] += d * d;
          }
    }
    g2.push_back(std::move(v));
  }
  double best = 0;
  for (double r = 2 * dx; r <= std::min(std::sqrt(T), l.extent() / 4) * (1 + 1e-12); r *= 2) {
    auto overlap = [&](std::size_t j, double a, double b) {
      const double lo = j == 0 ? 0.0 : 0.5 * (ts[j - 1] + ts[j]);
      const double hi = j + 1 == ts.size() ? ts[j] : 0.5 * (ts[j] + ts[j + 1]);
      return std::max(0.0, std::min(hi, b) - std::max(lo, a));
    };
    for (std::size_t c = 0; c < l.node_count(); ++c) {
      const MultiIndex ci = l.multi_index(c);
      bool on = true;
      for (int a = 0; a < n; ++a) on = on && ci[a] % stride == 0;
      if (!on) continue;
      double s1 = 0, s2 = 0;
      for (std::size_t x = 0; x < l.node_count(); ++x) {
        if (l.distance(l.position(x), l.position(c)) >= r) continue;
        for (std::size_t j = 0; j < ts.size(); ++j) {
          s1 += overlap(j, 0, r * r) * g2[j][x] * dv;
          s2 += overlap(j, 0.5 * r * r, r * r) * std::pow(g2[j][x], (n + 4) / 2.0) * dv;
        }
      }
      best = std::max(best, std::pow(r, -n / 2.0) * std::sqrt(s1) +
                                std::pow(r, 2.0 / (n + 4)) * std::pow(s2, 1.0 / (n + 4)));
    }
  }
  return sup + best;
}

}  // namespace

TEST_CASE("parabolic norms") {
  const Lattice l(2, 16, 2 * M_PI);
  const double w = 2 * M_PI / l.extent();
  const std::vector<double> ts{0.0, 0.05, 0.1, 0.2, 0.4};
  SUBCASE("zero trajectory") {
    std::vector<Sym2Field> hs(ts.size(), Sym2Field(l));
    std::vector<NormSlice> s;
    for (std::size_t j = 0; j < ts.size(); ++j) s.push_back({ts[j], &hs[j]});
    const auto nrm = norm_parabolic(s, 0.4);
    CHECK(nrm.X_value == 0.0);
    CHECK(nrm.Y0_value == 0.0);
    CHECK(nrm.Y1_value == 0.0);
  }
  SUBCASE("constant multiple of delta") {
    Sym2Field h(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) h.at(x, 0, 0) = h.at(x, 1, 1) = -0.03;
    std::vector<NormSlice> s;
    for (double t : ts) s.push_back({t, &h});
    CHECK(norm_parabolic(s, 0.4).X_value == doctest::Approx(0.03).epsilon(1e-14));
  }
  SUBCASE("heat mode against brute force; monotone in T") {
    std::vector<Sym2Field> hs;
    for (double t : ts) {
      Sym2Field h(l);
      for (std::size_t x = 0; x < l.node_count(); ++x)
        h.at(x, 0, 0) = 1e-2 * std::exp(-w * w * t) * std::sin(w * l.position(x)[0]);
      hs.push_back(std::move(h));
    }
    std::vector<NormSlice> s;
    for (std::size_t j = 0; j < ts.size(); ++j) s.push_back({ts[j], &hs[j]});
    const auto nrm = norm_parabolic(s, 0.4);
    const double brute = brute_X(hs, ts, 0.4, 4);
    CHECK(std::abs(nrm.X_value - brute) <= 1e-12 * brute);
    CHECK(nrm.X_value >= nrm.sup_term);
    CHECK(norm_parabolic(s, 0.1).X_value <= nrm.X_value);
    CHECK_THROWS_AS(norm_parabolic(s, 0.5), InvalidArgument);
  }
}
