#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/singular.hpp"

using namespace rdtf;

TEST_CASE("singular kinds and co-dimension") {
  CHECK(parse_singular_kind("dust") == SingularKind::Dust);
  CHECK(singular_kind_name(SingularKind::Segment) == "segment");
  CHECK_THROWS_AS(parse_singular_kind("plane"), InvalidArgument);
  SingularSpec s;
  CHECK(declared_alpha(s, 3) == 3.0);
  s.kind = SingularKind::Dust;
  CHECK(declared_alpha(s, 3) == doctest::Approx(3 - std::log(4.0) / std::log(3.0)));
  CHECK(within_hypotheses(s, 3) == false);  // alpha = 1.74
  s.kind = SingularKind::Segment;
  CHECK(declared_alpha(s, 3) == 2.0);
  CHECK_FALSE(within_hypotheses(s, 3));
}

TEST_CASE("conformal family") {
  const Lattice l(3, 32, 2.0);
  SingularSpec s;
  SUBCASE("zero amplitude is flat") {
    const auto g = generate_metric(s, l);
    CHECK(g.metric.h().max_abs() == 0.0);
    CHECK(g.report.eps_measured == 0.0);
  }
  SUBCASE("two dimensions are rejected") {
    CHECK_THROWS_AS(generate_metric(s, Lattice(2, 32, 2.0)), InvalidArgument);
  }
  SUBCASE("point data: validity report") {
    s.amplitude = 0.02;
    const auto g = generate_metric(s, l, 0.2);
    const auto& r = g.report;
    CHECK(r.r0 == doctest::Approx(4 * l.spacing()));
    CHECK(r.cap_radius <= 2 * l.spacing() * (1 + 1e-12));
    CHECK(r.lambda_max <= r.lambda_bound * (1 + 1e-12));
    CHECK(r.lambda_min >= 1.0 - 1e-12);  // u >= 1
    CHECK(r.eps_ok);
    CHECK(r.within_hypotheses);
    // u = 1 + a min(cap, r0/d) at the anchor node: the cap value
    const std::size_t x0 = l.node({16, 16, 16});
    CHECK(g.conformal(x0) == doctest::Approx(1 + 0.02 * r.cap));
    CHECK(g.metric.h().at(x0, 0, 0) == doctest::Approx(std::pow(1 + 0.02 * r.cap, 4) - 1));
  }
  SUBCASE("eps grows linearly in the amplitude") {
    std::vector<double> a{0.001, 0.002, 0.004}, e;
    for (double v : a) {
      s.amplitude = v;
      e.push_back(generate_metric(s, l).report.eps_measured);
    }
    CHECK(oracle::log_slope(a, e) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("dust anchors stay in the central box") {
    s.kind = SingularKind::Dust;
    s.depth = 2;
    const auto pts = singular_points(s, l);
    CHECK(pts.size() == 16);  // 2^k x 2^k interval midpoints
    for (const Point& p : pts)
      for (int a = 0; a < 3; ++a) CHECK(std::abs(p[a]) <= 0.25 * l.extent());
  }
  SUBCASE("anchors outside the central box are rejected") {
    s.amplitude = 0.01;
    s.anchor = Point{0.7, 0.0, 0.0};
    CHECK_THROWS_AS(generate_metric(s, l), InvalidArgument);
  }
}

TEST_CASE("tube masks") {
  const Lattice l(3, 32, 2.0);
  const std::vector<Point> p{Point{0.05, -0.1, 0.2}};
  const auto small = tube_mask(p, 0.2, l), big = tube_mask(p, 0.4, l);
  for (std::size_t x = 0; x < l.node_count(); ++x)
    if (small.mask[x]) CHECK(big.mask[x]);
  CHECK(small.count < big.count);
  CHECK(big.measure == doctest::Approx(4.0 / 3.0 * M_PI * 0.064).epsilon(0.1));
  CHECK(big.measure == doctest::Approx(double(big.count) * l.cell_volume()));
  CHECK_THROWS_AS(tube_mask(p, 0.5, l), InvalidArgument);
  std::vector<Point> all;
  for (std::size_t x = 0; x < l.node_count(); ++x) all.push_back(l.position(x));
  CHECK(tube_mask(all, l.spacing(), l).measure == doctest::Approx(8.0));
}

TEST_CASE("minkowski content") {
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 / 3.0 * M_PI));
  CHECK(unit_ball_volume(0) == doctest::Approx(1.0));
  const Lattice l(3, 128, 2.0);
  const auto est = minkowski_content({Point{}}, 0.0, l, l.spacing(), l.extent() / 8);
  REQUIRE(est.radii.size() >= 5);
  // |T(p, r)| = (4/3) pi r^3; the content at m = 0 is |T| / (alpha(3) r^3)
  for (std::size_t i = 0; i < est.radii.size(); ++i)
    if (est.radii[i] >= 8 * l.spacing()) CHECK(est.content[i] == doctest::Approx(1.0).epsilon(0.15));
  std::vector<double> r, v;  // the r = dx rung is node-count dominated
  for (std::size_t i = 0; i < est.radii.size(); ++i)
    if (est.radii[i] >= 4 * l.spacing()) r.push_back(est.radii[i]), v.push_back(est.measure[i]);
  CHECK(std::abs(3 - oracle::log_slope(r, v)) < 0.15);
  CHECK_THROWS_AS(minkowski_content({Point{}}, 4.0, l), InvalidArgument);
  CHECK_THROWS_AS(minkowski_content({Point{}}, 0.0, Lattice(3, 16, 2.0)), InvalidArgument);
}
