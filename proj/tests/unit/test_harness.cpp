#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "oracles.hpp"
#include "rdtf/harness.hpp"

using namespace rdtf;

namespace {

const char* kFlat = R"(
[lattice]
dim = 3
N = 8
L = 1.0
[initial]
kind = flat
[flow]
horizon = 0.2
[checks]
run = beta_weak, spatial_lower_bound, global_nnsc, ck_bounds, max_principle
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config_text(kFlat);
  CHECK(c.N == 8);
  CHECK(c.L == 1.0);
  CHECK(c.checks.size() == 5);
  CHECK(c.checks[1] == "spatial_lower_bound");
  try {
    (void)parse_config_text("[lattice]\ndim = 3\n[initial]\nkind = flat\n[flow]\nhorizon = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lattice.N") != std::string::npos);
  }
  try {
    std::string t = kFlat;
    t.insert(t.find("horizon"), "horiz = 2\n");
    (void)parse_config_text(t);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("flow.horiz") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(std::string(kFlat) + "[nowhere]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(RDTF_CONFIG_DIR "/missing.ini"), Error);
  for (const char* name : {"flat", "bump_negative", "headline", "noise", "injected_floor"})
    CHECK_NOTHROW(parse_config(std::filesystem::path(RDTF_CONFIG_DIR) / (std::string(name) + ".ini")));
}

TEST_CASE("report serialisation") {
  EstimateReport r;
  r.scenario = "x";
  CheckRecord c;
  c.name = "global_nnsc";
  r.checks.push_back(c);
  CHECK_THROWS_AS(report_text(r), FormatError);
  r.checks.back().anchor = "R >= 0";
  r.checks.back().pass = true;
  const Json j = Json::parse(report_text(r));
  CHECK(j["checks"][0]["anchor"] == "R >= 0");
  CHECK(r.all_pass());
  CheckRecord e = c;
  e.anchor = "a";
  e.exploratory = true;  // recorded, never asserted
  r.checks.push_back(e);
  CHECK(r.all_pass());
  r.failed_stage = "evolve";
  CHECK_FALSE(r.all_pass());
}

TEST_CASE("ladder tolerance") {
  CHECK(ladder_tolerance(1.0, 1.3) == doctest::Approx(0.3));
  CHECK(ladder_tolerance(1.0, 1.3, 2) == doctest::Approx(0.1));
}

TEST_CASE("flat scenario: trivial passes, deterministic bytes, outputs") {
  const auto dir = std::filesystem::temp_directory_path() / "rdtf_harness_flat";
  std::filesystem::remove_all(dir);
  RunOptions o;
  o.deterministic = true;
  o.out_dir = dir / "a";
  const auto a = execute_scenario(parse_config_text(kFlat), o);
  CHECK(a.report.all_pass());
  for (const auto& c : a.report.checks) {
    CHECK_FALSE(c.anchor.empty());
    CHECK(c.margin >= 0.0);
  }
  o.out_dir = dir / "b";
  (void)execute_scenario(parse_config_text(kFlat), o);
  const std::string ja = slurp(dir / "a" / "report.json");
  CHECK(!ja.empty());
  CHECK(ja == slurp(dir / "b" / "report.json"));
  CHECK(ja.find("runtime") == std::string::npos);
  CHECK(std::filesystem::exists(dir / "a" / "slices.csv"));
  CHECK(std::filesystem::exists(dir / "a" / "max_principle.svg"));
  const auto rows = parse_csv(slurp(dir / "a" / "max_principle.csv"));
  CHECK(rows.size() >= 3);
  CHECK(slurp(dir / "a" / "max_principle.svg").rfind("<svg", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("negative controls") {
  const Lattice l(3, 32, 2 * M_PI);
  const double dx = l.spacing();
  StorePolicy p;
  p.uniform_count = 8;
  SUBCASE("a negative-R bump away from S gives a growing deficit profile") {
    // deficits peak 7dx from S: the outer shell carries more than the inner one
    const auto traj = evolve(conformal_bump(l, -0.05, 2 * dx), 16 * dx * dx, p);
    const auto rec = check_spatial_lower_bound(traj, {Point{7 * dx, 0, 0}}, SpatialOptions{});
    CHECK_FALSE(rec.vacuous);
    CHECK_FALSE(rec.pass);
    CHECK(rec.margin < 0.0);
  }
  SUBCASE("global nonnegativity fails for a negative bump") {
    const auto traj = evolve(conformal_bump(l, -0.05, 2 * dx), 0.5, p);
    NnscOptions o;
    o.t_resolve = 2 * dx * dx;
    CHECK_FALSE(check_global_nnsc(traj, o).pass);
    // the maximum-principle floor -n/2t is far below
    CHECK(check_max_principle(traj, {0.0}, 2 * dx * dx).pass);
  }
  SUBCASE("beta_weak drops probes inside the 4dx tube") {
    const auto traj = evolve(MetricField::flat(l), 0.5, p);
    BetaWeakOptions o;
    o.probe_points = {Point{dx, 0, 0}, Point{1.5, 0.5, 0}};
    o.reliable_dx2 = 1.0;
    const auto rec = check_beta_weak(traj, {Point{}}, o);
    CHECK(rec.pass);
    CHECK(rec.note.find("probe excluded") != std::string::npos);
  }
}

TEST_CASE("perturbation generators are seeded") {
  const Lattice l(3, 16, 2.0);
  const auto a = noise_perturbation(l, 0.05, 8, 7), b = noise_perturbation(l, 0.05, 8, 7);
  CHECK(a == b);
  CHECK(perturbation_sup(a) == doctest::Approx(0.05));
  CHECK_FALSE(a == noise_perturbation(l, 0.05, 8, 8));
  CHECK(perturbation_sup(smooth_perturbation(l, 0.01, 3)) == doctest::Approx(0.01));
}
