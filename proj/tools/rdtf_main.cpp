// Command-line front end: run | verify | content | plot.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rdtf/harness.hpp"

namespace {

using namespace rdtf;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// x,y[,z[,w]] per row; a non-numeric first row is taken as a header.
std::vector<Point> read_points(const std::filesystem::path& p) {
  std::vector<Point> out;
  for (const auto& row : parse_csv(slurp(p))) {
    if (row.empty() || (row.size() == 1 && row[0].empty())) continue;
    Point q{};
    try {
      for (std::size_t a = 0; a < row.size() && a < kMaxDim; ++a) q[a] = std::stod(row[a]);
    } catch (const std::logic_error&) {
      if (out.empty()) continue;
      throw FormatError("bad point row in " + p.string());
    }
    out.push_back(q);
  }
  return out;
}

void print_report(const EstimateReport& r) {
  for (const auto& c : r.checks)
    fmt::print("{:<20} {:<5} margin {:>11.4e}  tol {:>10.3e}{}{}\n", c.name,
               c.pass ? "pass" : "FAIL", c.margin, c.tolerance, c.vacuous ? "  [vacuous]" : "",
               c.exploratory ? "  [exploratory]" : "");
  if (!r.failed_stage.empty()) fmt::print("failed at {}: {}\n", r.failed_stage, r.failure);
  fmt::print("{}\n", r.all_pass() ? "all checks pass" : "some checks fail");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ricci-DeTurck flow estimate harness"};
  app.require_subcommand(1);
  bool deterministic = false;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_flag("--deterministic", deterministic, "Fixed reduction order; omit runtimes from reports");
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.fallthrough();  // global flags are accepted after the subcommand too

  auto* run = app.add_subcommand("run", "Run a scenario config");
  std::string config;
  run->add_option("config", config, "Scenario config file")->required()->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Run checks on a saved trajectory");
  std::string manifest, points_csv;
  std::vector<std::string> checks;
  double beta = 0.1, kappa0 = 0.0, decay_from = 1.0;
  int k = 1;
  verify->add_option("manifest", manifest, "Trajectory manifest.json")->required()->check(CLI::ExistingFile);
  verify->add_option("--checks", checks, "Checks to run")->delimiter(',')->required();
  verify->add_option("--points", points_csv, "Singular set as a point CSV");
  verify->add_option("--beta", beta);
  verify->add_option("--kappa0", kappa0);
  verify->add_option("--k", k, "Derivative order for ck_bounds / derivative_decay");
  verify->add_option("--decay-from", decay_from, "Decay window start in units of dx^2");

  auto* content = app.add_subcommand("content", "Minkowski content of a point set");
  double m = 0.0, L = 2 * M_PI;
  int N = 256, dim = 3;
  content->add_option("points", points_csv, "Point CSV")->required()->check(CLI::ExistingFile);
  content->add_option("m", m, "Content dimension")->required();
  content->add_option("--N", N, "Lattice resolution");
  content->add_option("--L", L, "Box side");
  content->add_option("--dim", dim, "Ambient dimension");

  auto* plot = app.add_subcommand("plot", "Render SVG plots from a report");
  std::string report;
  plot->add_option("report", report, "report.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help is not an error
  }

  try {
    if (*run) {
      RunOptions o;
      o.deterministic = deterministic;
      o.seed = seed;
      o.out_dir = out_dir;
      const EstimateReport r = run_scenario(config, o);
      print_report(r);
      return r.all_pass() ? 0 : 1;
    }
    if (*verify) {
      const FlowTrajectory traj = load_trajectory(manifest);
      const std::vector<Point> S = points_csv.empty() ? std::vector<Point>{} : read_points(points_csv);
      EstimateReport r;
      r.scenario = std::filesystem::path(manifest).parent_path().filename().string();
      r.deterministic = deterministic;
      const Lattice& l = traj.lattice();
      r.environment = {{"dim", l.dim()}, {"N", l.resolution()}, {"L", l.extent()}, {"dt", traj.dt}};
      for (const auto& c : checks) {
        if (c == "global_nnsc") {
          r.checks.push_back(check_global_nnsc(traj, {}));
        } else if (c == "max_principle") {
          r.checks.push_back(check_max_principle(traj, {}));
        } else if (c == "derivative_decay") {
          const double t_lo = decay_from * l.spacing() * l.spacing();
          r.checks.push_back(check_derivative_decay(traj, k, t_lo, 10 * t_lo));
        } else if (c == "beta_weak") {
          BetaWeakOptions o;
          o.beta = beta;
          o.kappa0 = kappa0;
          if (seed) o.seed = *seed;
          r.checks.push_back(check_beta_weak(traj, S, o));
        } else if (c == "spatial_lower_bound") {
          SpatialOptions o;
          o.beta = beta;
          o.kappa0 = kappa0;
          r.checks.push_back(check_spatial_lower_bound(traj, S, o));
        } else if (c == "ck_bounds") {
          NodeMask U(l.node_count(), 1);
          for (std::size_t x = 0; x < l.node_count(); ++x)
            for (const Point& s : S)
              if (l.distance(l.position(x), s) < l.extent() / 8) U[x] = 0;
          r.checks.push_back(check_ck_bounds(traj, U, k, S));
        } else {
          throw InvalidArgument("unknown or trajectory-incompatible check '" + c + "'");
        }
      }
      if (!out_dir.empty()) write_report(r, std::filesystem::path(out_dir) / "report.json");
      else std::cout << report_text(r);
      print_report(r);
      return r.all_pass() ? 0 : 1;
    }
    if (*content) {
      const Lattice l(dim, N, L);
      const MinkowskiEstimate e = minkowski_content(read_points(points_csv), m, l);
      fmt::print("dimension {:.4f}  content(r_min) {:.4f}  slope {:.4f}\n", e.dimension, e.content_at_min, e.slope);
      for (std::size_t i = 0; i < e.radii.size(); ++i)
        fmt::print("  r {:.5f}  |T| {:.6e}  content {:.5f}\n", e.radii[i], e.measure[i], e.content[i]);
      return 0;
    }
    if (*plot) {
      const Json j = Json::parse(slurp(report));
      const auto dir = out_dir.empty() ? std::filesystem::path(report).parent_path() : std::filesystem::path(out_dir);
      for (const auto& p : plot_report(j, dir)) fmt::print("{}\n", p.string());
      return 0;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
