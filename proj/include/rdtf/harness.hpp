#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdtf/kernels.hpp"
#include "rdtf/singular.hpp"

namespace rdtf {

using Json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Report --------------------------------------------------------------------------

struct CheckRecord {
  std::string name;
  std::string anchor;  // the inequality under test; the writer rejects empty anchors
  Json constants = Json::object();
  double tolerance = 0.0;
  double margin = 0.0;
  bool pass = false;
  bool vacuous = false;      // nothing to test at this configuration
  bool exploratory = false;  // outside the hypotheses: recorded, never asserted
  std::string note;
  Json series = Json::object();  // plot data, column name -> values
};

struct EstimateReport {
  std::string scenario;
  Json environment = Json::object();
  std::vector<CheckRecord> checks;
  std::string failed_stage, failure;
  double runtime = 0.0;
  bool deterministic = false;

  /// True when every asserted (non-exploratory) check passed and no stage failed.
  bool all_pass() const;
  const CheckRecord* find(std::string_view name) const;
};

Json to_json(const EstimateReport& r);
/// Serialises the report; throws FormatError if a check has no anchor.
std::string report_text(const EstimateReport& r);
void write_report(const EstimateReport& r, const std::filesystem::path& path);

// Tolerances ----------------------------------------------------------------------

/// Richardson error estimate at N from values at N and N/2 for a scheme of
/// order p: |q_N - q_{N/2}| / (2^p - 1).
double ladder_tolerance(double fine, double coarse, int order = 1);

// Initial data --------------------------------------------------------------------

/// Piecewise-constant random symmetric perturbation on blocks of `block` nodes
/// per axis, scaled so that sup |h|_op = amplitude.
Sym2Field noise_perturbation(const Lattice& l, double amplitude, int block, std::uint64_t seed);
/// Sum of a few random low Fourier modes, scaled so that sup |h|_op = amplitude.
Sym2Field smooth_perturbation(const Lattice& l, double amplitude, std::uint64_t seed);

// Checks --------------------------------------------------------------------------

struct BetaWeakOptions {
  double beta = 0.1;
  double kappa0 = 0.0;
  std::vector<double> C_ladder{1.0, 2.0, 4.0};
  int probes = 8;
  std::uint64_t seed = 1;
  std::vector<Point> probe_points;  // explicit probes (otherwise sampled)
  double tol_grid = 0.0;
  double reliable_dx2 = 16.0;       // smallest reliable t in units of dx^2
};
CheckRecord check_beta_weak(const FlowTrajectory& traj, const std::vector<Point>& S,
                            const BetaWeakOptions& opt);

struct SpatialOptions {
  double beta = 0.1;
  double kappa0 = 0.0;
  double eta = -1.0;      // < 0: (1 - 2 beta) / 2
  double t_max = 0.0;     // early window; 0: horizon / 4
  double r_domain = 0.0;  // shells restricted to |x| < r_domain; 0: L/4 (untapered core)
  double band_sqrt_t = 3.0;  // and to |x| < r_domain - band_sqrt_t sqrt(t)
};
CheckRecord check_spatial_lower_bound(const FlowTrajectory& traj, const std::vector<Point>& S,
                                      const SpatialOptions& opt);

struct NnscOptions {
  std::vector<double> tol_grid;  // per slice (matched by time) or a single value
  double t_resolve = 0.0;        // 0: 64 dx^2
  bool exploratory = false;
};
CheckRecord check_global_nnsc(const FlowTrajectory& traj, const NnscOptions& opt);

CheckRecord check_ck_bounds(const FlowTrajectory& traj, const NodeMask& U, int k,
                            const std::vector<Point>& S);

CheckRecord check_max_principle(const FlowTrajectory& traj, const std::vector<double>& tol_grid,
                                double t_resolve = 0.0);

CheckRecord check_derivative_decay(const FlowTrajectory& traj, int k, double t_lo, double t_hi,
                                   double lo = -0.7, double hi = -0.3);

struct PairingTolerance {
  double C = 0.0;      // fitted scheme-order constant
  double step = 0.0;   // per slice pair: dt * C (dx^2 + dt)
  double early = 0.0;  // accumulated over the window
};
/// C from a calibration series: max Green-identity rate error / (dx^2 + dt).
PairingTolerance pairing_tolerance(const PairingSeries& calibration, double dx, double dt,
                                   double window);
CheckRecord check_pairing(const PairingSeries& s, const PairingTolerance& tol);

/// Slice-wise min R (optionally over a mask) as a series.
std::vector<double> min_scalar_series(const FlowTrajectory& traj, const NodeMask* mask = nullptr);

// Scenarios -----------------------------------------------------------------------

struct ScenarioConfig {
  std::string name = "scenario";
  // [lattice]
  int dim = 3;
  int N = 0;
  double L = 2.0 * M_PI;
  // [initial]
  std::string kind = "flat";  // flat | noise | smooth | singular | bump
  double amplitude = 0.0;
  std::uint64_t seed = 1;
  int block = 0;              // noise block in nodes (0: N/2)
  SingularSpec singular;
  double sigma = 0.0;         // bump width (0: L/10)
  double eps_bar = 0.2;
  // [flow]
  double horizon = 0.0;
  double cfl_sigma = 0.25;
  int uniform_count = 16;
  std::vector<double> extra_dx2;
  // [checks]
  std::vector<std::string> checks;
  double beta = 0.1, kappa0 = 0.0, eta = -1.0;
  std::vector<double> C_ladder{1.0, 2.0, 4.0};
  int probes = 8;
  bool ladder = false;
  int ladder_order = 1;
  int ck_order = 1;
  int decay_order = 1;
  double decay_from_dx2 = 1.0;
  Point pairing_point{};
  double pairing_from = 1.0 / 16.0;  // backward window [t1 * pairing_from, t1]
  double early_fraction = 0.25;
  double inject_floor = 0.0;  // subtract from every stored R (negative control)
  // [output]
  std::filesystem::path out_dir;
  bool csv = true;
  bool svg = true;
  bool save_trajectory = false;
};

/// Parses the sectioned key-value file. Unknown keys and missing required keys
/// (named as section.key) raise ConfigError.
ScenarioConfig parse_config(const std::filesystem::path& path);
ScenarioConfig parse_config_text(const std::string& text);

struct RunOptions {
  bool deterministic = false;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;  // overrides [output] dir when non-empty
  bool write_outputs = true;
};

struct ScenarioResult {
  EstimateReport report;
  FlowTrajectory traj;
  std::optional<FlowTrajectory> coarse;
  std::optional<ValidityReport> validity;
  std::optional<PairingSeries> pairing;
  std::vector<Point> singular_set;
};

MetricField initial_metric(const ScenarioConfig& c, const Lattice& l,
                           std::optional<ValidityReport>* validity = nullptr);
ScenarioResult execute_scenario(const ScenarioConfig& c, const RunOptions& opt = {});
EstimateReport run_scenario(const std::filesystem::path& config, const RunOptions& opt = {});

// Plots ---------------------------------------------------------------------------

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};
void svg_line_plot(const std::filesystem::path& path, const std::string& title,
                   const std::string& xlabel, const std::string& ylabel,
                   const std::vector<SvgSeries>& series, bool logx = false, bool logy = false);
/// One SVG per check with a non-empty series block.
std::vector<std::filesystem::path> plot_report(const Json& report, const std::filesystem::path& dir);

}  // namespace rdtf
