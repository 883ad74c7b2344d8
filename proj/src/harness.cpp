#include "rdtf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace rdtf {

namespace {

// Statements the checks test; cited verbatim in every record.
constexpr const char* kAnchorBetaWeak =
    "liminf_{t->0} inf_{B(x, C t^beta)} R(g_t) >= kappa0 at every x off S";
constexpr const char* kAnchorSpatial =
    "R(x,t) >= kappa0 - (Cbar/t) exp(-d(x,S)^2 / (Dbar t^{1-2beta})) off T(S, cbar t^eta)";
constexpr const char* kAnchorNnsc = "R(g_t) >= 0 for all t > 0";
constexpr const char* kAnchorCk =
    "|grad^k g_t|_{C^0(U)} <= C_k as t -> 0, g_t -> g smoothly on U away from S";
constexpr const char* kAnchorMaxPrinciple = "R(g_t) >= -n/(2t) for all t > 0";
constexpr const char* kAnchorDecay = "|grad^k (g_t - delta)| <= eps / t^{k/2}";
constexpr const char* kAnchorPairing = "R(p,t1) >= int R(x,t) u(x,t) dg_t(x), nondecreasing in t";

constexpr double kRel = 1e-9;

struct LineFit {
  double slope = 0.0, intercept = 0.0, residual = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i)
    f.residual = std::max(f.residual, std::abs(y[i] - f.intercept - f.slope * x[i]));
  return f;
}

CheckRecord make_record(std::string name, std::string anchor) {
  CheckRecord r;
  r.name = std::move(name);
  r.anchor = std::move(anchor);
  return r;
}

double finite_or(double v, double fallback = 0.0) { return std::isfinite(v) ? v : fallback; }

double dx2(const FlowTrajectory& traj) {
  const double dx = traj.lattice().spacing();
  return dx * dx;
}

// Minimum-image distance from every node to the nearest point of S (inf if S is empty).
std::vector<double> distance_to_set(const std::vector<Point>& S, const Lattice& l) {
  std::vector<double> d(l.node_count(), std::numeric_limits<double>::infinity());
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const Point p = l.position(x);
    for (const Point& s : S) d[x] = std::min(d[x], l.distance(p, s));
  }
  return d;
}

double masked_min(const ScalarField& f, const NodeMask& m) {
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < f.nodes(); ++x)
    if (m[x]) v = std::min(v, f(x));
  return v;
}

Json to_array(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(finite_or(x));
  return a;
}

Json make_series(const std::string& x, bool logx, bool logy,
                 std::vector<std::pair<std::string, std::vector<double>>> cols) {
  Json c = Json::object();
  for (auto& [k, v] : cols) c[k] = to_array(v);
  return Json{{"x", x}, {"logx", logx}, {"logy", logy}, {"columns", std::move(c)}};
}

}  // namespace

// Report --------------------------------------------------------------------------

bool EstimateReport::all_pass() const {
  if (!failed_stage.empty()) return false;
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckRecord& c) { return c.exploratory || c.pass; });
}

const CheckRecord* EstimateReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

Json to_json(const EstimateReport& r) {
  Json j;
  j["scenario"] = r.scenario;
  j["environment"] = r.environment;
  j["deterministic"] = r.deterministic;
  if (!r.deterministic) j["runtime_s"] = r.runtime;
  if (!r.failed_stage.empty()) j["failure"] = {{"stage", r.failed_stage}, {"cause", r.failure}};
  Json checks = Json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"anchor", c.anchor},
                      {"constants", c.constants},
                      {"tolerance", finite_or(c.tolerance)},
                      {"margin", finite_or(c.margin)},
                      {"pass", c.pass},
                      {"vacuous", c.vacuous},
                      {"exploratory", c.exploratory},
                      {"note", c.note},
                      {"series", c.series}});
  }
  j["checks"] = std::move(checks);
  j["all_pass"] = r.all_pass();
  return j;
}

std::string report_text(const EstimateReport& r) {
  for (const auto& c : r.checks)
    if (c.anchor.empty()) throw FormatError("check '" + c.name + "' has no anchor");
  return to_json(r).dump(2) + "\n";
}

void write_report(const EstimateReport& r, const std::filesystem::path& path) {
  const std::string text = report_text(r);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Tolerances ----------------------------------------------------------------------

double ladder_tolerance(double fine, double coarse, int order) {
  if (order < 1) throw InvalidArgument("ladder order must be >= 1");
  return std::abs(fine - coarse) / (std::ldexp(1.0, order) - 1.0);
}

namespace {

double interp(const std::vector<double>& t, const std::vector<double>& v, double s) {
  if (s <= t.front()) return v.front();
  if (s >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
  const double th = (s - t[i]) / (t[i + 1] - t[i]);
  return (1 - th) * v[i] + th * v[i + 1];
}

// Per fine-slice tolerance from the slice-wise min R at N and N/2.
std::vector<double> slice_tolerance(const FlowTrajectory& fine, const FlowTrajectory* coarse,
                                    int order) {
  std::vector<double> tol(fine.slices.size(), 0.0);
  if (!coarse) return tol;
  std::vector<double> tc, mc;
  for (const auto& s : coarse->slices) {
    tc.push_back(s.time);
    mc.push_back(s.diag.min_R);
  }
  for (std::size_t i = 0; i < fine.slices.size(); ++i)
    tol[i] = ladder_tolerance(fine.slices[i].diag.min_R, interp(tc, mc, fine.slices[i].time), order);
  return tol;
}

double tol_at(const std::vector<double>& tol, std::size_t i) {
  if (tol.empty()) return 0.0;
  return tol.size() == 1 ? tol[0] : tol.at(i);
}

}  // namespace

// Initial data --------------------------------------------------------------------

namespace {

void scale_to(Sym2Field& h, double amplitude) {
  const double s = perturbation_sup(h);
  if (s > 0) h *= amplitude / s;
}

}  // namespace

Sym2Field noise_perturbation(const Lattice& l, double amplitude, int block, std::uint64_t seed) {
  const int N = l.resolution(), n = l.dim();
  if (block < 1 || N % block != 0) throw InvalidArgument("noise block must divide N");
  const int nb = N / block;
  std::size_t blocks = 1;
  for (int a = 0; a < n; ++a) blocks *= static_cast<std::size_t>(nb);
  const int sc = sym_count(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> vals(blocks * sc);
  for (double& v : vals) v = U(rng);
  Sym2Field h(l);
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const MultiIndex mi = l.multi_index(x);
    std::size_t b = 0;
    for (int a = 0; a < n; ++a) b = b * nb + static_cast<std::size_t>(mi[a] / block);
    for (int c = 0; c < sc; ++c) h(x, c) = vals[b * sc + c];
  }
  scale_to(h, amplitude);
  return h;
}

Sym2Field smooth_perturbation(const Lattice& l, double amplitude, std::uint64_t seed) {
  const int n = l.dim(), sc = sym_count(n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> K(-2, 2);
  std::uniform_real_distribution<double> U(-1.0, 1.0), Ph(0.0, 2.0 * M_PI);
  Sym2Field h(l);
  const double w = 2.0 * M_PI / l.extent();
  for (int c = 0; c < sc; ++c)
    for (int m = 0; m < 3; ++m) {
      std::array<int, kMaxDim> k{};
      for (int a = 0; a < n; ++a) k[a] = K(rng);
      const double amp = U(rng), ph = Ph(rng);
      for (std::size_t x = 0; x < l.node_count(); ++x) {
        const Point p = l.position(x);
        double arg = ph;
        for (int a = 0; a < n; ++a) arg += w * k[a] * p[a];
        h(x, c) += amp * std::cos(arg);
      }
    }
  scale_to(h, amplitude);
  return h;
}

std::vector<double> min_scalar_series(const FlowTrajectory& traj, const NodeMask* mask) {
  std::vector<double> out;
  for (const auto& s : traj.slices)
    out.push_back(mask ? masked_min(s.scalar, *mask) : s.diag.min_R);
  return out;
}

// beta-weak -------------------------------------------------------------------------

CheckRecord check_beta_weak(const FlowTrajectory& traj, const std::vector<Point>& S,
                            const BetaWeakOptions& opt) {
  if (!(opt.beta > 0 && opt.beta < 0.5)) throw InvalidArgument("beta must lie in (0, 1/2)");
  const Lattice& l = traj.lattice();
  const double L = l.extent(), dx = l.spacing();
  CheckRecord rec = make_record("beta_weak", kAnchorBetaWeak);

  std::vector<Point> probes;
  std::vector<std::string> notes;
  auto near_set = [&](const Point& p, double r) {
    return std::any_of(S.begin(), S.end(), [&](const Point& s) { return l.distance(p, s) < r; });
  };
  if (!opt.probe_points.empty()) {
    for (const Point& p : opt.probe_points) {
      if (near_set(p, 4 * dx))
        notes.push_back(fmt::format("probe excluded ({:.4g}, {:.4g}) inside T(S, 4dx)", p[0], p[1]));
      else
        probes.push_back(p);
    }
  } else {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> U(-0.5 * L, 0.5 * L);
    for (int tries = 0; static_cast<int>(probes.size()) < opt.probes && tries < 1000 * opt.probes; ++tries) {
      Point p{};
      for (int a = 0; a < l.dim(); ++a) p[a] = U(rng);
      if (!near_set(p, L / 16)) probes.push_back(p);
    }
  }

  const double t_rel = opt.reliable_dx2 * dx * dx;
  std::size_t proxy_idx = traj.slices.size();
  for (std::size_t i : traj.primary_indices())
    if (traj.slices[i].time >= t_rel * (1 - kRel)) {
      proxy_idx = i;
      break;
    }

  double worst = std::numeric_limits<double>::infinity();
  int skipped = 0;
  Json cols = Json::object();
  std::vector<double> tcol;
  for (std::size_t i : traj.primary_indices())
    if (traj.slices[i].time > 0) tcol.push_back(traj.slices[i].time);
  std::vector<std::pair<std::string, std::vector<double>>> series{{"t", tcol}};
  Json proxies = Json::array();
  for (double C : opt.C_ladder) {
    std::vector<double> col;
    for (std::size_t i : traj.primary_indices()) {
      const auto& s = traj.slices[i];
      if (s.time <= 0) continue;
      const double r = C * std::pow(s.time, opt.beta);
      if (r >= 0.5 * L) {
        ++skipped;
        col.push_back(std::nan(""));
        continue;
      }
      double m = std::numeric_limits<double>::infinity();
      for (const Point& p : probes) {
        NodeMask ball = restrict_ball(l, p, std::max(r, 0.5 * dx * std::sqrt(double(l.dim())) + 1e-12));
        const double v = masked_min(s.scalar, ball);
        m = std::min(m, v);
        if (i == proxy_idx) proxies.push_back({{"C", C}, {"probe", {p[0], p[1], p[2]}}, {"value", v}});
      }
      col.push_back(m);
      if (i == proxy_idx) worst = std::min(worst, m);
    }
    series.push_back({fmt::format("inf_R_C{}", C), col});
  }
  if (skipped) notes.push_back(fmt::format("{} (C, t) pairs skipped: ball radius >= L/2", skipped));

  rec.constants = {{"beta", opt.beta}, {"kappa0", opt.kappa0}, {"C_ladder", opt.C_ladder},
                   {"probes", probes.size()}, {"t_reliable", t_rel}};
  rec.tolerance = opt.tol_grid;
  rec.series = make_series("t", true, false, series);
  if (probes.empty() || proxy_idx == traj.slices.size() || !std::isfinite(worst)) {
    rec.pass = true;
    rec.vacuous = true;
    notes.push_back(probes.empty() ? "no admissible probe"
                                   : "no stored slice with t >= 16 dx^2: nothing to test");
  } else {
    rec.constants["t_proxy"] = traj.slices[proxy_idx].time;
    rec.constants["proxy_min"] = worst;
    rec.constants["proxies"] = proxies;
    rec.margin = worst - (opt.kappa0 - opt.tol_grid);
    rec.pass = rec.margin >= 0;
  }
  notes.push_back("liminf proxy: value at the smallest stored t >= 16 dx^2 (measurement convention)");
  for (std::size_t k = 0; k < notes.size(); ++k) rec.note += (k ? "; " : "") + notes[k];
  return rec;
}

// Spatial lower bound ---------------------------------------------------------------

CheckRecord check_spatial_lower_bound(const FlowTrajectory& traj, const std::vector<Point>& S,
                                      const SpatialOptions& opt) {
  if (!(opt.beta > 0 && opt.beta < 0.5)) throw InvalidArgument("beta must lie in (0, 1/2)");
  const double eta_max = 0.5 * (1 - 2 * opt.beta);
  const double eta = opt.eta < 0 ? eta_max : opt.eta;
  if (!(eta > 0 && eta <= eta_max + 1e-15)) throw InvalidArgument("eta must lie in (0, (1 - 2 beta)/2]");
  const Lattice& l = traj.lattice();
  const double dx = l.spacing();
  const double t_max = opt.t_max > 0 ? opt.t_max : traj.horizon / 4;
  const double r_dom = opt.r_domain > 0 ? opt.r_domain : l.extent() / 4;
  CheckRecord rec = make_record("spatial_lower_bound", kAnchorSpatial);

  const std::vector<double> dist = distance_to_set(S, l);
  const double rho0 = 3 * dx;
  std::vector<double> shells;
  for (double r = rho0; r < r_dom; r *= 2) shells.push_back(r);
  std::vector<int> shell_of(l.node_count(), -1);
  std::vector<double> radius(l.node_count());
  const Point origin{};
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    radius[x] = l.distance(l.position(x), origin);
    if (radius[x] >= r_dom || !std::isfinite(dist[x]) || dist[x] < rho0) continue;
    const int k = static_cast<int>(std::floor(std::log2(dist[x] / rho0)));
    if (k >= 0 && k < static_cast<int>(shells.size())) shell_of[x] = k;
  }

  std::vector<double> X, Y, all_t, all_rho, all_def;
  const double cbar = rho0 / std::pow(t_max, eta);
  for (std::size_t i : traj.primary_indices()) {
    const auto& s = traj.slices[i];
    if (s.time <= 0 || s.time > t_max * (1 + kRel)) continue;
    // Keep clear of whatever diffuses in from outside the domain by time t.
    const double reach = r_dom - opt.band_sqrt_t * std::sqrt(s.time);
    std::vector<double> mins(shells.size(), std::numeric_limits<double>::infinity());
    for (std::size_t x = 0; x < l.node_count(); ++x)
      if (shell_of[x] >= 0 && radius[x] < reach) mins[shell_of[x]] = std::min(mins[shell_of[x]], s.scalar(x));
    for (std::size_t k = 0; k < shells.size(); ++k) {
      if (!std::isfinite(mins[k]) || shells[k] < cbar * std::pow(s.time, eta) * (1 - kRel)) continue;
      const double def = std::max(0.0, opt.kappa0 - mins[k]);
      all_t.push_back(s.time);
      all_rho.push_back(shells[k]);
      all_def.push_back(def);
      if (def > 0) {
        X.push_back(shells[k] * shells[k] / std::pow(s.time, 1 - 2 * opt.beta));
        Y.push_back(std::log(s.time * def));
      }
    }
  }
  rec.constants = {{"beta", opt.beta}, {"kappa0", opt.kappa0}, {"eta", eta}, {"c_bar", cbar},
                   {"t_max", t_max}, {"r_domain", r_dom}, {"band_sqrt_t", opt.band_sqrt_t}, {"shells", shells}, {"points", all_def.size()},
                   {"positive_deficits", X.size()}};
  rec.series = make_series("t", false, false,
                           {{"t", all_t}, {"rho", all_rho}, {"deficit", all_def}});
  if (X.empty()) {
    rec.pass = rec.vacuous = true;
    rec.note = "all deficits zero: vacuous pass";
    return rec;
  }
  if (X.size() < 2 || *std::max_element(X.begin(), X.end()) <= *std::min_element(X.begin(), X.end())) {
    rec.pass = false;
    rec.note = "fewer than two distinct positive deficits: slope undetermined";
    return rec;
  }
  const LineFit f = fit_line(X, Y);
  rec.constants["slope"] = f.slope;
  rec.constants["fit_residual"] = f.residual;
  rec.margin = -f.slope;
  if (f.slope < 0) {
    const double Dbar = -1.0 / f.slope;
    double logC = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < X.size(); ++i) logC = std::max(logC, Y[i] + X[i] / Dbar);
    rec.constants["C_bar"] = std::exp(logC);
    rec.constants["D_bar"] = Dbar;
    rec.pass = true;
    rec.note = "single envelope (C_bar, D_bar) bounds every deficit; margin = -slope";
  } else {
    rec.pass = false;
    rec.note = "fitted slope is not negative: deficits do not decay away from S";
  }
  rec.series["regression"] = {{"X", to_array(X)}, {"log_t_deficit", to_array(Y)}};
  return rec;
}

// Global nonnegativity ----------------------------------------------------------------

CheckRecord check_global_nnsc(const FlowTrajectory& traj, const NnscOptions& opt) {
  const double t_res = opt.t_resolve > 0 ? opt.t_resolve : 64 * dx2(traj);
  CheckRecord rec = make_record("global_nnsc", kAnchorNnsc);
  rec.exploratory = opt.exploratory;
  std::vector<double> t, minR, tminR, tol;
  double margin = std::numeric_limits<double>::infinity();
  double ext_margin = std::numeric_limits<double>::infinity(), gate_tol = 0.0;
  std::vector<double> gt, gtm;
  for (std::size_t i = 0; i < traj.slices.size(); ++i) {
    const auto& s = traj.slices[i];
    if (!s.primary || s.time <= 0) continue;
    const double tg = tol_at(opt.tol_grid, i);
    t.push_back(s.time);
    minR.push_back(s.diag.min_R);
    tminR.push_back(s.time * s.diag.min_R);
    tol.push_back(tg);
    ext_margin = std::min(ext_margin, s.diag.min_R + tg);
    if (s.time >= t_res * (1 - kRel)) {
      gate_tol = std::max(gate_tol, tg);
      margin = std::min(margin, s.diag.min_R + tg);
      gt.push_back(s.time);
      gtm.push_back(s.time * s.diag.min_R);
    }
  }
  rec.constants = {{"t_resolve", t_res}};
  rec.series = make_series("t", false, false, {{"t", t}, {"min_R", minR}, {"t_min_R", tminR}, {"tol_grid", tol}});
  // Extended diagnostics over every resolved-or-not slice; never asserted.
  if (!t.empty()) {
    const std::size_t a = t.size() / 2;
    std::vector<double> lt(t.begin() + a, t.end()), lv(tminR.begin() + a, tminR.end());
    rec.constants["extended_margin"] = ext_margin;
    rec.constants["extended_t_min_R_first"] = tminR.front();
    rec.constants["extended_t_min_R_last"] = tminR.back();
    if (lt.size() >= 2) rec.constants["extended_t_min_R_slope"] = fit_line(lt, lv).slope;
  }
  if (gt.empty()) {
    rec.pass = rec.vacuous = true;
    rec.note = fmt::format("no stored slice with t >= t_resolve = {:.4g} (horizon {:.4g}): vacuous",
                           t_res, traj.horizon);
    return rec;
  }
  rec.tolerance = gate_tol;
  rec.margin = margin;
  bool trend = true;
  if (gt.size() >= 2) {
    const double slope = fit_line(gt, gtm).slope;
    rec.constants["t_min_R_slope"] = slope;
    trend = gtm.back() >= -tol.back() * gt.back() || slope >= 0;
  }
  rec.constants["trend_ok"] = trend;
  rec.pass = margin >= 0 && trend;
  rec.note = rec.pass ? "min R >= -tol_grid on every resolved slice" : "min R below -tol_grid or t min R trending down";
  if (opt.exploratory) rec.note += "; outside the hypotheses (alpha <= 2): exploratory, not asserted";
  return rec;
}

// C^k bounds ---------------------------------------------------------------------------

CheckRecord check_ck_bounds(const FlowTrajectory& traj, const NodeMask& U, int k,
                            const std::vector<Point>& S) {
  if (k < 0 || k > kMaxDerivOrder) throw InvalidArgument("k must lie in [0, 4]");
  const Lattice& l = traj.lattice();
  if (U.size() != l.node_count()) throw InvalidArgument("region mask does not match the lattice");
  const std::vector<double> dist = distance_to_set(S, l);
  for (std::size_t x = 0; x < l.node_count(); ++x)
    if (U[x] && dist[x] < l.extent() / 8)
      throw InvalidArgument("region U intersects T(S, L/8)");
  if (count(U) == 0) throw InvalidArgument("empty region");
  CheckRecord rec = make_record("ck_bounds", kAnchorCk);

  auto umax = [&](const ScalarField& f) {
    double m = 0.0;
    for (std::size_t x = 0; x < f.nodes(); ++x)
      if (U[x]) m = std::max(m, std::abs(f(x)));
    return m;
  };
  auto magnitude = [&](const Sym2Field& h) {
    if (k == 0) return frobenius(h);
    return derivative_magnitude(h, k);
  };
  const Sym2Field& h0 = traj.slices.front().metric.h();
  std::vector<double> t, M, D;
  for (std::size_t i : traj.primary_indices()) {
    const auto& s = traj.slices[i];
    if (s.time <= 0) continue;
    Sym2Field diff = s.metric.h();
    diff -= h0;
    t.push_back(s.time);
    M.push_back(umax(magnitude(s.metric.h())));
    D.push_back(umax(magnitude(diff)));
  }
  if (t.size() < 2) throw InvalidArgument("need at least two positive-time slices");
  // Growth exponent as t -> 0: first decade of stored positive times.
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] <= 10 * t.front() * (1 + kRel) && M[i] > 0) {
      lx.push_back(std::log(t[i]));
      ly.push_back(std::log(M[i]));
    }
  const double exponent = lx.size() >= 2 ? fit_line(lx, ly).slope : 0.0;
  // Convergence: |grad^k (g_t - g)| at the early probe time below its value at horizon/4.
  auto nearest = [&](double s) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
      if (std::abs(t[i] - s) < std::abs(t[b] - s)) b = i;
    return b;
  };
  const std::size_t ib = nearest(traj.horizon / 4);
  std::size_t ia = nearest(64 * dx2(traj));
  if (t[ia] >= t[ib]) ia = 0;
  const double scale = std::max(D[ib], 1e-300);
  const bool converging = D[ib] <= 1e-14 || (ia != ib && D[ia] < D[ib]);

  rec.constants = {{"k", k}, {"region_nodes", count(U)}, {"growth_exponent", exponent},
                   {"sup_grad_k", *std::max_element(M.begin(), M.end())},
                   {"t_early", t[ia]}, {"diff_early", D[ia]},
                   {"t_late", t[ib]}, {"diff_late", D[ib]}};
  rec.tolerance = 0.1;
  rec.margin = std::min(exponent + 0.1, D[ib] <= 1e-14 ? 0.0 : (D[ib] - D[ia]) / scale);
  rec.pass = exponent >= -0.1 && converging;
  rec.note = fmt::format("growth exponent {:.3g} (>= -0.1 required); diff {:.3g} at t = {:.3g} vs {:.3g} at t = {:.3g}",
                         exponent, D[ia], t[ia], D[ib], t[ib]);
  rec.series = make_series("t", true, true, {{"t", t}, {"sup_grad_k", M}, {"grad_k_diff", D}});
  return rec;
}

// Maximum principle ---------------------------------------------------------------------

CheckRecord check_max_principle(const FlowTrajectory& traj, const std::vector<double>& tol_grid,
                                double t_resolve) {
  const double t_res = t_resolve > 0 ? t_resolve : 64 * dx2(traj);
  const int n = traj.lattice().dim();
  CheckRecord rec = make_record("max_principle", kAnchorMaxPrinciple);
  std::vector<double> t, minR, bound;
  double margin = std::numeric_limits<double>::infinity(), tmax = 0.0;
  for (std::size_t i = 0; i < traj.slices.size(); ++i) {
    const auto& s = traj.slices[i];
    if (!s.primary || s.time <= 0) continue;
    t.push_back(s.time);
    minR.push_back(s.diag.min_R);
    bound.push_back(-n / (2 * s.time));
    if (s.time >= t_res * (1 - kRel)) {
      const double tg = tol_at(tol_grid, i);
      tmax = std::max(tmax, tg);
      margin = std::min(margin, s.diag.min_R + n / (2 * s.time) + tg);
    }
  }
  rec.constants = {{"t_resolve", t_res}, {"n", n}};
  rec.series = make_series("t", true, false, {{"t", t}, {"min_R", minR}, {"bound", bound}});
  if (!std::isfinite(margin)) {
    rec.pass = rec.vacuous = true;
    rec.note = "no stored slice with t >= t_resolve: vacuous";
    return rec;
  }
  rec.tolerance = tmax;
  rec.margin = margin;
  rec.pass = margin >= 0;
  rec.note = fmt::format("min R + n/(2t) + tol_grid over slices with t >= {:.4g}", t_res);
  return rec;
}

// Derivative decay ----------------------------------------------------------------------

CheckRecord check_derivative_decay(const FlowTrajectory& traj, int k, double t_lo, double t_hi,
                                   double lo, double hi) {
  if (k < 1 || k > kMaxDerivOrder) throw InvalidArgument("k must lie in [1, 4]");
  if (!(t_lo > 0 && t_hi >= 10 * t_lo * (1 - kRel))) throw InvalidArgument("fit window must span a decade");
  CheckRecord rec = make_record("derivative_decay", kAnchorDecay);
  std::vector<double> t, M, lx, ly;
  for (std::size_t i : traj.primary_indices()) {
    const auto& s = traj.slices[i];
    if (s.time <= 0) continue;
    t.push_back(s.time);
    M.push_back(s.diag.max_grad[k - 1]);
    if (s.time >= t_lo * (1 - kRel) && s.time <= t_hi * (1 + kRel) && s.diag.max_grad[k - 1] > 0) {
      lx.push_back(std::log(s.time));
      ly.push_back(std::log(s.diag.max_grad[k - 1]));
    }
  }
  if (lx.size() < 3) throw InvalidArgument("fewer than three slices in the fit window");
  const LineFit f = fit_line(lx, ly);
  rec.constants = {{"k", k}, {"t_lo", t_lo}, {"t_hi", t_hi}, {"slope", f.slope},
                   {"points", lx.size()}, {"band", {lo, hi}}, {"fit_residual", f.residual}};
  rec.margin = std::min(f.slope - lo, hi - f.slope);
  rec.pass = rec.margin >= 0;
  rec.note = fmt::format("fitted slope {:.3f} (scale-invariant rate -k/2 = {:.2f})", f.slope, -0.5 * k);
  rec.series = make_series("t", true, true, {{"t", t}, {"max_grad", M}});
  return rec;
}

// Pairing -------------------------------------------------------------------------------

PairingTolerance pairing_tolerance(const PairingSeries& cal, double dx, double dt, double window) {
  PairingTolerance tol;
  const double model = dx * dx + dt;
  tol.C = cal.max_rate_error / model;
  double vmax = 0.0;
  for (double v : cal.values) vmax = std::max(vmax, std::abs(v));
  const double floor = 64 * std::numeric_limits<double>::epsilon() * (1 + vmax);
  tol.step = dt * tol.C * model + floor;
  tol.early = window * tol.C * model + floor;
  return tol;
}

CheckRecord check_pairing(const PairingSeries& s, const PairingTolerance& tol) {
  CheckRecord rec = make_record("pairing", kAnchorPairing);
  if (s.values.empty()) throw InvalidArgument("empty pairing series");
  const double first = s.values.front();
  rec.constants = {{"C", tol.C}, {"tol_step", tol.step}, {"tol_early", tol.early},
                   {"monotonicity_defect", s.monotonicity_defect}, {"earliest", first},
                   {"final", s.final_value}, {"surrogate_R", s.surrogate_R}};
  rec.tolerance = tol.step;
  rec.margin = std::min(tol.step - s.monotonicity_defect, first + tol.early);
  rec.pass = s.monotonicity_defect <= tol.step && first >= -tol.early;
  rec.note = "tol = dt C (dx^2 + dt), C fitted on a smooth calibration run at the same N";
  rec.series = make_series("t", false, false, {{"t", s.times}, {"pairing", s.values}});
  return rec;
}

// Config --------------------------------------------------------------------------------

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"lattice", {"dim", "N", "L"}},
      {"initial", {"kind", "amplitude", "seed", "block", "singular", "anchor", "depth", "extent",
                   "axis", "r0", "cap", "sigma", "eps_bar"}},
      {"flow", {"horizon", "cfl_sigma", "uniform_count", "extra_dx2"}},
      {"checks", {"run", "beta", "kappa0", "eta", "C_ladder", "probes", "ladder", "ladder_order",
                  "ck_order", "decay_order", "decay_from_dx2", "pairing_point", "pairing_from",
                  "early_fraction", "inject_floor"}},
      {"output", {"name", "dir", "csv", "svg", "save_trajectory"}},
  };
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

template <class T>
T get(const pt::ptree& tree, const std::string& key) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) throw ConfigError("missing key '" + key + "'");
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (*v == "true" || *v == "1" || *v == "yes") return true;
      if (*v == "false" || *v == "0" || *v == "no") return false;
      throw std::invalid_argument("bool");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return *v;
    } else if constexpr (std::is_integral_v<T>) {
      std::size_t pos = 0;
      const long long r = std::stoll(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
      return static_cast<T>(r);
    } else {
      std::size_t pos = 0;
      const double r = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
      return r;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad value for '" + key + "': " + *v);
  }
}

template <class T>
void opt(const pt::ptree& tree, const std::string& key, T& out) {
  if (tree.get_optional<std::string>(key)) out = get<T>(tree, key);
}

std::vector<double> doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for '" + key + "': " + v);
    }
  }
  return out;
}

Point point_of(const std::string& key, const std::string& v) {
  const auto d = doubles(key, v);
  if (d.empty() || d.size() > kMaxDim) throw ConfigError("bad point for '" + key + "': " + v);
  Point p{};
  std::copy(d.begin(), d.end(), p.begin());
  return p;
}

const std::set<std::string>& known_checks() {
  static const std::set<std::string> s{"beta_weak", "spatial_lower_bound", "global_nnsc", "ck_bounds",
                                       "max_principle", "derivative_decay", "pairing"};
  return s;
}

ScenarioConfig from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown section or key '" + section + "'");
    for (const auto& [key, _] : body)
      if (!it->second.count(key)) throw ConfigError("unknown key '" + section + "." + key + "'");
  }
  ScenarioConfig c;
  c.N = get<int>(tree, "lattice.N");
  opt(tree, "lattice.dim", c.dim);
  opt(tree, "lattice.L", c.L);
  c.kind = get<std::string>(tree, "initial.kind");
  static const std::set<std::string> kinds{"flat", "noise", "smooth", "singular", "bump"};
  if (!kinds.count(c.kind)) throw ConfigError("bad value for 'initial.kind': " + c.kind);
  opt(tree, "initial.amplitude", c.amplitude);
  opt(tree, "initial.seed", c.seed);
  opt(tree, "initial.block", c.block);
  opt(tree, "initial.sigma", c.sigma);
  opt(tree, "initial.eps_bar", c.eps_bar);
  if (auto v = tree.get_optional<std::string>("initial.singular")) {
    try {
      c.singular.kind = parse_singular_kind(*v);
    } catch (const Error&) {
      throw ConfigError("bad value for 'initial.singular': " + *v);
    }
  }
  if (auto v = tree.get_optional<std::string>("initial.anchor")) c.singular.anchor = point_of("initial.anchor", *v);
  opt(tree, "initial.depth", c.singular.depth);
  opt(tree, "initial.extent", c.singular.extent);
  opt(tree, "initial.axis", c.singular.axis);
  opt(tree, "initial.r0", c.singular.r0);
  opt(tree, "initial.cap", c.singular.cap);
  c.singular.amplitude = c.amplitude;

  c.horizon = get<double>(tree, "flow.horizon");
  opt(tree, "flow.cfl_sigma", c.cfl_sigma);
  opt(tree, "flow.uniform_count", c.uniform_count);
  if (auto v = tree.get_optional<std::string>("flow.extra_dx2")) c.extra_dx2 = doubles("flow.extra_dx2", *v);

  if (auto v = tree.get_optional<std::string>("checks.run")) {
    c.checks = split_list(*v);
    for (const auto& s : c.checks)
      if (!known_checks().count(s)) throw ConfigError("unknown check '" + s + "' in 'checks.run'");
  }
  opt(tree, "checks.beta", c.beta);
  opt(tree, "checks.kappa0", c.kappa0);
  opt(tree, "checks.eta", c.eta);
  if (auto v = tree.get_optional<std::string>("checks.C_ladder")) c.C_ladder = doubles("checks.C_ladder", *v);
  opt(tree, "checks.probes", c.probes);
  opt(tree, "checks.ladder", c.ladder);
  opt(tree, "checks.ladder_order", c.ladder_order);
  opt(tree, "checks.ck_order", c.ck_order);
  opt(tree, "checks.decay_order", c.decay_order);
  opt(tree, "checks.decay_from_dx2", c.decay_from_dx2);
  if (auto v = tree.get_optional<std::string>("checks.pairing_point")) c.pairing_point = point_of("checks.pairing_point", *v);
  opt(tree, "checks.pairing_from", c.pairing_from);
  opt(tree, "checks.early_fraction", c.early_fraction);
  opt(tree, "checks.inject_floor", c.inject_floor);

  opt(tree, "output.name", c.name);
  if (auto v = tree.get_optional<std::string>("output.dir")) c.out_dir = *v;
  opt(tree, "output.csv", c.csv);
  opt(tree, "output.svg", c.svg);
  opt(tree, "output.save_trajectory", c.save_trajectory);

  if (c.N < 4 || c.N % 2) throw ConfigError("'lattice.N' must be an even integer >= 4");
  if (c.dim < 2 || c.dim > 4) throw ConfigError("'lattice.dim' must lie in [2, 4]");
  if (!(c.horizon > 0)) throw ConfigError("'flow.horizon' must be positive");
  return c;
}

}  // namespace

ScenarioConfig parse_config_text(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return from_tree(tree);
}

ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c = parse_config_text(ss.str());
  if (c.name == "scenario") c.name = path.stem().string();
  return c;
}

// Scenarios -----------------------------------------------------------------------------

MetricField initial_metric(const ScenarioConfig& c, const Lattice& l,
                           std::optional<ValidityReport>* validity) {
  if (c.kind == "flat") return MetricField::flat(l);
  if (c.kind == "noise") {
    const int block = c.block > 0 ? c.block * l.resolution() / c.N : l.resolution() / 2;
    return MetricField(noise_perturbation(l, c.amplitude, std::max(1, block), c.seed));
  }
  if (c.kind == "smooth") return MetricField(smooth_perturbation(l, c.amplitude, c.seed));
  if (c.kind == "bump") return conformal_bump(l, c.amplitude, c.sigma > 0 ? c.sigma : l.extent() / 10);
  if (c.kind == "singular") {
    SingularSpec s = c.singular;
    s.amplitude = c.amplitude;
    GeneratedMetric g = generate_metric(s, l, c.eps_bar);
    if (validity) *validity = g.report;
    return std::move(g.metric);
  }
  throw ConfigError("bad value for 'initial.kind': " + c.kind);
}

namespace {

bool wants(const ScenarioConfig& c, std::string_view name) {
  return std::find(c.checks.begin(), c.checks.end(), name) != c.checks.end();
}

StorePolicy policy_for(const ScenarioConfig& c, const Lattice& l, bool dense) {
  StorePolicy p;
  p.sigma = c.cfl_sigma;
  p.uniform_count = c.uniform_count;
  const double d2 = l.spacing() * l.spacing();
  for (double q : c.extra_dx2) p.extra_times.push_back(q * d2);
  if (dense) {
    p.dense_from = c.horizon * c.pairing_from;
    p.dense_to = c.horizon;
  }
  return p;
}

void inject(FlowTrajectory& traj, double floor) {
  if (floor == 0) return;
  for (auto& s : traj.slices) {
    for (std::size_t x = 0; x < s.scalar.nodes(); ++x) s.scalar(x) -= floor;
    s.diag.min_R -= floor;
    s.diag.max_R -= floor;
  }
}

void write_outputs(const ScenarioResult& res, const ScenarioConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_report(res.report, dir / "report.json");
  if (c.csv) {
    CsvWriter w(dir / "slices.csv");
    w.row(std::vector<std::string>{"t", "step", "min_R", "max_R", "grad1", "grad2", "lambda_min",
                                   "lambda_max", "h_sup"});
    for (const auto& s : res.traj.slices)
      if (s.primary)
        w.row(std::vector<double>{s.time, double(s.step), s.diag.min_R, s.diag.max_R,
                                  s.diag.max_grad[0], s.diag.max_grad[1], s.diag.lambda_min,
                                  s.diag.lambda_max, s.diag.h_sup});
    for (const auto& chk : res.report.checks) {
      if (!chk.series.contains("columns")) continue;
      const Json& cols = chk.series["columns"];
      std::vector<std::string> head;
      std::size_t rows = 0;
      for (auto it = cols.begin(); it != cols.end(); ++it) {
        head.push_back(it.key());
        rows = std::max(rows, it.value().size());
      }
      CsvWriter cw(dir / (chk.name + ".csv"));
      cw.row(head);
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<std::string> row;
        for (auto it = cols.begin(); it != cols.end(); ++it)
          row.push_back(r < it.value().size() && it.value()[r].is_number()
                            ? format_double(it.value()[r].get<double>())
                            : "");
        cw.row(row);
      }
    }
  }
  if (c.svg) plot_report(to_json(res.report), dir);
  if (c.save_trajectory) save_trajectory(res.traj, dir / "trajectory");
}

}  // namespace

ScenarioResult execute_scenario(const ScenarioConfig& cin, const RunOptions& ro) {
  ScenarioConfig c = cin;
  if (ro.seed) c.seed = *ro.seed;
  const auto start = std::chrono::steady_clock::now();
  const Lattice l(c.dim, c.N, c.L);
  ScenarioResult res{EstimateReport{}, FlowTrajectory{}, std::nullopt, std::nullopt, std::nullopt, {}};
  EstimateReport& rep = res.report;
  rep.scenario = c.name;
  rep.deterministic = ro.deterministic;
  rep.environment = {{"dim", c.dim}, {"N", c.N}, {"L", c.L}, {"dx", l.spacing()}, {"kind", c.kind},
                     {"amplitude", c.amplitude}, {"seed", c.seed}, {"horizon", c.horizon}};

  std::string stage = "initial";
  try {
    MetricField g0 = initial_metric(c, l, &res.validity);
    if (c.kind == "singular") {
      res.singular_set = singular_points(c.singular, l);
      const ValidityReport& v = *res.validity;
      rep.environment["validity"] = {{"eps_measured", v.eps_measured}, {"eps_bar", v.eps_bar},
                                     {"eps_ok", v.eps_ok}, {"alpha", v.alpha},
                                     {"within_hypotheses", v.within_hypotheses},
                                     {"min_R_core", v.min_R_core}, {"min_R_band", v.min_R_band},
                                     {"lambda_min", v.lambda_min}, {"lambda_max", v.lambda_max}};
      rep.environment["singular"] = std::string(singular_kind_name(c.singular.kind));
    }
    stage = "evolve";
    const bool pairing = wants(c, "pairing");
    res.traj = evolve(g0, c.horizon, policy_for(c, l, pairing));
    rep.environment["dt"] = res.traj.dt;
    rep.environment["steps"] = res.traj.total_steps;
    if (!res.traj.complete) throw Error(res.traj.failure);
    inject(res.traj, c.inject_floor);

    if (c.ladder) {
      stage = "ladder";
      ScenarioConfig cc = c;
      cc.N = c.N / 2;
      const Lattice lc(c.dim, cc.N, c.L);
      MetricField gc = initial_metric(cc, lc);
      res.coarse = evolve(gc, c.horizon, policy_for(cc, lc, false));
      if (!res.coarse->complete) throw Error("coarse run: " + res.coarse->failure);
      inject(*res.coarse, c.inject_floor);
    }
    const FlowTrajectory* coarse = res.coarse ? &*res.coarse : nullptr;
    const std::vector<double> tol = slice_tolerance(res.traj, coarse, c.ladder_order);
    const bool exploratory = res.validity && !res.validity->within_hypotheses;

    for (const auto& name : c.checks) {
      stage = "check " + name;
      if (name == "beta_weak") {
        BetaWeakOptions o;
        o.beta = c.beta;
        o.kappa0 = c.kappa0;
        o.C_ladder = c.C_ladder;
        o.probes = c.probes;
        o.seed = c.seed;
        // tol at the proxy time from the min-R ladder
        const double t_rel = o.reliable_dx2 * l.spacing() * l.spacing();
        for (std::size_t i : res.traj.primary_indices())
          if (res.traj.slices[i].time >= t_rel * (1 - kRel)) {
            o.tol_grid = tol[i];
            break;
          }
        rep.checks.push_back(check_beta_weak(res.traj, res.singular_set, o));
      } else if (name == "spatial_lower_bound") {
        SpatialOptions o;
        o.beta = c.beta;
        o.kappa0 = c.kappa0;
        o.eta = c.eta;
        o.t_max = c.horizon * c.early_fraction;
        rep.checks.push_back(check_spatial_lower_bound(res.traj, res.singular_set, o));
      } else if (name == "global_nnsc") {
        rep.checks.push_back(check_global_nnsc(res.traj, {tol, 0.0, exploratory}));
      } else if (name == "ck_bounds") {
        const std::vector<double> d = distance_to_set(res.singular_set, l);
        NodeMask U(l.node_count(), 0);
        for (std::size_t x = 0; x < l.node_count(); ++x) U[x] = d[x] >= l.extent() / 8;
        rep.checks.push_back(check_ck_bounds(res.traj, U, c.ck_order, res.singular_set));
      } else if (name == "max_principle") {
        rep.checks.push_back(check_max_principle(res.traj, tol));
      } else if (name == "derivative_decay") {
        const double t_lo = c.decay_from_dx2 * l.spacing() * l.spacing();
        rep.checks.push_back(check_derivative_decay(res.traj, c.decay_order, t_lo, 10 * t_lo));
      } else if (name == "pairing") {
        const double t1 = c.horizon, t_min = c.horizon * c.pairing_from;
        KernelField u = backward_kernel(res.traj, c.pairing_point, t1, t_min);
        res.pairing = pairing_curve(res.traj, u);
        // Calibration: smooth conformal bump with the same lattice, horizon and window.
        stage = "pairing calibration";
        const MetricField gb = conformal_bump(l, 0.02, l.extent() / 10);
        StorePolicy pc = policy_for(c, l, true);
        pc.extra_times.clear();
        const FlowTrajectory cal = evolve(gb, c.horizon, pc);
        if (!cal.complete) throw Error("calibration run: " + cal.failure);
        const KernelField uc = backward_kernel(cal, c.pairing_point, t1, t_min);
        const PairingSeries sc = pairing_curve(cal, uc, true);
        const PairingTolerance ptol =
            pairing_tolerance(sc, l.spacing(), res.traj.dt, res.pairing->times.back() - res.pairing->times.front());
        CheckRecord rec = check_pairing(*res.pairing, ptol);
        const double c0 = measure_c0(res.traj, t_min);
        const BackwardBound bb = backward_bound_fit(u, c0, c.dim, t_min, t1 / 2);
        rec.constants["c0"] = c0;
        rec.constants["backward_bound_exponent"] = bb.exponent;
        rec.constants["calibration_rate_error"] = sc.max_rate_error;
        rep.checks.push_back(std::move(rec));
      }
    }
  } catch (const std::exception& e) {
    rep.failed_stage = stage;
    rep.failure = e.what();
  }
  rep.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::filesystem::path dir = !ro.out_dir.empty() ? ro.out_dir : c.out_dir;
  if (ro.write_outputs && !dir.empty() && !res.traj.slices.empty()) write_outputs(res, c, dir);
  else if (ro.write_outputs && !dir.empty()) {
    std::filesystem::create_directories(dir);
    write_report(rep, dir / "report.json");
  }
  return res;
}

EstimateReport run_scenario(const std::filesystem::path& config, const RunOptions& opt) {
  return execute_scenario(parse_config(config), opt).report;
}

// Plots ---------------------------------------------------------------------------------

void svg_line_plot(const std::filesystem::path& path, const std::string& title,
                   const std::string& xlabel, const std::string& ylabel,
                   const std::vector<SvgSeries>& series, bool logx, bool logy) {
  constexpr double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  auto tx = [&](double v) { return logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return logy ? std::log10(std::abs(v)) : v; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!logx || x > 0) && (!logy || y != 0);
  };
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (ty(v) - y0) / (y1 - y0) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream o;
  o << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n", W, H);
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", W / 2, title);
  o << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                   ml, mt, W - ml - mr, H - mt - mb);
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4, fy = y0 + (y1 - y0) * k / 4;
    const double sx = ml + (W - ml - mr) * k / 4, sy = H - mb - (H - mt - mb) * k / 4;
    o << fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", sx, H - mb + 16,
                     logx ? std::pow(10.0, fx) : fx);
    o << fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", ml - 6, sy + 4,
                     logy ? std::pow(10.0, fy) : fy);
  }
  o << fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", W / 2, H - 12, xlabel);
  o << fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                   H / 2, H / 2, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 6];
    o << fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", col);
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i])) o << fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    o << "\"/>\n";
    o << fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", ml + 10, mt + 16 + 14 * k, col, s.label);
  }
  o << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << o.str();
}

std::vector<std::filesystem::path> plot_report(const Json& report, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!report.contains("checks")) throw FormatError("report has no checks");
  for (const auto& chk : report["checks"]) {
    const Json& s = chk.value("series", Json::object());
    if (!s.contains("columns") || !s.contains("x")) continue;
    const std::string xname = s["x"].get<std::string>();
    const Json& cols = s["columns"];
    if (!cols.contains(xname)) continue;
    auto vec = [](const Json& a) {
      std::vector<double> v;
      for (const auto& e : a) v.push_back(e.is_number() ? e.get<double>() : std::nan(""));
      return v;
    };
    const std::vector<double> x = vec(cols[xname]);
    std::vector<SvgSeries> ser;
    for (auto it = cols.begin(); it != cols.end(); ++it)
      if (it.key() != xname) ser.push_back({it.key(), x, vec(it.value())});
    const std::string name = chk["name"].get<std::string>();
    const auto p = dir / (name + ".svg");
    svg_line_plot(p, name, xname, "value", ser, s.value("logx", false), s.value("logy", false));
    out.push_back(p);
    if (s.contains("regression")) {
      const auto q = dir / (name + "_regression.svg");
      svg_line_plot(q, name + " regression", "rho^2 / t^(1-2 beta)", "log(t deficit)",
                    {{"deficit", vec(s["regression"]["X"]), vec(s["regression"]["log_t_deficit"])}});
      out.push_back(q);
    }
  }
  return out;
}

}  // namespace rdtf
