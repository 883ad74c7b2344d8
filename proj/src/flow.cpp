#include "rdtf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "rdtf/stencil.hpp"

namespace rdtf {

double stable_dt(const MetricField& m, double sigma) {
  const Lattice& l = m.lattice();
  const EigenBounds b = bilipschitz_bounds(m);
  return sigma * l.spacing() * l.spacing() * b.lambda_min / l.dim();
}

FlowState step(const FlowState& s, double dt, double sigma) {
  const double limit = stable_dt(s.metric, sigma);
  if (dt > limit * (1 + 1e-12)) throw CflViolation(dt, limit);
  const Sym2Field k1 = rdtf_rhs_h(s.metric);
  Sym2Field mid = s.metric.h();
  mid.axpy(0.5 * dt, k1);
  const Sym2Field k2 = rdtf_rhs_h(MetricField(std::move(mid)));
  Sym2Field next = s.metric.h();
  next.axpy(dt, k2);
  FlowState out{MetricField(std::move(next)), s.time + dt, s.step_index + 1};
  require_positive_definite(out.metric);
  return out;
}

ScalarField derivative_magnitude(const Sym2Field& h, int k) {
  const Lattice& l = h.lattice();
  const int n = l.dim(), S = sym_count(n);
  if (k == 0) return frobenius(h);
  std::vector<Sym2Field> level(k + 1, Sym2Field(l));
  level[0] = h;
  ScalarField acc(l);
  // depth-first over ordered multi-indices (a_1, ..., a_k)
  std::vector<int> axis(k, 0);
  int depth = 0;
  while (depth >= 0) {
    if (axis[depth] >= n) {
      axis[depth] = 0;
      --depth;
      if (depth >= 0) ++axis[depth];
      continue;
    }
    for (int c = 0; c < S; ++c)
      detail::d1(l, level[depth].comp(c), level[depth + 1].comp(c), axis[depth]);
    if (depth + 1 == k) {
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          const double w = i == j ? 1.0 : 2.0;
          const double* p = level[k].comp(sym_index(n, i, j));
          for (std::size_t x = 0; x < l.node_count(); ++x) acc(x) += w * p[x] * p[x];
        }
      ++axis[depth];
    } else {
      ++depth;
    }
  }
  for (double& v : acc.data()) v = std::sqrt(v);
  return acc;
}

double max_derivative(const Sym2Field& h, int k) {
  if (k == 0) return perturbation_sup(h);
  return derivative_magnitude(h, k).max_abs();
}

SliceDiagnostics diagnose(const MetricField& m, const ScalarField& R, int grad_orders) {
  SliceDiagnostics d;
  const auto [mn, mx] = std::minmax_element(R.data().begin(), R.data().end());
  d.min_R = *mn;
  d.max_R = *mx;
  const EigenBounds b = bilipschitz_bounds(m);
  d.lambda_min = b.lambda_min;
  d.lambda_max = b.lambda_max;
  d.h_sup = perturbation_sup(m.h());
  for (int k = 1; k <= std::min(grad_orders, kMaxDerivOrder); ++k)
    d.max_grad[k - 1] = max_derivative(m.h(), k);
  return d;
}

std::size_t FlowTrajectory::index_of(double t) const {
  for (std::size_t i = 0; i < slices.size(); ++i)
    if (std::abs(slices[i].time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
  throw InvalidArgument(fmt::format("no stored slice at t = {:.9g}", t));
}

std::vector<double> FlowTrajectory::times() const {
  std::vector<double> t;
  for (const auto& s : slices) t.push_back(s.time);
  return t;
}

std::vector<std::size_t> FlowTrajectory::primary_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < slices.size(); ++i)
    if (slices[i].primary) out.push_back(i);
  return out;
}

long plan_steps(const MetricField& initial, double horizon, const StorePolicy& p) {
  if (!(horizon > 0)) throw InvalidArgument("horizon must be positive");
  const double dt_target = p.dt_safety * stable_dt(initial, p.sigma);
  long steps = std::max<long>(p.min_steps, static_cast<long>(std::ceil(horizon / dt_target)));
  int jmax = 0;
  while ((steps >> (jmax + 1)) >= p.dyadic_floor_steps) ++jmax;
  long unit = 1L << jmax;
  if (p.uniform_count > 0) unit = std::lcm(unit, static_cast<long>(p.uniform_count));
  return (steps + unit - 1) / unit * unit;
}

std::vector<long> store_plan(long total, double horizon, const StorePolicy& p) {
  std::set<long> s{0, total};
  for (long j = 1; (total >> j) >= p.dyadic_floor_steps && (total % (1L << j)) == 0; ++j)
    s.insert(total >> j);
  if (p.uniform_count > 0)
    for (long i = 1; i <= p.uniform_count; ++i) {
      const long c = i * total / p.uniform_count;
      s.insert(c);
      if (p.triplet_offset > 0) {
        if (c - p.triplet_offset > 0) s.insert(c - p.triplet_offset);
        if (c + p.triplet_offset <= total) s.insert(c + p.triplet_offset);
      }
    }
  const double dt = horizon / total;
  for (double t : p.extra_times) {
    const long c = std::lround(t / dt);
    if (c >= 0 && c <= total) s.insert(c);
  }
  return {s.begin(), s.end()};
}

namespace {

std::set<long> dense_plan(long total, double horizon, const StorePolicy& p) {
  std::set<long> s;
  if (!(p.dense_to >= p.dense_from)) return s;
  const double dt = horizon / total;
  const long a = std::max(0L, static_cast<long>(std::ceil(p.dense_from / dt - 1e-9)));
  const long b = std::min(total, static_cast<long>(std::floor(p.dense_to / dt + 1e-9)));
  for (long c = a; c <= b; c += std::max(1, p.dense_stride)) s.insert(c);
  s.insert(b);
  return s;
}

FlowSlice make_slice(const FlowState& st, bool primary, int grad_orders) {
  ScalarField R = scalar_curvature(st.metric);
  SliceDiagnostics d = diagnose(st.metric, R, primary ? grad_orders : 0);
  return FlowSlice{st.time, st.step_index, st.metric, std::move(R), d, primary};
}

void run(FlowTrajectory& traj, FlowState state, const StorePolicy& p) {
  const auto plan = store_plan(traj.total_steps, traj.horizon, p);
  const std::set<long> primary(plan.begin(), plan.end());
  const std::set<long> dense = dense_plan(traj.total_steps, traj.horizon, p);
  for (long s = state.step_index + 1; s <= traj.total_steps; ++s) {
    try {
      state = step(state, traj.dt, p.sigma);
    } catch (const Error& e) {
      traj.failure = fmt::format("step {} (t = {:.6g}): {}", s, s * traj.dt, e.what());
      return;
    }
    state.time = s * traj.dt;
    traj.steps_taken = s;
    const bool is_primary = primary.count(s) > 0;
    if (is_primary || dense.count(s)) traj.slices.push_back(make_slice(state, is_primary, p.grad_orders));
  }
  traj.complete = true;
}

}  // namespace

FlowTrajectory evolve(const MetricField& initial, double horizon, const StorePolicy& p) {
  require_positive_definite(initial);
  FlowTrajectory traj;
  traj.horizon = horizon;
  traj.total_steps = plan_steps(initial, horizon, p);
  traj.dt = horizon / traj.total_steps;
  FlowState state{initial, 0.0, 0};
  traj.slices.push_back(make_slice(state, true, p.grad_orders));
  run(traj, std::move(state), p);
  return traj;
}

FlowTrajectory resume(FlowTrajectory traj, const StorePolicy& p) {
  if (traj.slices.empty()) throw InvalidArgument("cannot resume an empty trajectory");
  if (traj.complete) return traj;
  const FlowSlice& last = traj.slices.back();
  traj.failure.clear();
  FlowState state{last.metric, last.time, last.step};
  traj.steps_taken = last.step;
  run(traj, std::move(state), p);
  return traj;
}

std::vector<ResidualSlice> scalar_supersolution_residual(const FlowTrajectory& traj) {
  std::vector<ResidualSlice> out;
  const auto& sl = traj.slices;
  if (sl.size() < 3) throw InvalidArgument("supersolution residual needs >= 3 slices");
  bool any = false;
  for (std::size_t i = 1; i + 1 < sl.size(); ++i) {
    const double a = sl[i].time - sl[i - 1].time, b = sl[i + 1].time - sl[i].time;
    if (std::abs(a - b) > 1e-9 * std::max(a, b)) continue;
    any = true;
    const MetricField& m = sl[i].metric;
    const Lattice& l = m.lattice();
    const Sym2Field gi = inverse_metric(m);
    const ScalarField lap = metric_hessian_trace(gi, sl[i].scalar);
    ScalarField r(l);
    const double n = l.dim();
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const double R = sl[i].scalar(x);
      const double dtR = (sl[i + 1].scalar(x) - sl[i - 1].scalar(x)) / (2 * a);
      r(x) = dtR - lap(x) - (2.0 / n) * R * R;
    }
    out.push_back({sl[i].time, a, std::move(r)});
  }
  if (!any) throw InvalidArgument("no uniformly spaced slice triplet for time differencing");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Multilinear periodic interpolation of several scalar arrays at a point.
struct Interp {
  const Lattice& l;
  std::array<std::size_t, 16> nodes{};
  std::array<double, 16> w{};
  int corners = 0;

  Interp(const Lattice& lat, const Point& p) : l(lat) {
    const int n = l.dim();
    MultiIndex base{};
    std::array<double, kMaxDim> f{};
    for (int a = 0; a < n; ++a) {
      const double s = (p[a] + 0.5 * l.extent()) / l.spacing();
      const double fl = std::floor(s);
      base[a] = static_cast<int>(fl);
      f[a] = s - fl;
    }
    corners = 1 << n;
    for (int c = 0; c < corners; ++c) {
      MultiIndex idx = base;
      double wt = 1.0;
      for (int a = 0; a < n; ++a) {
        const int bit = (c >> a) & 1;
        idx[a] += bit;
        wt *= bit ? f[a] : 1.0 - f[a];
      }
      nodes[c] = l.node(idx);
      w[c] = wt;
    }
  }
  double operator()(const double* v) const {
    double s = 0.0;
    for (int c = 0; c < corners; ++c) s += w[c] * v[nodes[c]];
    return s;
  }
};

struct PullbackFields {
  VectorField X;
  std::vector<ScalarField> dX;  // dX[a * n + b] = d_b X^a
  Sym2Field ric;
  ScalarField R;
};

PullbackFields pullback_fields(const FlowSlice& s) {
  const Lattice& l = s.metric.lattice();
  const int n = l.dim();
  PullbackFields f{deturck_field(s.metric), {}, Sym2Field(l), s.scalar};
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      ScalarField d(l);
      detail::d1(l, f.X.comp(a), d.comp(0), b);
      f.dX.push_back(std::move(d));
    }
  f.ric = curvature(s.metric, false).ricci;
  return f;
}

using DMat = Eigen::MatrixXd;
using DVec = Eigen::VectorXd;

struct Particle {
  DVec x;
  DMat J;
};

void velocity(const PullbackFields& A, const PullbackFields& B, double theta, const Lattice& l,
              const DVec& x, DVec& v, DMat& grad) {
  const int n = l.dim();
  Point p{};
  for (int a = 0; a < n; ++a) p[a] = x[a];
  const Interp I(l, p);
  v.resize(n);
  grad.resize(n, n);
  for (int a = 0; a < n; ++a) {
    v[a] = (1 - theta) * I(A.X.comp(a)) + theta * I(B.X.comp(a));
    for (int b = 0; b < n; ++b)
      grad(a, b) = (1 - theta) * I(A.dX[a * n + b].comp(0)) + theta * I(B.dX[a * n + b].comp(0));
  }
}

}  // namespace

PullbackReport pullback_crosscheck(const FlowTrajectory& traj, double t0, double t1,
                                   const std::vector<Point>& probes, int substeps) {
  if (!(t1 > t0)) throw InvalidArgument("pullback window must have t1 > t0");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < traj.slices.size(); ++i) {
    const double t = traj.slices[i].time;
    if (t >= t0 * (1 - 1e-12) && t <= t1 * (1 + 1e-12)) idx.push_back(i);
  }
  if (idx.size() < 3) throw InvalidArgument("pullback window needs >= 3 stored slices");
  const Lattice& l = traj.lattice();
  const int n = l.dim();

  std::vector<PullbackFields> F;
  for (std::size_t i : idx) F.push_back(pullback_fields(traj.slices[i]));

  PullbackReport rep;
  for (std::size_t i : idx) rep.times.push_back(traj.slices[i].time);
  const std::size_t K = idx.size();
  rep.log_volume.assign(probes.size(), std::vector<double>(K));
  rep.scalar.assign(probes.size(), std::vector<double>(K));
  std::vector<std::vector<DMat>> gt(probes.size(), std::vector<DMat>(K));
  std::vector<std::vector<DMat>> rict(probes.size(), std::vector<DMat>(K));

  for (std::size_t q = 0; q < probes.size(); ++q) {
    Particle P{DVec(n), DMat::Identity(n, n)};
    for (int a = 0; a < n; ++a) P.x[a] = probes[q][a];
    for (std::size_t k = 0; k < K; ++k) {
      if (k > 0) {
        const double h = (rep.times[k] - rep.times[k - 1]) / substeps;
        DVec v1, v2;
        DMat g1, g2;
        for (int s = 0; s < substeps; ++s) {
          const double th = static_cast<double>(s) / substeps;
          velocity(F[k - 1], F[k], th, l, P.x, v1, g1);
          const DVec xm = P.x + 0.5 * h * v1;
          const DMat Jm = P.J + 0.5 * h * g1 * P.J;
          velocity(F[k - 1], F[k], th + 0.5 / substeps, l, xm, v2, g2);
          P.x += h * v2;
          P.J += h * g2 * Jm;
        }
      }
      Point p{};
      for (int a = 0; a < n; ++a) p[a] = P.x[a];
      const Interp I(l, p);
      const MetricField& m = traj.slices[idx[k]].metric;
      DMat g(n, n), ric(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const int c = sym_index(n, i, j);
          g(i, j) = I(m.h().comp(c)) + (i == j ? 1.0 : 0.0);
          ric(i, j) = I(F[k].ric.comp(c));
        }
      gt[q][k] = P.J.transpose() * g * P.J;
      rict[q][k] = P.J.transpose() * ric * P.J;
      const double detJ = P.J.determinant();
      rep.min_jacobian_det = std::min(rep.min_jacobian_det, detJ);
      rep.log_volume[q][k] = std::log(std::abs(detJ)) + 0.5 * std::log(g.determinant());
      rep.scalar[q][k] = I(F[k].R.comp(0));
    }
    for (std::size_t k = 1; k + 1 < K; ++k) {
      const double span = rep.times[k + 1] - rep.times[k - 1];
      const DMat dg = (gt[q][k + 1] - gt[q][k - 1]) / span;
      rep.ricci_residual = std::max(rep.ricci_residual, (dg + 2.0 * rict[q][k]).norm());
      rep.ricci_scale = std::max(rep.ricci_scale, (2.0 * rict[q][k]).norm());
      const double dv = (rep.log_volume[q][k + 1] - rep.log_volume[q][k - 1]) / span;
      rep.volume_residual = std::max(rep.volume_residual, std::abs(dv + rep.scalar[q][k]));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

FlowTrajectory parabolic_rescale(const FlowTrajectory& traj, double lambda, double sigma) {
  if (!(lambda > 0)) throw InvalidArgument("rescale factor must be positive");
  const double k = std::log(lambda) / std::log(4.0);
  if (std::abs(k - std::round(k)) > 1e-12)
    throw InvalidArgument(fmt::format("rescale factor {} is not a power of 4", lambda));
  const double s = std::sqrt(lambda);
  const Lattice& l = traj.lattice();
  const Lattice lr(l.dim(), l.resolution(), l.extent() * s);

  auto relabel = [&](const Sym2Field& h) {
    Sym2Field out(lr);
    out.data() = h.data();
    return out;
  };

  FlowTrajectory out;
  out.horizon = traj.horizon * lambda;
  out.dt = traj.dt * lambda;
  out.total_steps = traj.total_steps;
  out.steps_taken = traj.steps_taken;
  out.complete = traj.complete;
  out.failure = traj.failure;
  for (const FlowSlice& sl : traj.slices) {
    ScalarField R(lr);
    R.data() = sl.scalar.data();
    R *= 1.0 / lambda;
    SliceDiagnostics d = sl.diag;
    d.min_R /= lambda;
    d.max_R /= lambda;
    for (int kk = 0; kk < kMaxDerivOrder; ++kk) d.max_grad[kk] /= std::pow(s, kk + 1);
    out.slices.push_back(
        FlowSlice{sl.time * lambda, sl.step, MetricField(relabel(sl.metric.h())), std::move(R), d,
                  sl.primary});
  }

  // step consistency: rescale(step(g, dt)) == step(rescale(g), lambda dt)
  if (traj.dt > 0) {
    const FlowSlice& first = traj.slices.front();
    const FlowState a = step({first.metric, first.time, first.step}, traj.dt, sigma);
    const FlowState b = step({out.slices.front().metric, out.slices.front().time, first.step},
                             out.dt, sigma);
    Sym2Field diff = relabel(a.metric.h());
    diff -= b.metric.h();
    const double tol = 1e-12 * (1.0 + a.metric.h().max_abs());
    if (diff.max_abs() > tol)
      throw Error(fmt::format("rescaled flow is not step-consistent (mismatch {:.3e})",
                              diff.max_abs()));
  }
  return out;
}

// ---------------------------------------------------------------------------

void save_trajectory(const FlowTrajectory& traj, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Lattice& l = traj.lattice();
  nlohmann::ordered_json j;
  j["format"] = "rdtf-trajectory";
  j["version"] = 1;
  j["lattice"] = {{"dim", l.dim()}, {"resolution", l.resolution()}, {"extent", l.extent()}};
  j["horizon"] = traj.horizon;
  j["dt"] = traj.dt;
  j["total_steps"] = traj.total_steps;
  j["steps_taken"] = traj.steps_taken;
  j["complete"] = traj.complete;
  j["failure"] = traj.failure;
  j["dt_history"] = nlohmann::json::array({{{"from_step", 0}, {"to_step", traj.steps_taken}, {"dt", traj.dt}}});
  auto& arr = j["slices"] = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.slices.size(); ++i) {
    const FlowSlice& s = traj.slices[i];
    const std::string file = fmt::format("t_{}.rdtf", i);
    write_checkpoint(dir / file, s.metric.h(), s.time);
    nlohmann::ordered_json d = {{"min_R", s.diag.min_R},
                                {"max_R", s.diag.max_R},
                                {"max_grad", s.diag.max_grad},
                                {"lambda_min", s.diag.lambda_min},
                                {"lambda_max", s.diag.lambda_max},
                                {"h_sup", s.diag.h_sup}};
    arr.push_back({{"index", i},
                   {"file", file},
                   {"time", s.time},
                   {"step", s.step},
                   {"primary", s.primary},
                   {"diagnostics", d}});
  }
  std::ofstream os(dir / "manifest.json");
  os << j.dump(2) << '\n';
  if (!os) throw Error("cannot write manifest in " + dir.string());
}

FlowTrajectory load_trajectory(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw FormatError("cannot open manifest " + manifest.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw FormatError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  if (j.value("format", "") != "rdtf-trajectory")
    throw FormatError("not a trajectory manifest: " + manifest.string());
  const auto dir = manifest.parent_path();
  FlowTrajectory t;
  try {
    t.horizon = j.at("horizon");
    t.dt = j.at("dt");
    t.total_steps = j.at("total_steps");
    t.steps_taken = j.at("steps_taken");
    t.complete = j.at("complete");
    t.failure = j.at("failure");
    for (const auto& s : j.at("slices")) {
      double time = 0;
      Sym2Field h = read_checkpoint<FieldKind::Sym2>(dir / s.at("file").get<std::string>(), &time);
      MetricField m(std::move(h));
      ScalarField R = scalar_curvature(m);
      const auto& d = s.at("diagnostics");
      SliceDiagnostics diag;
      diag.min_R = d.at("min_R");
      diag.max_R = d.at("max_R");
      diag.max_grad = d.at("max_grad").get<std::array<double, kMaxDerivOrder>>();
      diag.lambda_min = d.at("lambda_min");
      diag.lambda_max = d.at("lambda_max");
      diag.h_sup = d.at("h_sup");
      t.slices.push_back(FlowSlice{time, s.at("step").get<long>(), std::move(m), std::move(R), diag,
                                   s.at("primary").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest.string() + ": " + e.what());
  }
  if (t.slices.empty()) throw FormatError("manifest lists no slices");
  return t;
}

}  // namespace rdtf
