#include "rdtf/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace rdtf {

namespace {

constexpr double kNegFloor = -1e-12;

double node_sum(const ScalarField& f) {
  double s = 0.0;
  for (std::size_t x = 0; x < f.nodes(); ++x) s += f(x);
  return s;
}

double weighted_sum(const ScalarField& f, const ScalarField& w) {
  double s = 0.0;
  for (std::size_t x = 0; x < f.nodes(); ++x) s += f(x) * w(x);
  return s;
}

// Relative negativity of u (<= 0).
double relative_min(const ScalarField& u) {
  double lo = 0.0, hi = 0.0;
  for (std::size_t x = 0; x < u.nodes(); ++x) {
    lo = std::min(lo, u(x));
    hi = std::max(hi, u(x));
  }
  return hi > 0.0 ? lo / hi : lo;
}

// L u = g^{ij} d_i d_j u - c R u.
ScalarField apply(MetricClock& clock, double t, const ScalarField& u, double c) {
  ScalarField out = metric_hessian_trace(clock.inverse(t), u);
  if (c != 0.0) {
    const ScalarField R = clock.scalar(t);
    for (std::size_t x = 0; x < u.nodes(); ++x) out(x) -= c * R(x) * u(x);
  }
  return out;
}

void record(KernelField& k, MetricClock& clock, double t, const ScalarField& u) {
  const double cell = u.lattice().cell_volume();
  k.times.push_back(t);
  k.values.push_back(u);
  k.mass_delta.push_back(node_sum(u) * cell);
  k.mass_g.push_back(weighted_sum(u, volume_density(clock.metric(t))) * cell);
}

void check_sign(KernelField& k, const ScalarField& u, double t) {
  u.require_finite("kernel");
  const double m = relative_min(u);
  k.min_value = std::min(k.min_value, m);
  if (m < kNegFloor && !k.negativity) {
    k.negativity = true;
    fmt::print(stderr, "kernel negativity {:.3e} (relative) at t = {:.6g}\n", m, t);
  }
}

}  // namespace

ScalarField dirac_surrogate(const Lattice& l, const Point& p, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("surrogate width must be positive");
  ScalarField f(l);
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const double r = l.distance(l.position(x), p);
    f(x) = std::exp(-r * r / (2.0 * sigma * sigma));
  }
  f *= 1.0 / (node_sum(f) * l.cell_volume());
  return f;
}

namespace {
// Surrogate with unit mass in dg: u = w / sqrt(det g), so sum u dg = sum w dx^n = 1.
ScalarField surrogate_in(const MetricField& m, const Point& p, double sigma) {
  ScalarField u = dirac_surrogate(m.lattice(), p, sigma);
  const ScalarField vol = volume_density(m);
  for (std::size_t x = 0; x < u.nodes(); ++x) u(x) /= vol(x);
  return u;
}
}  // namespace

MetricClock::MetricClock(const FlowTrajectory& traj) : traj_(traj), cached_(traj.lattice()) {
  if (traj.slices.empty()) throw InvalidArgument("empty trajectory");
}

void MetricClock::bracket(double t, std::size_t& i, double& theta) const {
  const auto& s = traj_.slices;
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (t < s.front().time - tol || t > s.back().time + tol)
    throw InvalidArgument(fmt::format("t = {:.9g} outside the trajectory", t));
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const FlowSlice& sl) { return v < sl.time; });
  if (it == s.begin()) it = s.begin() + 1;
  if (it == s.end()) it = s.end() - 1;
  i = static_cast<std::size_t>(it - s.begin()) - 1;
  if (s.size() == 1) {
    i = 0;
    theta = 0.0;
    return;
  }
  const double a = s[i].time, b = s[i + 1].time;
  theta = std::clamp((t - a) / (b - a), 0.0, 1.0);
}

MetricField MetricClock::metric(double t) const {
  std::size_t i;
  double th;
  bracket(t, i, th);
  if (th == 0.0 || traj_.slices.size() == 1) return traj_.slices[i].metric;
  if (th == 1.0) return traj_.slices[i + 1].metric;
  Sym2Field h = traj_.slices[i].metric.h();
  h *= 1.0 - th;
  h.axpy(th, traj_.slices[i + 1].metric.h());
  return MetricField(std::move(h));
}

const Sym2Field& MetricClock::inverse(double t) {
  if (t != cached_t_) {
    cached_ = inverse_metric(metric(t));
    cached_t_ = t;
  }
  return cached_;
}

ScalarField MetricClock::scalar(double t) const {
  std::size_t i;
  double th;
  bracket(t, i, th);
  if (th == 0.0 || traj_.slices.size() == 1) return traj_.slices[i].scalar;
  ScalarField R = traj_.slices[i].scalar;
  R *= 1.0 - th;
  R.axpy(th, traj_.slices[i + 1].scalar);
  return R;
}

KernelField forward_kernel(const FlowTrajectory& traj, const Point& y, double s, double t_end,
                           const KernelOptions& opt) {
  if (!(t_end > s)) throw InvalidArgument("forward kernel needs s < t_end");
  MetricClock clock(traj);
  const Lattice& l = traj.lattice();
  const long steps = std::max(1L, static_cast<long>(std::ceil((t_end - s) / traj.dt - 1e-9)));
  const double dt = (t_end - s) / static_cast<double>(steps);

  std::vector<long> outputs;
  for (double t : opt.output_times) {
    if (t < s || t > t_end) throw InvalidArgument("output time outside [s, t_end]");
    outputs.push_back(std::lround((t - s) / dt));
  }
  outputs.push_back(steps);
  std::sort(outputs.begin(), outputs.end());

  KernelField k;
  k.direction = KernelDirection::Forward;
  k.base = y;
  k.base_time = s;
  ScalarField u = surrogate_in(clock.metric(s), y, opt.width_cells * l.spacing());
  record(k, clock, s, u);
  std::size_t next = 0;
  while (next < outputs.size() && outputs[next] == 0) ++next;
  for (long n = 1; n <= steps; ++n) {
    const double t0 = s + static_cast<double>(n - 1) * dt;
    ScalarField k1 = apply(clock, t0, u, 0.0);
    ScalarField mid = u;
    mid.axpy(0.5 * dt, k1);
    ScalarField k2 = apply(clock, t0 + 0.5 * dt, mid, 0.0);
    u.axpy(dt, k2);
    const double t = n == steps ? t_end : s + static_cast<double>(n) * dt;
    check_sign(k, u, t);
    bool store = opt.store_every_step;
    while (next < outputs.size() && outputs[next] == n) {
      store = true;
      ++next;
    }
    if (store) record(k, clock, t, u);
  }
  return k;
}

KernelField backward_kernel(const FlowTrajectory& traj, const Point& p, double t1, double t_min,
                            const KernelOptions& opt) {
  if (!(t1 > t_min) || t_min < 0.0) throw InvalidArgument("backward kernel needs 0 <= t_min < t1");
  const Lattice& l = traj.lattice();
  const int n = l.dim();
  const double dt = traj.dt;
  // down to the first step at or after t_min
  const long steps = static_cast<long>(std::floor((t1 - t_min) / dt + 1e-9));
  if (steps < 1) throw InvalidArgument("backward window shorter than one flow step");
  // Dense slices: every step of the window must be stored.
  const std::size_t top = traj.index_of(t1);
  if (top < static_cast<std::size_t>(steps))
    throw InvalidArgument("missing dense slices in the backward window");
  for (long k = 0; k <= steps; ++k) {
    const auto& sl = traj.slices[top - static_cast<std::size_t>(k)];
    if (std::abs(sl.time - (t1 - static_cast<double>(k) * dt)) > 1e-9 * std::max(1.0, t1))
      throw InvalidArgument(fmt::format("missing dense slice at t = {:.9g}",
                                        t1 - static_cast<double>(k) * dt));
  }

  MetricClock clock(traj);
  const double c = 1.0 - 2.0 / static_cast<double>(n);
  KernelField k;
  k.direction = KernelDirection::Backward;
  k.base = p;
  k.base_time = t1;
  ScalarField u = surrogate_in(clock.metric(t1), p, opt.width_cells * l.spacing());
  record(k, clock, t1, u);
  for (long m = 1; m <= steps; ++m) {
    const auto& hi = traj.slices[top - static_cast<std::size_t>(m - 1)];
    const auto& lo = traj.slices[top - static_cast<std::size_t>(m)];
    const double h = hi.time - lo.time;
    ScalarField k1 = apply(clock, hi.time, u, c);
    ScalarField mid = u;
    mid.axpy(0.5 * h, k1);
    ScalarField k2 = apply(clock, hi.time - 0.5 * h, mid, c);
    u.axpy(h, k2);
    check_sign(k, u, lo.time);
    record(k, clock, lo.time, u);
  }
  // ascending time
  std::reverse(k.times.begin(), k.times.end());
  std::reverse(k.values.begin(), k.values.end());
  std::reverse(k.mass_delta.begin(), k.mass_delta.end());
  std::reverse(k.mass_g.begin(), k.mass_g.end());
  return k;
}

double tail_fraction(const ScalarField& phi, const Point& y, double r) {
  const Lattice& l = phi.lattice();
  double out = 0.0, total = 0.0;
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    total += phi(x);
    if (l.distance(l.position(x), y) >= r) out += phi(x);
  }
  return out / total;
}

GaussianFit gaussian_bound_fit(const ScalarField& phi, const Point& y, double tau, double floor) {
  if (!(tau > 0.0)) throw InvalidArgument("fit needs t - s > 0");
  const Lattice& l = phi.lattice();
  const int n = l.dim();
  double peak = 0.0;
  for (std::size_t x = 0; x < l.node_count(); ++x) peak = std::max(peak, phi(x));
  if (!(peak > 0.0)) throw InvalidArgument("kernel has no positive values");

  // Shells of width 0.5 in q = |x-y|^2 / tau, inside the inscribed ball.
  const double r_max = 0.5 * l.extent() - l.spacing();
  const double dq = 0.5;
  const int shells = static_cast<int>(std::ceil(r_max * r_max / tau / dq)) + 1;
  std::vector<double> sum_log(shells, 0.0), sum_q(shells, 0.0);
  std::vector<long> cnt(shells, 0);
  std::vector<std::pair<double, double>> window;  // (q, phi)
  double lo = peak;
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const double r = l.distance(l.position(x), y);
    if (r > r_max || phi(x) < floor * peak) continue;
    const double q = r * r / tau;
    const int b = std::min(shells - 1, static_cast<int>(q / dq));
    sum_log[b] += std::log(phi(x));
    sum_q[b] += q;
    ++cnt[b];
    window.emplace_back(q, phi(x));
    lo = std::min(lo, phi(x));
  }
  int used = 0;
  for (long c : cnt) used += c > 0;
  if (used < 4 || peak / lo < 1e3)
    throw InvalidArgument(fmt::format("insufficient dynamic range ({} shells, ratio {:.3g})",
                                      used, peak / lo));

  // Weighted LS over shell means.
  double W = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (int b = 0; b < shells; ++b) {
    if (!cnt[b]) continue;
    const double w = static_cast<double>(cnt[b]);
    const double xq = sum_q[b] / w, yl = sum_log[b] / w;
    W += w;
    Sx += w * xq;
    Sy += w * yl;
    Sxx += w * xq * xq;
    Sxy += w * xq * yl;
  }
  const double slope = (W * Sxy - Sx * Sy) / (W * Sxx - Sx * Sx);
  const double icpt = (Sy - slope * Sx) / W;
  GaussianFit fit;
  if (!(slope < 0.0)) throw InvalidArgument("kernel profile is not decaying");
  fit.D_fit = -1.0 / slope;
  double ss = 0.0, qmax = 0.0, env = 0.0;
  const double norm = std::pow(tau, 0.5 * n);
  for (auto [q, v] : window) {
    const double res = std::log(v) - (icpt + slope * q);
    ss += res * res;
    qmax = std::max(qmax, q);
    env = std::max(env, v * norm * std::exp(q / fit.D_fit));
  }
  fit.residual = std::sqrt(ss / static_cast<double>(window.size()));
  fit.q_max = qmax;
  fit.C_fit = env;
  fit.pointwise_ok = true;
  for (auto [q, v] : window)
    if (v > fit.C_fit / norm * std::exp(-q / fit.D_fit) * (1.0 + 1e-12)) fit.pointwise_ok = false;
  fit.pointwise_ok = fit.pointwise_ok && fit.C_fit > 0.0 && fit.D_fit > 0.0;

  // Tail ladder r = k sqrt(tau) / 2 while the tail is resolvable.
  std::vector<double> xs, ys;
  for (int k = 1;; ++k) {
    const double r = 0.5 * k * std::sqrt(tau);
    if (r > r_max) break;
    const double m = tail_fraction(phi, y, r);
    if (m < 1e-12) break;
    fit.tail_radii.push_back(r);
    fit.tail_mass.push_back(m);
    if (r * r / tau >= 2.0) {  // beyond the core
      xs.push_back(r * r / tau);
      ys.push_back(std::log(m));
    }
  }
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= xs.size();
    my /= xs.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      num += (xs[i] - mx) * (ys[i] - my);
      den += (xs[i] - mx) * (xs[i] - mx);
    }
    const double s2 = num / den;
    if (s2 < 0.0) {
      fit.D2 = -1.0 / s2;
      for (std::size_t i = 0; i < fit.tail_radii.size(); ++i) {
        const double q = fit.tail_radii[i] * fit.tail_radii[i] / tau;
        fit.C2 = std::max(fit.C2, fit.tail_mass[i] * std::exp(q / fit.D2));
      }
      fit.tail_ok = true;
      for (std::size_t i = 0; i < fit.tail_radii.size(); ++i) {
        const double q = fit.tail_radii[i] * fit.tail_radii[i] / tau;
        if (std::log(fit.tail_mass[i]) > std::log(fit.C2) - q / fit.D2 + 1e-12) fit.tail_ok = false;
      }
    }
  }
  return fit;
}

double measure_c0(const FlowTrajectory& traj, double t_lo) {
  double c0 = 0.0;
  for (const auto& s : traj.slices)
    if (s.time > t_lo) c0 = std::max(c0, s.time * std::max(0.0, -s.diag.min_R));
  return c0;
}

PairingSeries pairing_curve(const FlowTrajectory& traj, const KernelField& u, bool with_identity) {
  PairingSeries out;
  const Lattice& l = traj.lattice();
  const double cell = l.cell_volume();
  for (std::size_t k = 0; k < u.times.size(); ++k) {
    const FlowSlice& s = traj.slices[traj.index_of(u.times[k])];
    const ScalarField vol = volume_density(s.metric);
    double acc = 0.0;
    for (std::size_t x = 0; x < l.node_count(); ++x) acc += s.scalar(x) * u.values[k](x) * vol(x);
    out.times.push_back(u.times[k]);
    out.values.push_back(acc * cell);
    if (with_identity) {
      const ScalarField rc = traceless_ricci_sq(s.metric, curvature(s.metric, false));
      double id = 0.0;
      for (std::size_t x = 0; x < l.node_count(); ++x) id += 2.0 * rc(x) * u.values[k](x) * vol(x);
      out.identity.push_back(id * cell);
      out.max_identity = std::max(out.max_identity, id * cell);
    }
  }
  for (std::size_t k = 1; with_identity && k < out.values.size(); ++k) {
    const double rate = (out.values[k] - out.values[k - 1]) / (out.times[k] - out.times[k - 1]);
    const double id = 0.5 * (out.identity[k] + out.identity[k - 1]);
    out.max_rate_error = std::max(out.max_rate_error, std::abs(rate - id));
  }
  for (std::size_t k = 1; k < out.values.size(); ++k)
    out.monotonicity_defect = std::max(out.monotonicity_defect, out.values[k - 1] - out.values[k]);
  if (!out.values.empty()) out.final_value = out.values.back();
  // R at the base time averaged over the surrogate
  const double t1 = u.direction == KernelDirection::Backward ? u.base_time : u.times.back();
  const FlowSlice& top = traj.slices[traj.index_of(t1)];
  const ScalarField w = dirac_surrogate(l, u.base, 2.0 * l.spacing());
  out.surrogate_R = weighted_sum(top.scalar, w) / node_sum(w);
  return out;
}

BackwardBound backward_bound_fit(const KernelField& u, double c0, int dim, double t_lo, double t_hi) {
  BackwardBound b;
  b.c0 = c0;
  const double gamma = (1.0 - 2.0 / dim) * c0;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < u.times.size(); ++k) {
    const double t = u.times[k];
    if (t < t_lo * (1 - 1e-12) || t > t_hi * (1 + 1e-12) || t <= 0.0) continue;
    const double v = u.values[k].max_abs() * std::pow(t, gamma);
    b.times.push_back(t);
    b.scaled_sup.push_back(v);
    lx.push_back(std::log(t));
    ly.push_back(std::log(v));
  }
  if (lx.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= lx.size();
    my /= lx.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      num += (lx[i] - mx) * (ly[i] - my);
      den += (lx[i] - mx) * (lx[i] - mx);
    }
    b.exponent = num / den;
  }
  return b;
}

}  // namespace rdtf
