#include "rdtf/singular.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rdtf/stencil.hpp"

namespace rdtf {

std::string_view singular_kind_name(SingularKind k) noexcept {
  switch (k) {
    case SingularKind::Point: return "point";
    case SingularKind::Dust: return "dust";
    case SingularKind::Segment: return "segment";
    case SingularKind::Custom: return "custom";
  }
  return "?";
}

SingularKind parse_singular_kind(std::string_view s) {
  if (s == "point") return SingularKind::Point;
  if (s == "dust") return SingularKind::Dust;
  if (s == "segment") return SingularKind::Segment;
  if (s == "custom") return SingularKind::Custom;
  throw InvalidArgument(fmt::format("unknown singular kind '{}'", s));
}

double declared_alpha(const SingularSpec& s, int dim) {
  switch (s.kind) {
    case SingularKind::Point:
    case SingularKind::Custom: return dim;  // finite point sets
    case SingularKind::Dust: return dim - 2.0 * std::log(2.0) / std::log(3.0);
    case SingularKind::Segment: return dim - 1.0;
  }
  return 0.0;
}

bool within_hypotheses(const SingularSpec& s, int dim) { return declared_alpha(s, dim) > 2.0; }

namespace {

// Midpoints of the 2^depth intervals of the middle-thirds construction on [-h, h].
std::vector<double> cantor_midpoints(double half, int depth) {
  std::vector<std::pair<double, double>> iv{{-half, half}};
  for (int d = 0; d < depth; ++d) {
    std::vector<std::pair<double, double>> next;
    for (auto [a, b] : iv) {
      const double w = (b - a) / 3.0;
      next.emplace_back(a, a + w);
      next.emplace_back(b - w, b);
    }
    iv = std::move(next);
  }
  std::vector<double> mid;
  for (auto [a, b] : iv) mid.push_back(0.5 * (a + b));
  return mid;
}

double radius_from_origin(const Lattice& l, const Point& p) {
  double s = 0.0;
  for (int a = 0; a < l.dim(); ++a) s += p[a] * p[a];
  return std::sqrt(s);
}

// 1 on [0, L/4], 0 beyond 3L/8, quintic smoothstep in between.
double taper(double rho, double L) {
  const double s = std::clamp((rho - 0.25 * L) / (0.125 * L), 0.0, 1.0);
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

}  // namespace

std::vector<Point> singular_points(const SingularSpec& s, const Lattice& l) {
  const double L = l.extent();
  std::vector<Point> pts;
  switch (s.kind) {
    case SingularKind::Point: pts.push_back(s.anchor); break;
    case SingularKind::Custom: pts = s.points; break;
    case SingularKind::Dust: {
      if (s.depth < 0 || s.depth > 8) throw InvalidArgument("dust depth must be in [0, 8]");
      const double len = s.extent > 0.0 ? s.extent : L / 3.0;
      const auto mid = cantor_midpoints(0.5 * len, s.depth);
      for (double u : mid)
        for (double v : mid) {
          Point p = s.anchor;
          p[0] += u;
          p[1] += v;
          pts.push_back(p);
        }
      break;
    }
    case SingularKind::Segment: {
      if (s.axis < 0 || s.axis >= l.dim()) throw InvalidArgument("segment axis out of range");
      const double len = s.extent > 0.0 ? s.extent : L / 4.0;
      const int k = std::max(1, static_cast<int>(std::ceil(len / (0.25 * l.spacing()))));
      for (int i = 0; i <= k; ++i) {
        Point p = s.anchor;
        p[s.axis] += -0.5 * len + len * i / k;
        pts.push_back(p);
      }
      break;
    }
  }
  if (pts.empty()) throw InvalidArgument("singular set is empty");
  return pts;
}

std::vector<Point> singular_set_proxy(const SingularSpec& s, const Lattice& l) {
  if (s.kind != SingularKind::Dust) return singular_points(s, l);
  const double len = s.extent > 0.0 ? s.extent : l.extent() / 3.0;
  const double side = len / std::pow(3.0, s.depth);
  const auto mid = cantor_midpoints(0.5 * len, s.depth);
  const int k = std::max(1, static_cast<int>(std::ceil(side / (0.5 * l.spacing()))));
  std::vector<double> fill;
  for (double c : mid)
    for (int i = 0; i <= k; ++i) fill.push_back(c - 0.5 * side + side * i / k);
  std::vector<Point> pts;
  pts.reserve(fill.size() * fill.size());
  for (double u : fill)
    for (double v : fill) {
      Point p = s.anchor;
      p[0] += u;
      p[1] += v;
      pts.push_back(p);
    }
  return pts;
}

double set_diameter(const std::vector<Point>& points, const Lattice& l) {
  if (points.empty()) return 0.0;
  double lo[kMaxDim] = {}, hi[kMaxDim] = {};
  for (const Point& p : points)
    for (int a = 0; a < l.dim(); ++a) {
      const double d = l.min_image(p[a] - points.front()[a]);
      lo[a] = std::min(lo[a], d);
      hi[a] = std::max(hi[a], d);
    }
  double s = 0.0;
  for (int a = 0; a < l.dim(); ++a) s += (hi[a] - lo[a]) * (hi[a] - lo[a]);
  return std::sqrt(s);
}

GeneratedMetric generate_metric(const SingularSpec& s, const Lattice& l, double eps_bar) {
  const int n = l.dim();
  if (n == 2) throw InvalidArgument("the conformal family needs n >= 3");
  if (!(s.amplitude >= 0.0)) throw InvalidArgument("amplitude must be >= 0");
  const double dx = l.spacing(), L = l.extent();
  const double r0 = s.r0 > 0.0 ? s.r0 : 4.0 * dx;
  const double cap = s.cap > 0.0 ? s.cap : std::pow(r0 / (2.0 * dx), n - 2);
  const double cap_radius = r0 / std::pow(cap, 1.0 / (n - 2));
  if (cap_radius > 2.0 * dx * (1.0 + 1e-12))
    throw InvalidArgument(fmt::format("cap sphere radius {:.4g} exceeds 2dx", cap_radius));

  const auto pts = singular_points(s, l);
  for (const auto& p : pts)
    for (int a = 0; a < n; ++a)
      if (std::abs(p[a]) > 0.25 * L * (1.0 + 1e-12))
        throw InvalidArgument("singular set must lie in the central box of side L/2");
  if (s.kind != SingularKind::Segment)
    for (const auto& p : pts)
      if (radius_from_origin(l, p) > 0.25 * L - 3.0 * dx)
        throw InvalidArgument("anchors must stay 3dx inside the taper radius L/4");

  ScalarField u(l, 1.0);
  const double expo = 4.0 / (n - 2);
  Sym2Field h(l);
  if (s.amplitude > 0.0) {
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const Point px = l.position(x);
      const double chi = taper(radius_from_origin(l, px), L);
      if (chi == 0.0) continue;
      double acc = 0.0;
      for (const auto& p : pts) {
        const double d = l.distance(px, p);
        acc += d > 0.0 ? std::min(cap, std::pow(r0 / d, n - 2)) : cap;
      }
      u(x) = 1.0 + chi * s.amplitude * acc;
    }
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const double f = std::pow(u(x), expo) - 1.0;
      for (int i = 0; i < n; ++i) h.at(x, i, i) = f;
    }
  }
  MetricField m(std::move(h));

  GeneratedMetric out{m, u, {}};
  ValidityReport& r = out.report;
  r.r0 = r0;
  r.cap = cap;
  r.cap_radius = cap_radius;
  r.eps_bar = eps_bar;
  r.eps_measured = perturbation_sup(m.h());
  r.eps_ok = r.eps_measured < eps_bar;
  r.alpha = declared_alpha(s, n);
  r.within_hypotheses = within_hypotheses(s, n);
  const auto eb = bilipschitz_bounds(m);
  r.lambda_min = eb.lambda_min;
  r.lambda_max = eb.lambda_max;
  r.lambda_bound = std::pow(1.0 + s.amplitude * cap * static_cast<double>(pts.size()), expo);

  const ScalarField R = scalar_curvature(m);
  const ScalarField lap = laplacian(u);
  const TubeMask tube = tube_mask(pts, 3.0 * dx, l);
  r.min_R_core = r.min_R_band = r.min_R_off = 0.0;
  r.max_lap_u_off = -std::numeric_limits<double>::infinity();
  bool any_core = false, any_band = false;
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    if (tube.mask[x]) continue;
    const double rho = radius_from_origin(l, l.position(x));
    const bool band = rho >= 0.25 * L && rho <= 0.375 * L;
    r.min_R_off = std::min(r.min_R_off, R(x));
    if (band) {
      r.min_R_band = any_band ? std::min(r.min_R_band, R(x)) : R(x);
      any_band = true;
    } else if (rho < 0.25 * L) {
      r.min_R_core = any_core ? std::min(r.min_R_core, R(x)) : R(x);
      r.max_lap_u_off = std::max(r.max_lap_u_off, lap(x));
      any_core = true;
    }
  }
  return out;
}

MetricField conformal_bump(const Lattice& l, double b, double sigma) {
  const int n = l.dim();
  if (n == 2) throw InvalidArgument("the conformal family needs n >= 3");
  if (!(sigma > 0.0) || !(std::abs(b) < 0.5)) throw InvalidArgument("bad bump parameters");
  Sym2Field h(l);
  const Point o{};
  for (std::size_t x = 0; x < l.node_count(); ++x) {
    const double d = l.distance(l.position(x), o);
    const double u = 1.0 + b * std::exp(-d * d / (2.0 * sigma * sigma));
    for (int i = 0; i < n; ++i) h.at(x, i, i) = std::pow(u, 4.0 / (n - 2)) - 1.0;
  }
  return MetricField(std::move(h));
}

TubeMask tube_mask(const std::vector<Point>& points, double r, const Lattice& l) {
  if (!(r < 0.25 * l.extent())) throw InvalidArgument("tube radius must be < L/4");
  const int n = l.dim();
  const double dx = l.spacing();
  TubeMask t;
  t.mask.assign(l.node_count(), 0);
  if (r <= 0.0) return t;
  const int reach = static_cast<int>(std::ceil(r / dx)) + 1;
  const double r2 = r * r;
  for (const Point& p : points) {
    const std::size_t c = l.nearest_node(p);
    const MultiIndex ci = l.multi_index(c);
    // offset of p from the nearest node, minimum image
    double off[kMaxDim] = {};
    for (int a = 0; a < n; ++a) off[a] = l.min_image(p[a] - l.coordinate(ci[a]));
    MultiIndex o{};
    for (int a = 0; a < n; ++a) o[a] = -reach;
    while (true) {
      double s = 0.0;
      for (int a = 0; a < n; ++a) {
        const double d = o[a] * dx - off[a];
        s += d * d;
      }
      if (s < r2) {
        MultiIndex idx = ci;
        for (int a = 0; a < n; ++a) idx[a] += o[a];
        t.mask[l.node(idx)] = 1;
      }
      int a = n - 1;
      while (a >= 0 && ++o[a] > reach) o[a--] = -reach;
      if (a < 0) break;
    }
  }
  t.count = count(t.mask);
  t.measure = static_cast<double>(t.count) * l.cell_volume();
  return t;
}

double unit_ball_volume(double k) { return std::pow(M_PI, 0.5 * k) / std::tgamma(0.5 * k + 1.0); }

MinkowskiEstimate minkowski_content(const std::vector<Point>& points, double m, const Lattice& l,
                                    double r_min, double r_max) {
  const int n = l.dim();
  if (!(m >= 0.0 && m <= n)) throw InvalidArgument("content dimension must be in [0, n]");
  if (r_min <= 0.0) r_min = 2.0 * l.spacing();
  if (r_max <= 0.0) {
    r_max = l.extent() / 8.0;
    const double diam = set_diameter(points, l);
    if (diam > 0.0) r_max = std::min(r_max, 0.25 * diam);
  }
  MinkowskiEstimate est;
  for (double r = r_min; r <= r_max * (1.0 + 1e-12); r *= 2.0) est.radii.push_back(r);
  if (est.radii.size() < 5)
    throw InvalidArgument(fmt::format("radius ladder [{:.4g}, {:.4g}] has {} < 5 dyadic radii",
                                      r_min, r_max, est.radii.size()));
  const double w = unit_ball_volume(n - m);
  std::vector<double> lx, ly;
  for (double r : est.radii) {
    const TubeMask t = tube_mask(points, r, l);
    est.measure.push_back(t.measure);
    est.content.push_back(t.measure / (w * std::pow(r, n - m)));
    lx.push_back(std::log(r));
    ly.push_back(std::log(std::max(t.measure, 1e-300)));
  }
  est.content_at_min = est.content.front();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= lx.size();
  my /= lx.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  est.slope = num / den;
  est.dimension = n - est.slope;
  return est;
}

}  // namespace rdtf
