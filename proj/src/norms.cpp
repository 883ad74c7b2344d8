#include "rdtf/norms.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rdtf/geometry.hpp"
#include "rdtf/stencil.hpp"

namespace rdtf {

std::vector<double> norm_radius_ladder(const Lattice& l, double T, double min_radius_cells) {
  std::vector<double> radii;
  const double cap = std::min(std::sqrt(T), 0.25 * l.extent());
  for (double r = min_radius_cells * l.spacing(); r <= cap * (1 + 1e-12); r *= 2) radii.push_back(r);
  return radii;
}

std::vector<double> time_weights(std::span<const double> times, double a, double b) {
  std::vector<double> w(times.size(), 0.0);
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double lo = j == 0 ? 0.0 : 0.5 * (times[j - 1] + times[j]);
    const double hi = j + 1 == times.size() ? times[j] : 0.5 * (times[j] + times[j + 1]);
    w[j] = std::max(0.0, std::min(hi, b) - std::max(lo, a));
  }
  return w;
}

ScalarField gradient_magnitude(const Sym3Field& d) {
  const Lattice& l = d.lattice();
  const int n = l.dim(), S = sym_count(n);
  ScalarField out(l);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const double w = i == j ? 1.0 : 2.0;
        const double* p = d.comp(k * S + sym_index(n, i, j));
        for (std::size_t x = 0; x < l.node_count(); ++x) out(x) += w * p[x] * p[x];
      }
  for (double& v : out.data()) v = std::sqrt(v);
  return out;
}

namespace {

/// Pair of scale-invariant local terms r^-a ||f||_{L^p (B x (0, r^2))} +
/// r^b ||f||_{L^q (B x (r^2/2, r^2))}, maximised over centres.
struct LocalNormSpec {
  double p, a, q, b;
};

struct LocalTerms {
  double first = 0.0, second = 0.0, combined = 0.0;
};

LocalTerms local_sup(const Lattice& l, const std::vector<const ScalarField*>& f,
                     const std::vector<double>& times, const std::vector<double>& radii,
                     const LocalNormSpec& spec, int stride) {
  LocalTerms out;
  const int n = l.dim();
  const double dv = l.cell_volume();
  // Powers per slice
  std::vector<ScalarField> fp, fq;
  for (const ScalarField* s : f) {
    ScalarField a(l), b(l);
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      a(x) = std::pow(std::abs((*s)(x)), spec.p);
      b(x) = std::pow(std::abs((*s)(x)), spec.q);
    }
    fp.push_back(std::move(a));
    fq.push_back(std::move(b));
  }
  for (double r : radii) {
    const auto offs = ball_offsets(l, r);
    const auto w1 = time_weights(times, 0.0, r * r);
    const auto w2 = time_weights(times, 0.5 * r * r, r * r);
    MultiIndex c{};
    while (true) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t j = 0; j < times.size(); ++j) {
        if (w1[j] == 0.0 && w2[j] == 0.0) continue;
        double a = 0.0, b = 0.0;
        for (const MultiIndex& o : offs) {
          MultiIndex y = c;
          for (int k = 0; k < n; ++k) y[k] += o[k];
          const std::size_t node = l.node(y);
          a += fp[j](node);
          b += fq[j](node);
        }
        s1 += w1[j] * a * dv;
        s2 += w2[j] * b * dv;
      }
      const double t1 = std::pow(r, -spec.a) * std::pow(s1, 1.0 / spec.p);
      const double t2 = std::pow(r, spec.b) * std::pow(s2, 1.0 / spec.q);
      out.first = std::max(out.first, t1);
      out.second = std::max(out.second, t2);
      out.combined = std::max(out.combined, t1 + t2);
      int k = n - 1;
      while (k >= 0 && (c[k] += stride) >= l.resolution()) c[k--] = 0;
      if (k < 0) break;
    }
  }
  return out;
}

}  // namespace

ParabolicNorms norm_parabolic(std::span<const NormSlice> slices, double T,
                              const NormOptions& opt) {
  if (slices.empty()) throw InvalidArgument("norm_parabolic: empty trajectory");
  if (T > slices.back().time * (1 + 1e-12))
    throw InvalidArgument(fmt::format("norm horizon {:.6g} exceeds trajectory horizon {:.6g}", T,
                                      slices.back().time));
  const Lattice& l = slices.front().h->lattice();
  const double n = l.dim();
  ParabolicNorms out;
  out.horizon_T = T;
  out.center_stride = opt.center_stride;
  out.radii = norm_radius_ladder(l, T, opt.min_radius_cells);

  std::vector<double> times;
  std::vector<ScalarField> grads;
  std::vector<const ScalarField*> gp, q0, q1;
  bool have_q0 = true, have_q1 = true;
  for (const NormSlice& s : slices) {
    if (s.time > T * (1 + 1e-12)) break;
    times.push_back(s.time);
    out.sup_term = std::max(out.sup_term, perturbation_sup(*s.h));
    grads.push_back(gradient_magnitude(gradient(*s.h)));
    have_q0 = have_q0 && s.q0;
    have_q1 = have_q1 && s.q1;
    q0.push_back(s.q0);
    q1.push_back(s.q1);
  }
  for (const auto& g : grads) gp.push_back(&g);

  const LocalTerms x = local_sup(l, gp, times, out.radii, {2, n / 2, n + 4, 2 / (n + 4)},
                                 opt.center_stride);
  out.grad_L2_term = x.first;
  out.grad_Ln4_term = x.second;
  out.X_value = out.sup_term + x.combined;
  if (have_q0)
    out.Y0_value = local_sup(l, q0, times, out.radii, {1, n, (n + 4) / 2, 4 / (n + 4)},
                             opt.center_stride)
                       .combined;
  if (have_q1)
    out.Y1_value = local_sup(l, q1, times, out.radii, {2, n / 2, n + 4, 2 / (n + 4)},
                             opt.center_stride)
                       .combined;
  return out;
}

}  // namespace rdtf
