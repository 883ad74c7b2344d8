#include "rdtf/duhamel.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>
#include <fmt/format.h>

#include "rdtf/norms.hpp"

namespace rdtf {

namespace {
constexpr double kImageTail = 1e-14;
}

struct HeatPropagator::Plans {
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd = nullptr, inv = nullptr;
  ~Plans() {
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    fftw_free(real);
    fftw_free(cplx);
  }
};

HeatPropagator::HeatPropagator(const Lattice& lattice)
    : lattice_(lattice), plans_(std::make_unique<Plans>()) {
  const int n = lattice.dim(), N = lattice.resolution();
  std::vector<int> dims(n, N);
  spec_ = lattice.node_count() / N * (N / 2 + 1);
  plans_->real = fftw_alloc_real(lattice.node_count());
  plans_->cplx = fftw_alloc_complex(spec_);
  // FFTW_ESTIMATE keeps the chosen algorithm (and hence rounding) run-independent.
  plans_->fwd = fftw_plan_dft_r2c(n, dims.data(), plans_->real, plans_->cplx, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_c2r(n, dims.data(), plans_->cplx, plans_->real, FFTW_ESTIMATE);
  if (!plans_->fwd || !plans_->inv) throw Error("FFTW planning failed");
}

HeatPropagator::~HeatPropagator() = default;

void HeatPropagator::forward(const double* in, Spectrum& out) const {
  std::copy(in, in + lattice_.node_count(), plans_->real);
  fftw_execute(plans_->fwd);
  out.resize(spec_);
  for (std::size_t s = 0; s < spec_; ++s) out[s] = {plans_->cplx[s][0], plans_->cplx[s][1]};
}

void HeatPropagator::inverse(const Spectrum& in, double* out) const {
  for (std::size_t s = 0; s < spec_; ++s) {
    plans_->cplx[s][0] = in[s].real();
    plans_->cplx[s][1] = in[s].imag();
  }
  fftw_execute(plans_->inv);
  const double scale = 1.0 / static_cast<double>(lattice_.node_count());
  for (std::size_t i = 0; i < lattice_.node_count(); ++i) out[i] = plans_->real[i] * scale;
}

int HeatPropagator::wave_index(std::size_t s, int axis) const noexcept {
  const int n = lattice_.dim(), N = lattice_.resolution(), Nh = N / 2 + 1;
  if (axis == n - 1) return static_cast<int>(s % Nh);
  std::size_t stride = Nh;
  for (int a = n - 2; a > axis; --a) stride *= N;
  return static_cast<int>((s / stride) % N);
}

HeatPropagator::Symbol1D HeatPropagator::symbol_1d(double tau) const {
  const int N = lattice_.resolution();
  const double L = lattice_.extent();
  const double K = 2 * M_PI * N / L;  // alias spacing
  Symbol1D sym{std::vector<double>(N, 1.0), std::vector<double>(N, 0.0)};
  if (tau <= 0) return sym;
  auto sums = [&](double k, double& s0, double& s1) {
    s0 = s1 = 0.0;
    // images until exp(-(k + mK)^2 tau) is below the tail threshold
    const int mmax = 1 + static_cast<int>(std::ceil(std::sqrt(-std::log(kImageTail) / tau) / K));
    for (int m = -mmax; m <= mmax; ++m) {
      const double q = k + m * K;
      const double e = std::exp(-q * q * tau);
      s0 += e;
      s1 += q * e;
    }
  };
  double norm, unused;
  sums(0.0, norm, unused);
  for (int i = 0; i < N; ++i) {
    const int w = i <= N / 2 ? i : i - N;
    double s0, s1;
    sums(2 * M_PI * w / L, s0, s1);
    sym.value[i] = s0 / norm;
    sym.deriv[i] = (i == N / 2 && N % 2 == 0) ? 0.0 : s1 / norm;
  }
  return sym;
}

double HeatPropagator::kernel_value(const MultiIndex& offset, double tau) const {
  const int n = lattice_.dim(), N = lattice_.resolution();
  const double dx = lattice_.spacing(), L = lattice_.extent();
  double v = 1.0;
  for (int a = 0; a < n; ++a) {
    // mass-normalised 1-D periodised Gaussian sample
    auto g = [&](int i) {
      const double x = dx * (((i % N) + N) % N);
      double s = 0.0;
      const int mmax = 2 + static_cast<int>(std::ceil(std::sqrt(4 * tau * 32.2) / L));
      for (int m = -mmax; m <= mmax; ++m) s += std::exp(-std::pow(x + m * L, 2) / (4 * tau));
      return s;
    };
    double mass = 0.0;
    for (int i = 0; i < N; ++i) mass += g(i);
    v *= g(offset[a]) / (mass * dx);
  }
  return v;
}

namespace {

template <FieldKind K>
Field<K> convolve_impl(const HeatPropagator& P, const Field<K>& f, double tau) {
  if (tau < 0) throw InvalidArgument("heat_convolve requires tau >= 0");
  if (!(f.lattice() == P.lattice())) throw InvalidArgument("lattice mismatch in heat_convolve");
  if (tau == 0) return f;
  const auto sym = P.symbol_1d(tau);
  const int n = P.lattice().dim();
  Field<K> out(f.lattice());
  HeatPropagator::Spectrum sp;
  for (int c = 0; c < f.components(); ++c) {
    P.forward(f.comp(c), sp);
    for (std::size_t s = 0; s < sp.size(); ++s) {
      double m = 1.0;
      for (int a = 0; a < n; ++a) m *= sym.value[P.wave_index(s, a)];
      sp[s] *= m;
    }
    P.inverse(sp, out.comp(c));
  }
  return out;
}

}  // namespace

ScalarField heat_convolve(const HeatPropagator& P, const ScalarField& f, double tau) {
  return convolve_impl(P, f, tau);
}
Sym2Field heat_convolve(const HeatPropagator& P, const Sym2Field& f, double tau) {
  return convolve_impl(P, f, tau);
}

namespace {

/// Spectral multipliers at one offset: scalar kernel and per-axis gradient.
struct Multipliers {
  std::vector<double> value;               // [s]
  std::vector<std::vector<double>> deriv;  // [p][s], multiplier is i * deriv
};

Multipliers separable(const HeatPropagator& P, const HeatPropagator::Symbol1D& sym) {
  const int n = P.lattice().dim();
  const std::size_t S = P.spectrum_size();
  Multipliers m{std::vector<double>(S), std::vector<std::vector<double>>(n, std::vector<double>(S))};
  for (std::size_t s = 0; s < S; ++s) {
    int w[kMaxDim];
    double prod = 1.0;
    for (int a = 0; a < n; ++a) {
      w[a] = P.wave_index(s, a);
      prod *= sym.value[w[a]];
    }
    m.value[s] = prod;
    for (int p = 0; p < n; ++p) {
      double d = sym.deriv[w[p]];
      for (int a = 0; a < n; ++a)
        if (a != p) d *= sym.value[w[a]];
      m.deriv[p][s] = d;
    }
  }
  return m;
}

/// Exact integral of the multipliers over tau in [0, width] (Gauss-Legendre).
Multipliers integrated(const HeatPropagator& P, double width) {
  using boost::math::quadrature::gauss;
  const int n = P.lattice().dim();
  const std::size_t S = P.spectrum_size();
  Multipliers acc{std::vector<double>(S, 0.0),
                  std::vector<std::vector<double>>(n, std::vector<double>(S, 0.0))};
  const auto& abscissa = gauss<double, 16>::abscissa();
  const auto& weights = gauss<double, 16>::weights();
  auto add = [&](double x, double w) {
    const double tau = 0.5 * width * (1 + x);
    const Multipliers m = separable(P, P.symbol_1d(tau));
    for (std::size_t s = 0; s < S; ++s) {
      acc.value[s] += 0.5 * width * w * m.value[s];
      for (int p = 0; p < n; ++p) acc.deriv[p][s] += 0.5 * width * w * m.deriv[p][s];
    }
  };
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    add(abscissa[i], weights[i]);
    if (abscissa[i] != 0) add(-abscissa[i], weights[i]);
  }
  return acc;
}

}  // namespace

DuhamelResult duhamel_solve(const Sym2Field& h0, double T, const DuhamelOptions& opt) {
  if (opt.iterations < 1) throw InvalidArgument("duhamel_solve needs >= 1 iteration");
  if (!(T > 0)) throw InvalidArgument("duhamel_solve needs T > 0");
  const Lattice& l = h0.lattice();
  const int n = l.dim(), S = sym_count(n);
  if (perturbation_sup(h0) >= opt.eps_bar)
    throw InvalidArgument(fmt::format("initial data outside the small-data band (|h0| = {:.4g} >= {:.4g})",
                                      perturbation_sup(h0), opt.eps_bar));
  const HeatPropagator P(l);
  const int M = std::max(1, static_cast<int>(std::ceil(T / (opt.cell_dx2 * l.spacing() * l.spacing()) - 1e-9)));
  const double d = T / M;

  std::vector<HeatPropagator::Spectrum> h0hat(S);
  for (int c = 0; c < S; ++c) P.forward(h0.comp(c), h0hat[c]);
  std::vector<Multipliers> lag(M + 1);
  for (int k = 1; k <= M; ++k) lag[k] = separable(P, P.symbol_1d(k * d));
  const Multipliers half = integrated(P, 0.5 * d), full = integrated(P, d);
  const std::size_t SP = P.spectrum_size();

  auto linear_part = [&](int k) {
    Sym2Field out(l);
    if (k == 0) return h0;
    HeatPropagator::Spectrum sp(SP);
    for (int c = 0; c < S; ++c) {
      for (std::size_t s = 0; s < SP; ++s) sp[s] = lag[k].value[s] * h0hat[c][s];
      P.inverse(sp, out.comp(c));
    }
    return out;
  };

  std::vector<Sym2Field> iterate;
  for (int k = 0; k <= M; ++k) iterate.push_back(linear_part(k));

  DuhamelResult res;
  res.cell = d;
  std::vector<double> times(M + 1);
  for (int k = 0; k <= M; ++k) times[k] = k * d;

  auto x_norm = [&](const std::vector<Sym2Field>& f) {
    std::vector<NormSlice> ns;
    for (int k = 0; k <= M; ++k) ns.push_back({times[k], &f[k]});
    return norm_parabolic(ns, T).X_value;
  };

  for (int m = 1; m <= opt.iterations; ++m) {
    // Nonlinearities at grid times t_1..t_M (t = 0 is excluded).
    std::vector<std::vector<HeatPropagator::Spectrum>> q0(M + 1), q1(M + 1);
    for (int i = 1; i <= M; ++i) {
      const Nonlinearity q = nonlinear_terms(MetricField(iterate[i]));
      q0[i].resize(S);
      q1[i].resize(n * S);
      for (int c = 0; c < S; ++c) P.forward(q.q0.comp(c), q0[i][c]);
      for (int c = 0; c < n * S; ++c) P.forward(q.q1.comp(c), q1[i][c]);
    }
    std::vector<Sym2Field> next;
    next.push_back(h0);
    std::vector<HeatPropagator::Spectrum> acc(S, HeatPropagator::Spectrum(SP));
    for (int k = 1; k <= M; ++k) {
      for (int c = 0; c < S; ++c)
        for (std::size_t s = 0; s < SP; ++s) acc[c][s] = lag[k].value[s] * h0hat[c][s];
      auto add = [&](const Multipliers& mult, double w, int i) {
        for (int c = 0; c < S; ++c) {
          auto& a = acc[c];
          const auto& f0 = q0[i][c];
          for (std::size_t s = 0; s < SP; ++s) {
            std::complex<double> v = mult.value[s] * f0[s];
            for (int p = 0; p < n; ++p)
              v += std::complex<double>(0.0, mult.deriv[p][s]) * q1[i][p * S + c][s];
            a[s] += w * v;
          }
        }
      };
      if (k == 1) {
        add(full, 1.0, 1);
      } else {
        add(half, 1.0, k);  // endpoint half-cell, Q frozen at t_k
        for (int i = 2; i < k; ++i) add(lag[k - i], d, i);
        add(lag[k - 1], 1.5 * d, 1);  // node 1 also owns [0, d/2]
      }
      Sym2Field h(l);
      for (int c = 0; c < S; ++c) P.inverse(acc[c], h.comp(c));
      const double sup = perturbation_sup(h);
      if (!(sup <= 2 * opt.eps_bar))
        throw Error(fmt::format("Picard iterate {} left the contraction band at t = {:.4g} (|h| = {:.4g})",
                                m, k * d, sup));
      next.push_back(std::move(h));
    }
    double inc = 0.0;
    std::vector<Sym2Field> diff;
    for (int k = 0; k <= M; ++k) {
      Sym2Field dk = next[k];
      dk -= iterate[k];
      inc = std::max(inc, dk.max_abs());
      diff.push_back(std::move(dk));
    }
    res.increment_sup.push_back(inc);
    if (opt.track_norms) {
      res.increment_X.push_back(x_norm(diff));
      res.iterate_X.push_back(x_norm(next));
    }
    iterate = std::move(next);
  }

  if (res.increment_X.size() >= 2) {
    // least-squares slope of log increment vs iteration
    const std::size_t K = res.increment_X.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < K; ++i) {
      if (!(res.increment_X[i] > 0)) continue;
      const double x = i, y = std::log(res.increment_X[i]);
      sx += x; sy += y; sxx += x * x; sxy += x * y; ++cnt;
    }
    if (cnt >= 2) res.contraction_ratio = std::exp((cnt * sxy - sx * sy) / (cnt * sxx - sx * sx));
  }

  FlowTrajectory& t = res.trajectory;
  t.horizon = T;
  t.dt = d;
  t.total_steps = M;
  t.steps_taken = M;
  t.complete = true;
  for (int k = 0; k <= M; ++k) {
    MetricField mf(std::move(iterate[k]));
    ScalarField R = scalar_curvature(mf);
    SliceDiagnostics diag = diagnose(mf, R, 1);
    t.slices.push_back(FlowSlice{times[k], k, std::move(mf), std::move(R), diag, true});
  }
  return res;
}

SolverComparison compare_solvers(const FlowTrajectory& a, const FlowTrajectory& b) {
  if (!(a.lattice() == b.lattice())) throw InvalidArgument("compare_solvers: lattice mismatch");
  SolverComparison out;
  for (const FlowSlice& sa : a.slices) {
    for (const FlowSlice& sb : b.slices) {
      if (std::abs(sa.time - sb.time) > 1e-9 * std::max(1.0, sa.time)) continue;
      Sym2Field dlt = sa.metric.h();
      dlt -= sb.metric.h();
      const double sd = perturbation_sup(dlt);
      const double amp = perturbation_sup(sa.metric.h());
      out.times.push_back(sa.time);
      out.sup_diff.push_back(sd);
      out.ratio.push_back(amp > 0 ? sd / amp : 0.0);
      out.max_ratio = std::max(out.max_ratio, out.ratio.back());
      out.final_sup_diff = sd;
      break;
    }
  }
  if (out.times.empty()) throw InvalidArgument("compare_solvers: no common stored times");
  return out;
}

}  // namespace rdtf
