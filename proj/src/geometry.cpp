#include "rdtf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Dense>

#include "rdtf/stencil.hpp"

namespace rdtf {

namespace {

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

template <int D>
Mat<D> metric_at(const Sym2Field& h, std::size_t node) {
  Mat<D> g;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) g(i, j) = g(j, i) = h.at(node, i, j) + (i == j ? 1.0 : 0.0);
  return g;
}

template <int D>
Mat<D> sym_at(const Sym2Field& f, std::size_t node) {
  Mat<D> m;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) m(i, j) = m(j, i) = f.at(node, i, j);
  return m;
}

template <int D>
void store_sym(Sym2Field& f, std::size_t node, const Mat<D>& m) {
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) f.at(node, i, j) = 0.5 * (m(i, j) + m(j, i));
}

/// Metric, first and second central differences at one node.
template <int D>
struct Jet {
  Mat<D> g;
  Mat<D> dg[D];      // dg[k](i,j) = d_k g_ij
  Mat<D> ddg[D][D];  // ddg[a][b](i,j) = d_a d_b g_ij
};

template <int D>
void load_jet(const Lattice& l, const Sym2Field& h, std::size_t x, Jet<D>& J, bool second) {
  const double i2 = 0.5 / l.spacing();
  const double idx2 = 1.0 / (l.spacing() * l.spacing());
  J.g = metric_at<D>(h, x);
  const auto nb = l.neighbours();
  std::size_t p[D], m[D];
  for (int a = 0; a < D; ++a) {
    p[a] = nb.plus(x, a);
    m[a] = nb.minus(x, a);
  }
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) {
      const double* c = h.comp(sym_index(D, i, j));
      for (int k = 0; k < D; ++k) J.dg[k](i, j) = J.dg[k](j, i) = i2 * (c[p[k]] - c[m[k]]);
      if (!second) continue;
      for (int a = 0; a < D; ++a) {
        const double v = idx2 * (c[p[a]] - 2.0 * c[x] + c[m[a]]);
        J.ddg[a][a](i, j) = J.ddg[a][a](j, i) = v;
        for (int b = a + 1; b < D; ++b) {
          const double w = 0.25 * idx2 *
                           (c[nb.plus(p[a], b)] - c[nb.minus(p[a], b)] - c[nb.plus(m[a], b)] +
                            c[nb.minus(m[a], b)]);
          J.ddg[a][b](i, j) = J.ddg[a][b](j, i) = w;
          J.ddg[b][a](i, j) = J.ddg[b][a](j, i) = w;
        }
      }
    }
}

/// Gamma[k](i,j) = Gamma^k_ij.
template <int D>
void christoffel_at(const Jet<D>& J, const Mat<D>& gi, Mat<D> (&Gam)[D]) {
  Mat<D> low[D];  // low[l](i,j) = Gamma_{l,ij}
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        low[l](i, j) = 0.5 * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
  for (int k = 0; k < D; ++k) {
    Gam[k].setZero();
    for (int l = 0; l < D; ++l) Gam[k] += gi(k, l) * low[l];
  }
}

struct NodeCurvature {
  double scalar;
  double rm_norm;
};

/// Ricci, scalar, and optionally |Rm|_g at a node. dG from the product rule so
/// that a brute-force index loop over the same stencil data agrees to roundoff.
template <int D>
NodeCurvature curvature_at(const Jet<D>& J, Mat<D>& ric, bool want_rm) {
  const Mat<D> gi = J.g.inverse();
  Mat<D> Gam[D];
  christoffel_at<D>(J, gi, Gam);

  // dGam[m][k](i,j) = d_m Gamma^k_ij
  Mat<D> dGam[D][D];
  for (int m = 0; m < D; ++m) {
    const Mat<D> dgi = -gi * J.dg[m] * gi;
    Mat<D> dlow[D];
    Mat<D> low[D];
    for (int l = 0; l < D; ++l)
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
          dlow[l](i, j) = 0.5 * (J.ddg[m][i](j, l) + J.ddg[m][j](i, l) - J.ddg[m][l](i, j));
          low[l](i, j) = 0.5 * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
        }
    for (int k = 0; k < D; ++k) {
      dGam[m][k].setZero();
      for (int l = 0; l < D; ++l) dGam[m][k] += dgi(k, l) * low[l] + gi(k, l) * dlow[l];
    }
  }

  // Riem[l][i][j][k] = R^l_{ijk}
  double Riem[D][D][D][D];
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        for (int k = 0; k < D; ++k) {
          double v = dGam[i][l](j, k) - dGam[j][l](i, k);
          for (int p = 0; p < D; ++p) v += Gam[l](i, p) * Gam[p](j, k) - Gam[l](j, p) * Gam[p](i, k);
          Riem[l][i][j][k] = v;
        }
  for (int j = 0; j < D; ++j)
    for (int k = 0; k < D; ++k) {
      double v = 0.0;
      for (int i = 0; i < D; ++i) v += Riem[i][i][j][k];
      ric(j, k) = v;
    }
  ric = 0.5 * (ric + ric.transpose()).eval();
  NodeCurvature out{(gi.cwiseProduct(ric)).sum(), 0.0};
  if (!want_rm) return out;

  // |Rm|^2 = R_{lijk} R^{lijk} via successive index moves.
  double A[D][D][D][D], B[D][D][D][D];
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        for (int k = 0; k < D; ++k) {
          double v = 0.0;
          for (int a = 0; a < D; ++a) v += J.g(l, a) * Riem[a][i][j][k];
          A[l][i][j][k] = v;  // fully lowered
        }
  // raise all four indices of A into B (one at a time, reusing buffers)
  auto raise = [&](double (&in)[D][D][D][D], double (&out)[D][D][D][D], int slot) {
    for (int a0 = 0; a0 < D; ++a0)
      for (int a1 = 0; a1 < D; ++a1)
        for (int a2 = 0; a2 < D; ++a2)
          for (int a3 = 0; a3 < D; ++a3) {
            int idx[4] = {a0, a1, a2, a3};
            double v = 0.0;
            for (int b = 0; b < D; ++b) {
              int src[4] = {a0, a1, a2, a3};
              src[slot] = b;
              v += gi(idx[slot], b) * in[src[0]][src[1]][src[2]][src[3]];
            }
            out[a0][a1][a2][a3] = v;
          }
  };
  raise(A, B, 0);
  double C[D][D][D][D];
  raise(B, C, 1);
  raise(C, B, 2);
  raise(B, C, 3);
  double s = 0.0;
  for (int l = 0; l < D; ++l)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        for (int k = 0; k < D; ++k) s += A[l][i][j][k] * C[l][i][j][k];
  out.rm_norm = std::sqrt(std::max(0.0, s));
  return out;
}

}  // namespace

MetricField MetricField::from_metric(const Sym2Field& g) {
  Sym2Field h = g;
  const int n = g.lattice().dim();
  for (int i = 0; i < n; ++i)
    for (double& v : std::span(h.comp(sym_index(n, i, i)), h.nodes())) v -= 1.0;
  return MetricField(std::move(h));
}

Sym2Field MetricField::g() const {
  Sym2Field g = h_;
  const int n = lattice().dim();
  for (int i = 0; i < n; ++i)
    for (double& v : std::span(g.comp(sym_index(n, i, i)), g.nodes())) v += 1.0;
  return g;
}

void require_positive_definite(const MetricField& m) {
  m.h().require_finite("metric");
  dispatch_dim(m.lattice().dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < m.lattice().node_count(); ++x) {
      const Mat<D> g = metric_at<D>(m.h(), x);
      Eigen::LLT<Mat<D>> llt(g);
      if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Mat<D>> es(g, Eigen::EigenvaluesOnly);
        std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + D);
        throw NotPositiveDefinite(x, std::move(ev));
      }
    }
  });
}

Sym2Field inverse_metric(const MetricField& m) {
  require_positive_definite(m);
  Sym2Field out(m.lattice());
  dispatch_dim(m.lattice().dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < m.lattice().node_count(); ++x)
      store_sym<D>(out, x, metric_at<D>(m.h(), x).inverse());
  });
  return out;
}

Sym3Field christoffel(const MetricField& m) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  Sym3Field out(l);
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    Jet<D> J;
    Mat<D> Gam[D];
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, false);
      christoffel_at<D>(J, J.g.inverse(), Gam);
      for (int k = 0; k < D; ++k)
        for (int i = 0; i < D; ++i)
          for (int j = i; j < D; ++j) out.at(x, k, i, j) = Gam[k](i, j);
    }
  });
  return out;
}

CurvatureField curvature(const MetricField& m, bool with_riemann_norm) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  CurvatureField out{ScalarField(l), Sym2Field(l), ScalarField(l)};
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    Jet<D> J;
    Mat<D> ric;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, true);
      const NodeCurvature c = curvature_at<D>(J, ric, with_riemann_norm);
      out.scalar(x) = c.scalar;
      out.riemann_norm(x) = c.rm_norm;
      store_sym<D>(out.ricci, x, ric);
    }
  });
  return out;
}

ScalarField scalar_curvature(const MetricField& m) { return curvature(m, false).scalar; }

VectorField deturck_field(const MetricField& m) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  VectorField out(l);
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    Jet<D> J;
    Mat<D> Gam[D];
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, false);
      const Mat<D> gi = J.g.inverse();
      christoffel_at<D>(J, gi, Gam);
      for (int k = 0; k < D; ++k) out(x, k) = -(gi.cwiseProduct(Gam[k])).sum();
    }
  });
  return out;
}

EigenBounds bilipschitz_bounds(const MetricField& m) {
  EigenBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  dispatch_dim(m.lattice().dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < m.lattice().node_count(); ++x) {
      Eigen::SelfAdjointEigenSolver<Mat<D>> es(metric_at<D>(m.h(), x), Eigen::EigenvaluesOnly);
      b.lambda_min = std::min(b.lambda_min, es.eigenvalues()(0));
      b.lambda_max = std::max(b.lambda_max, es.eigenvalues()(D - 1));
    }
  });
  return b;
}

double perturbation_sup(const Sym2Field& h) {
  double s = 0.0;
  dispatch_dim(h.lattice().dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < h.nodes(); ++x) {
      Eigen::SelfAdjointEigenSolver<Mat<D>> es(sym_at<D>(h, x), Eigen::EigenvaluesOnly);
      s = std::max({s, std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(D - 1))});
    }
  });
  return s;
}

Sym2Field rdtf_rhs_geometric(const MetricField& m) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  const VectorField X = deturck_field(m);
  Sym2Field out(l);
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    const double i2 = 0.5 / l.spacing();
    const auto nb = l.neighbours();
    Jet<D> J;
    Mat<D> ric;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, true);
      curvature_at<D>(J, ric, false);
      Mat<D> dX;  // dX(i, k) = d_i X^k
      for (int i = 0; i < D; ++i)
        for (int k = 0; k < D; ++k) dX(i, k) = i2 * (X(nb.plus(x, i), k) - X(nb.minus(x, i), k));
      Mat<D> lie = Mat<D>::Zero();
      for (int k = 0; k < D; ++k) lie += X(x, k) * J.dg[k];
      lie += dX * J.g + (dX * J.g).transpose();
      store_sym<D>(out, x, -2.0 * ric - lie);
    }
  });
  return out;
}

namespace {

/// Q0 at a node given g, g^-1 and first derivatives of h (= of g).
template <int D>
Mat<D> q0_at(const Mat<D>& gi, const Mat<D> (&dh)[D]) {
  // B[i](p,m) = d_i h_pm ;  C[i](m,p) = d_m h_ip
  Mat<D> C[D];
  for (int i = 0; i < D; ++i)
    for (int m = 0; m < D; ++m)
      for (int p = 0; p < D; ++p) C[i](m, p) = dh[m](i, p);
  const Mat<D>(&B)[D] = dh;
  Mat<D> GBG[D], GCG[D];
  for (int i = 0; i < D; ++i) {
    GBG[i] = gi * B[i] * gi;
    GCG[i] = gi * C[i] * gi;
  }
  // v_q = d_p g^{pq} = -g^{pa} d_p g_ab g^{bq}
  Eigen::Matrix<double, D, 1> v = Eigen::Matrix<double, D, 1>::Zero();
  for (int p = 0; p < D; ++p) v -= (gi.row(p) * B[p] * gi).transpose();

  Mat<D> q;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j) {
      double s = 0.0;
      s += 0.5 * B[i].cwiseProduct(GBG[j]).sum();         // d_i h_pm d_j h_ql g^pq g^ml / 2
      s += (C[i].transpose()).cwiseProduct(GCG[j]).sum();  // d_m h_ip d_q h_jl g^pq g^ml
      s -= gi.cwiseProduct(C[i] * gi * C[j].transpose()).sum();  // d_m h_ip d_l h_jq
      s -= C[i].cwiseProduct(GBG[j]).sum();       // d_p h_il d_j h_qm g^pq g^ml
      s -= B[i].cwiseProduct(GCG[j]).sum();               // d_i h_pm d_q h_jl g^pq g^ml
      s -= v.dot(C[i].col(j));                             // d_p g^pq d_q h_ij
      q(i, j) = q(j, i) = s;
    }
  return q;
}

}  // namespace

Nonlinearity nonlinear_terms(const MetricField& m) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  Nonlinearity out{Sym2Field(l), Sym3Field(l)};
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    Jet<D> J;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, false);
      const Mat<D> gi = J.g.inverse();
      store_sym<D>(out.q0, x, q0_at<D>(gi, J.dg));
      const Mat<D> a = gi - Mat<D>::Identity();
      for (int p = 0; p < D; ++p) {
        Mat<D> q1 = Mat<D>::Zero();
        for (int q = 0; q < D; ++q) q1 += a(p, q) * J.dg[q];
        for (int i = 0; i < D; ++i)
          for (int j = i; j < D; ++j) out.q1.at(x, p, i, j) = q1(i, j);
      }
    }
  });
  return out;
}

Sym2Field rdtf_rhs_h(const MetricField& m) {
  require_positive_definite(m);
  const Lattice& l = m.lattice();
  const int n = l.dim(), S = sym_count(n);
  const Sym2Field gi = inverse_metric(m);
  const Sym3Field dh = gradient(m.h());
  Sym2Field out(l);
  dispatch_dim(n, [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    const double idx = 1.0 / l.spacing();
    const auto nb = l.neighbours();
    Jet<D> J;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      load_jet<D>(l, m.h(), x, J, false);
      const Mat<D> ginv = sym_at<D>(gi, x);
      const Mat<D> ax = ginv - Mat<D>::Identity();
      Mat<D> r = q0_at<D>(ginv, J.dg);
      for (int p = 0; p < D; ++p) {
        const std::size_t xp = nb.plus(x, p), xm = nb.minus(x, p);
        const Mat<D> ap = 0.5 * (ax + sym_at<D>(gi, xp) - Mat<D>::Identity());
        const Mat<D> am = 0.5 * (ax + sym_at<D>(gi, xm) - Mat<D>::Identity());
        for (int c = 0; c < S; ++c) {
          const double* hc = m.h().comp(c);
          // Laplacian plus divergence-form flux of (g^-1 - delta) grad h
          const double fp_pp = (hc[xp] - hc[x]) * idx;
          const double fm_pp = (hc[x] - hc[xm]) * idx;
          double fp = ap(p, p) * fp_pp, fm = am(p, p) * fm_pp;
          for (int q = 0; q < D; ++q) {
            if (q == p) continue;
            const double* dq = dh.comp(q * S + c);
            fp += ap(p, q) * 0.5 * (dq[x] + dq[xp]);
            fm += am(p, q) * 0.5 * (dq[x] + dq[xm]);
          }
          out(x, c) += (fp_pp - fm_pp) * idx + (fp - fm) * idx;
        }
      }
      for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j) out.at(x, i, j) += r(i, j);
    }
  });
  return out;
}

ScalarField traceless_ricci_sq(const MetricField& m, const CurvatureField& c) {
  const Lattice& l = m.lattice();
  ScalarField out(l);
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < l.node_count(); ++x) {
      const Mat<D> g = metric_at<D>(m.h(), x);
      const Mat<D> gi = g.inverse();
      const Mat<D> t = sym_at<D>(c.ricci, x) - (c.scalar(x) / D) * g;
      out(x) = (gi * t * gi).cwiseProduct(t).sum();
    }
  });
  return out;
}

ScalarField volume_density(const MetricField& m) {
  const Lattice& l = m.lattice();
  ScalarField out(l);
  dispatch_dim(l.dim(), [&](auto dc) {
    constexpr int D = decltype(dc)::value;
    for (std::size_t x = 0; x < l.node_count(); ++x)
      out(x) = std::sqrt(metric_at<D>(m.h(), x).determinant());
  });
  return out;
}

ScalarField metric_hessian_trace(const Sym2Field& ginv, const ScalarField& f) {
  const Lattice& l = f.lattice();
  const int n = l.dim();
  ScalarField out(l), tmp(l);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      detail::dmixed(l, f.comp(0), tmp.comp(0), a, b);
      const double w = a == b ? 1.0 : 2.0;
      const double* gc = ginv.comp(sym_index(n, a, b));
      for (std::size_t x = 0; x < l.node_count(); ++x) out(x) += w * gc[x] * tmp(x);
    }
  return out;
}

}  // namespace rdtf
