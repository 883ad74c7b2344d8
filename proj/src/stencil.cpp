#include "rdtf/stencil.hpp"

#include <fmt/format.h>

namespace rdtf {

namespace detail {

void d1(const Lattice& l, const double* in, double* out, int axis) {
  const double s = 0.5 / l.spacing();
  const auto nb = l.neighbours();
  for (std::size_t i = 0; i < l.node_count(); ++i)
    out[i] = s * (in[nb.plus(i, axis)] - in[nb.minus(i, axis)]);
}

void d2(const Lattice& l, const double* in, double* out, int axis) {
  const double s = 1.0 / (l.spacing() * l.spacing());
  const auto nb = l.neighbours();
  for (std::size_t i = 0; i < l.node_count(); ++i)
    out[i] = s * (in[nb.plus(i, axis)] - 2.0 * in[i] + in[nb.minus(i, axis)]);
}

void dmixed(const Lattice& l, const double* in, double* out, int a, int b) {
  if (a == b) return d2(l, in, out, a);
  const double s = 0.25 / (l.spacing() * l.spacing());
  const auto nb = l.neighbours();
  for (std::size_t i = 0; i < l.node_count(); ++i) {
    const std::size_t p = nb.plus(i, a), m = nb.minus(i, a);
    out[i] = s * (in[nb.plus(p, b)] - in[nb.minus(p, b)] - in[nb.plus(m, b)] + in[nb.minus(m, b)]);
  }
}

}  // namespace detail

namespace {

void check_axis(const Lattice& l, int axis) {
  if (axis < 0 || axis >= l.dim())
    throw InvalidArgument(fmt::format("axis {} out of range for dimension {}", axis, l.dim()));
}

template <FieldKind K>
Field<K> derivative_impl(const Field<K>& f, int axis, int order) {
  check_axis(f.lattice(), axis);
  if (order != 1 && order != 2) throw InvalidArgument("derivative order must be 1 or 2");
  f.require_finite("fd_derivative input");
  Field<K> out(f.lattice());
  for (int c = 0; c < f.components(); ++c) {
    if (order == 1)
      detail::d1(f.lattice(), f.comp(c), out.comp(c), axis);
    else
      detail::d2(f.lattice(), f.comp(c), out.comp(c), axis);
  }
  return out;
}

}  // namespace

ScalarField fd_derivative(const ScalarField& f, int axis, int order) {
  return derivative_impl(f, axis, order);
}

Sym2Field fd_derivative(const Sym2Field& f, int axis, int order) {
  return derivative_impl(f, axis, order);
}

ScalarField fd_second(const ScalarField& f, int a, int b) {
  check_axis(f.lattice(), a);
  check_axis(f.lattice(), b);
  f.require_finite("fd_second input");
  ScalarField out(f.lattice());
  detail::dmixed(f.lattice(), f.comp(0), out.comp(0), a, b);
  return out;
}

VectorField gradient(const ScalarField& f) {
  f.require_finite("gradient input");
  VectorField out(f.lattice());
  for (int a = 0; a < f.lattice().dim(); ++a) detail::d1(f.lattice(), f.comp(0), out.comp(a), a);
  return out;
}

Sym3Field gradient(const Sym2Field& f) {
  f.require_finite("gradient input");
  const int n = f.lattice().dim(), s = sym_count(n);
  Sym3Field out(f.lattice());
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < s; ++c) detail::d1(f.lattice(), f.comp(c), out.comp(k * s + c), k);
  return out;
}

namespace {

template <FieldKind K>
Field<K> laplacian_impl(const Field<K>& f) {
  f.require_finite("laplacian input");
  const Lattice& l = f.lattice();
  const double s = 1.0 / (l.spacing() * l.spacing());
  Field<K> out(l);
  const auto nb = l.neighbours();
  for (int c = 0; c < f.components(); ++c) {
    const double* in = f.comp(c);
    double* o = out.comp(c);
    for (std::size_t i = 0; i < l.node_count(); ++i) {
      double acc = -2.0 * l.dim() * in[i];
      for (int a = 0; a < l.dim(); ++a) acc += in[nb.plus(i, a)] + in[nb.minus(i, a)];
      o[i] = s * acc;
    }
  }
  return out;
}

}  // namespace

ScalarField laplacian(const ScalarField& f) { return laplacian_impl(f); }
Sym2Field laplacian(const Sym2Field& f) { return laplacian_impl(f); }

}  // namespace rdtf
