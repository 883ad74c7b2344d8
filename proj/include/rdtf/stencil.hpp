#pragma once

#include "rdtf/field.hpp"

namespace rdtf {

// Second-order central differences on the periodic lattice. All operators
// reject non-finite input with the offending node index.

/// order 1: (f[i+1] - f[i-1]) / 2dx; order 2: (f[i+1] - 2f[i] + f[i-1]) / dx^2.
ScalarField fd_derivative(const ScalarField& f, int axis, int order);
Sym2Field fd_derivative(const Sym2Field& f, int axis, int order);

/// Mixed second derivative d_a d_b via the 4-corner stencil (a != b), or the
/// 3-point second difference when a == b.
ScalarField fd_second(const ScalarField& f, int a, int b);

VectorField gradient(const ScalarField& f);
/// Slot (k, ij) holds d_k f_ij.
Sym3Field gradient(const Sym2Field& f);

ScalarField laplacian(const ScalarField& f);
Sym2Field laplacian(const Sym2Field& f);

/// Shift by `offset` nodes along `axis`: out[x] = f[x - offset e_axis].
template <FieldKind K>
Field<K> shift(const Field<K>& f, int axis, int offset) {
  Field<K> out(f.lattice());
  const Lattice& l = f.lattice();
  for (int c = 0; c < f.components(); ++c)
    for (std::size_t i = 0; i < l.node_count(); ++i)
      out(l.shifted(i, axis, offset), c) = f(i, c);
  return out;
}

namespace detail {
void d1(const Lattice& l, const double* in, double* out, int axis);
void d2(const Lattice& l, const double* in, double* out, int axis);
void dmixed(const Lattice& l, const double* in, double* out, int a, int b);
}  // namespace detail

}  // namespace rdtf
