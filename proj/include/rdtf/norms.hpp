#pragma once

#include <span>
#include <vector>

#include "rdtf/field.hpp"

namespace rdtf {

/// One stored time slice fed to the parabolic norms. q0 / q1 are optional
/// pointwise magnitudes of the nonlinear terms (for the Y-norms).
struct NormSlice {
  double time = 0.0;
  const Sym2Field* h = nullptr;
  const ScalarField* q0 = nullptr;
  const ScalarField* q1 = nullptr;
};

struct NormOptions {
  int center_stride = 4;       // ball centres on every k-th node per axis
  double min_radius_cells = 2; // smallest ladder radius in units of dx
};

struct ParabolicNorms {
  double sup_term = 0.0;
  double grad_L2_term = 0.0;
  double grad_Ln4_term = 0.0;
  double X_value = 0.0;
  double Y0_value = 0.0;
  double Y1_value = 0.0;
  double horizon_T = 0.0;
  std::vector<double> radii;
  int center_stride = 0;
};

/// Dyadic radius ladder {r0, 2 r0, ...} capped at min(sqrt(T), L/4).
std::vector<double> norm_radius_ladder(const Lattice& l, double T, double min_radius_cells = 2);

/// Quadrature weight of each slice over the window [a, b]: slice j owns the
/// interval between the midpoints to its neighbours (the first from t = 0).
std::vector<double> time_weights(std::span<const double> times, double a, double b);

/// Discrete X_T, Y0_T (applied to q0), Y1_T (applied to q1). Slices with
/// time > T are ignored; T beyond the last slice is rejected.
ParabolicNorms norm_parabolic(std::span<const NormSlice> slices, double T,
                              const NormOptions& opt = {});

/// Frobenius norm of a Sym3 gradient per node (symmetric pairs counted twice).
ScalarField gradient_magnitude(const Sym3Field& d);

}  // namespace rdtf
