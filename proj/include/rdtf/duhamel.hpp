#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "rdtf/flow.hpp"

namespace rdtf {

/// Periodic Euclidean heat propagator on a lattice. The kernel at offset tau is
/// the mass-normalised sample of the periodised Gaussian (4 pi tau)^{-n/2}
/// exp(-|x|^2 / 4 tau); its DFT is evaluated by Poisson summation over images
/// until the tail drops below 1e-14.
class HeatPropagator {
 public:
  explicit HeatPropagator(const Lattice& lattice);
  ~HeatPropagator();
  HeatPropagator(const HeatPropagator&) = delete;
  HeatPropagator& operator=(const HeatPropagator&) = delete;

  const Lattice& lattice() const noexcept { return lattice_; }
  std::size_t spectrum_size() const noexcept { return spec_; }

  using Spectrum = std::vector<std::complex<double>>;

  void forward(const double* in, Spectrum& out) const;
  void inverse(const Spectrum& in, double* out) const;

  /// 1-D symbol tables at offset tau: value[i] and the (imaginary) derivative
  /// symbol deriv[i] for wave index i in [0, N).
  struct Symbol1D {
    std::vector<double> value, deriv;
  };
  Symbol1D symbol_1d(double tau) const;

  /// Wave-number index along `axis` of spectral slot s.
  int wave_index(std::size_t s, int axis) const noexcept;

  /// Real-space kernel K_tau sampled on the lattice (centred at node 0 offsets).
  double kernel_value(const MultiIndex& offset, double tau) const;

 private:
  Lattice lattice_;
  std::size_t spec_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

/// Periodic convolution with K_tau; tau = 0 is the identity.
ScalarField heat_convolve(const HeatPropagator& P, const ScalarField& f, double tau);
Sym2Field heat_convolve(const HeatPropagator& P, const Sym2Field& f, double tau);

struct DuhamelOptions {
  int iterations = 4;
  double cell_dx2 = 0.5;    // time cell in units of dx^2 (rounded so cells divide T)
  double eps_bar = 0.05;    // iterates must stay within 2 * eps_bar of delta
  bool track_norms = true;  // X_T norms of iterates and increments
  int gauss_points = 16;    // quadrature for the endpoint cell
};

struct DuhamelResult {
  FlowTrajectory trajectory;               // final iterate on the time grid
  std::vector<double> increment_sup;       // sup |h^{m+1} - h^m| over all grid times
  std::vector<double> increment_X;         // X_T norm of h^{m+1} - h^m
  std::vector<double> iterate_X;           // X_T norm of h^m (m = 1..)
  double contraction_ratio = 0.0;          // fitted geometric ratio of increment_X
  double cell = 0.0;
};

/// Picard iteration of the integral equation
///   h(t) = K_t * h0 + int_0^t K_{t-s} * Q0[h](s) + dK_{t-s} * Q1[h](s) ds
/// on a uniform time grid. Throws Error when an iterate leaves the 2 eps_bar band.
DuhamelResult duhamel_solve(const Sym2Field& h0, double T, const DuhamelOptions& opt = {});

struct SolverComparison {
  std::vector<double> times;
  std::vector<double> sup_diff;
  std::vector<double> ratio;  // sup_diff / sup |h_A|
  double max_ratio = 0.0;
  double final_sup_diff = 0.0;
};

/// Per common time slice sup |h_A - h_B|. Mismatched lattices are rejected.
SolverComparison compare_solvers(const FlowTrajectory& a, const FlowTrajectory& b);

}  // namespace rdtf
