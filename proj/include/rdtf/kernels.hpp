#pragma once

#include <string>
#include <vector>

#include "rdtf/flow.hpp"

namespace rdtf {

enum class KernelDirection { Forward, Backward };

struct KernelField {
  KernelDirection direction = KernelDirection::Forward;
  Point base{};
  double base_time = 0.0;
  std::vector<double> times;
  std::vector<ScalarField> values;
  std::vector<double> mass_delta;  // sum u dx^n
  std::vector<double> mass_g;      // sum u sqrt(det g) dx^n
  double min_value = 0.0;          // most negative value seen (relative to the max)
  bool negativity = false;         // below the -1e-12 relative floor
};

/// Normalised Gaussian of width sigma (sum * dx^n = 1) centred at p.
ScalarField dirac_surrogate(const Lattice& l, const Point& p, double sigma);

/// Piecewise-linear-in-time access to a stored trajectory.
class MetricClock {
 public:
  explicit MetricClock(const FlowTrajectory& traj);
  /// g^{-1} at time t from the linearly interpolated metric.
  const Sym2Field& inverse(double t);
  /// R linearly interpolated between slices.
  ScalarField scalar(double t) const;
  MetricField metric(double t) const;

 private:
  void bracket(double t, std::size_t& i, double& theta) const;
  const FlowTrajectory& traj_;
  double cached_t_ = -1.0;
  Sym2Field cached_;
};

struct KernelOptions {
  double width_cells = 2.0;  // surrogate width in units of dx
  std::vector<double> output_times;  // empty: every stored slice time in range
  bool store_every_step = false;
};

/// Both kernels start from the surrogate divided by sqrt(det g) at the base
/// time, i.e. unit mass in dg.
/// dPhi/dt = g^{ij} d_i d_j Phi (= Delta_g Phi - X.grad Phi for the flat
/// background) from the surrogate at (y, s), RK2 with the flow's dt.
KernelField forward_kernel(const FlowTrajectory& traj, const Point& y, double s, double t_end,
                           const KernelOptions& opt = {});

/// -du/dt = g^{ij} d_i d_j u - (1 - 2/n) R u backward from the surrogate at
/// (p, t1) down to the first flow step >= t_min; every integration step is stored. Requires stored
/// slices at every step of the window.
KernelField backward_kernel(const FlowTrajectory& traj, const Point& p, double t1, double t_min,
                            const KernelOptions& opt = {});

struct GaussianFit {
  double C_fit = 0.0;
  double D_fit = 0.0;
  double residual = 0.0;
  double q_max = 0.0;     // fit window in |x-y|^2 / tau
  double C2 = 0.0, D2 = 0.0;
  std::vector<double> tail_radii, tail_mass;
  bool pointwise_ok = false;
  bool tail_ok = false;
};

/// Least-squares fit of log Phi against |x-y|^2/tau over nodes above
/// floor * max, plus an envelope fit of the tail mass outside B(y, r).
GaussianFit gaussian_bound_fit(const ScalarField& phi, const Point& y, double tau,
                               double floor = 1e-6);

/// Fraction of sum(phi) at minimum-image distance >= r from y.
double tail_fraction(const ScalarField& phi, const Point& y, double r);

/// c0 = sup over slices of t * max(0, -min R).
double measure_c0(const FlowTrajectory& traj, double t_lo = 0.0);

struct PairingSeries {
  std::vector<double> times, values;
  double monotonicity_defect = 0.0;  // max over consecutive pairs of (earlier - later)
  double final_value = 0.0;
  double surrogate_R = 0.0;  // R(p, t1) averaged over the surrogate
  // Green-identity audit: the continuum rate is 2 int |Ric - R g/n|^2 u dg >= 0.
  std::vector<double> identity;     // per slice
  double max_rate_error = 0.0;      // max |(v_{k+1} - v_k)/dt - mean identity|
  double max_identity = 0.0;
};

PairingSeries pairing_curve(const FlowTrajectory& traj, const KernelField& u,
                            bool with_identity = false);

struct BackwardBound {
  std::vector<double> times, scaled_sup;  // sup u(t) * t^{(1-2/n) c0}
  double exponent = 0.0;  // fitted slope of log scaled_sup vs log t
  double c0 = 0.0;
};
BackwardBound backward_bound_fit(const KernelField& u, double c0, int dim, double t_lo, double t_hi);

}  // namespace rdtf
