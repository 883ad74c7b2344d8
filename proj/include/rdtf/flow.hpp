#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rdtf/geometry.hpp"

namespace rdtf {

struct FlowState {
  MetricField metric;
  double time = 0.0;
  long step_index = 0;
};

/// Explicit stability bound sigma * dx^2 * lambda_min(g) / n.
double stable_dt(const MetricField& m, double sigma = 0.25);

/// One explicit midpoint (RK2) step of dh/dt = rdtf_rhs_h. Throws CflViolation
/// when dt exceeds stable_dt and NotPositiveDefinite if positivity is lost.
FlowState step(const FlowState& s, double dt, double sigma = 0.25);

inline constexpr int kMaxDerivOrder = 4;

struct SliceDiagnostics {
  double min_R = 0.0;
  double max_R = 0.0;
  std::array<double, kMaxDerivOrder> max_grad{};  // max |grad^k h| for k = 1..4
  double lambda_min = 1.0;
  double lambda_max = 1.0;
  double h_sup = 0.0;
};

struct FlowSlice {
  double time = 0.0;
  long step = 0;
  MetricField metric;
  ScalarField scalar;  // R(g_t)
  SliceDiagnostics diag;
  bool primary = true;  // false for slices stored only for the dense window
};

struct StorePolicy {
  double sigma = 0.25;
  double dt_safety = 0.9;       // dt = safety * stable_dt(initial), rounded to the plan
  long min_steps = 0;           // lower bound on the number of steps
  int dyadic_floor_steps = 16;  // smallest dyadic time >= this many steps
  int uniform_count = 0;        // uniform ladder horizon * i / count
  int triplet_offset = 0;       // if > 0, also store +-offset steps around uniform times
  double dense_from = std::numeric_limits<double>::infinity();
  double dense_to = -std::numeric_limits<double>::infinity();
  int dense_stride = 1;
  std::vector<double> extra_times;
  int grad_orders = kMaxDerivOrder;  // derivative orders recorded at primary slices
};

struct FlowTrajectory {
  std::vector<FlowSlice> slices;
  double horizon = 0.0;
  double dt = 0.0;
  long total_steps = 0;
  long steps_taken = 0;
  bool complete = false;
  std::string failure;

  const Lattice& lattice() const { return slices.front().metric.lattice(); }
  /// Index of the slice whose time equals t (to 1e-9 relative); throws if absent.
  std::size_t index_of(double t) const;
  std::vector<double> times() const;
  std::vector<std::size_t> primary_indices() const;
};

/// |grad^k h| per node (Frobenius over all ordered k-fold central differences).
ScalarField derivative_magnitude(const Sym2Field& h, int k);
/// Max |grad^k h| over nodes; k = 0 is the operator-norm sup.
double max_derivative(const Sym2Field& h, int k);
SliceDiagnostics diagnose(const MetricField& m, const ScalarField& R, int grad_orders);

/// Integrates from t = 0 to horizon with a uniform step chosen so that all
/// dyadic and uniform store times land on steps. On a step failure the
/// trajectory is returned truncated with `failure` set.
FlowTrajectory evolve(const MetricField& initial, double horizon, const StorePolicy& policy);
/// Continues a truncated or shorter trajectory to its planned horizon.
FlowTrajectory resume(FlowTrajectory traj, const StorePolicy& policy);

/// Step indices at which `evolve` stores slices.
std::vector<long> store_plan(long total_steps, double horizon, const StorePolicy& p);
long plan_steps(const MetricField& initial, double horizon, const StorePolicy& p);

// Scalar-curvature supersolution ------------------------------------------------

struct ResidualSlice {
  double time;
  double dt_diff;  // half-width of the central time difference
  ScalarField residual;
};

/// residual = d_t R - g^ij d_i d_j R - (2/n) R^2 (the drift Laplacian reduces
/// to g^ij d_i d_j for the flat background) at every interior slice whose two
/// neighbours are equally spaced.
std::vector<ResidualSlice> scalar_supersolution_residual(const FlowTrajectory& traj);

// Pullback to Ricci flow --------------------------------------------------------

struct PullbackReport {
  std::vector<double> times;
  double ricci_residual = 0.0;      // max |d_t g~ + 2 Ric(g~)| (Frobenius, delta)
  double ricci_scale = 0.0;         // max |2 Ric(g~)|
  double volume_residual = 0.0;     // max |d_t log sqrt det g~ + R(g~)|
  double min_jacobian_det = 1.0;
  std::vector<std::vector<double>> log_volume;  // [probe][time]
  std::vector<std::vector<double>> scalar;      // R at the particle [probe][time]
};

/// Flows probes by dx/dt = X(x, t) from t0 with RK2 on multilinear space /
/// linear time interpolation and checks the Ricci-flow and volume laws for
/// the pulled-back metric along the stored slices in [t0, t1].
PullbackReport pullback_crosscheck(const FlowTrajectory& traj, double t0, double t1,
                                   const std::vector<Point>& probes, int substeps = 4);

// Parabolic rescaling -------------------------------------------------------------

/// g'(x, t) = g(x / sqrt(lambda), t / lambda) on the box of side sqrt(lambda) L
/// with the same node count. lambda must be 4^k. The result is verified for
/// step consistency; a mismatch throws.
FlowTrajectory parabolic_rescale(const FlowTrajectory& traj, double lambda,
                                 double sigma = 0.25);

// Persistence -------------------------------------------------------------------

void save_trajectory(const FlowTrajectory& traj, const std::filesystem::path& dir);
FlowTrajectory load_trajectory(const std::filesystem::path& manifest);

}  // namespace rdtf
