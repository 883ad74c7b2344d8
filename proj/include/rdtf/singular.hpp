#pragma once

#include <string>
#include <vector>

#include "rdtf/geometry.hpp"

namespace rdtf {

enum class SingularKind { Point, Dust, Segment, Custom };

std::string_view singular_kind_name(SingularKind k) noexcept;
SingularKind parse_singular_kind(std::string_view s);

struct SingularSpec {
  SingularKind kind = SingularKind::Point;
  Point anchor{};              // point anchor / dust and segment centre
  std::vector<Point> points;   // custom anchors
  int depth = 3;               // dust depth
  double extent = 0.0;         // dust interval / segment length; 0 -> L/3 (dust), L/4 (segment)
  int axis = 0;                // segment direction; dust uses axes 0 and 1
  double amplitude = 0.0;      // a >= 0
  double r0 = 0.0;             // profile scale; 0 -> 4 dx
  double cap = 0.0;            // M_cap; 0 -> (r0 / 2dx)^{n-2}
};

/// Co-dimension bookkeeping: alpha = n - dim(S) (point n, dust n - log4/log3, segment n - 1).
double declared_alpha(const SingularSpec& s, int dim);
/// The lower bounds need alpha > 2; segment data in n = 3 is a boundary case.
bool within_hypotheses(const SingularSpec& s, int dim);

/// Anchor point set of the singular set; segments are sampled at spacing dx/4.
std::vector<Point> singular_points(const SingularSpec& s, const Lattice& l);

/// Point-set proxy of the set itself for tube and content estimates. Dust is
/// the filled depth-k product set (squares of side extent/3^k sampled at dx/2),
/// not just its midpoints; the other kinds coincide with singular_points.
std::vector<Point> singular_set_proxy(const SingularSpec& s, const Lattice& l);

/// Bounding-box diagonal (minimum-image coordinates relative to the first point).
double set_diameter(const std::vector<Point>& points, const Lattice& l);

struct ValidityReport {
  double eps_measured = 0.0;  // sup |g - delta| (operator norm)
  double eps_bar = 0.0;
  double min_R_core = 0.0;    // off T(S, 3dx) and inside the taper radius
  double min_R_band = 0.0;    // taper band [L/4, 3L/8]
  double min_R_off = 0.0;     // off T(S, 3dx), band included
  double lambda_min = 1.0, lambda_max = 1.0;
  double lambda_bound = 1.0;  // (1 + a M_cap)^{4/(n-2)}
  double max_lap_u_off = 0.0; // max discrete Laplacian of u off T(anchors, 3dx) in the core
  double alpha = 0.0;
  bool within_hypotheses = false;
  bool eps_ok = false;
  double r0 = 0.0, cap = 0.0, cap_radius = 0.0;
};

struct GeneratedMetric {
  MetricField metric;
  ScalarField conformal;  // u
  ValidityReport report;
};

/// g = u^{4/(n-2)} delta with u = 1 + chi(|x|) a sum_p min(M_cap, (r0/d_p)^{n-2}),
/// chi a quintic ramp from 1 at L/4 to 0 at 3L/8. n = 2 is rejected.
GeneratedMetric generate_metric(const SingularSpec& s, const Lattice& l, double eps_bar = 0.1);

/// Smooth conformal bump u = 1 + b exp(-|x|^2 / 2 sigma^2), g = u^{4/(n-2)} delta.
/// b < 0 makes u subharmonic near the origin (R < 0 there).
MetricField conformal_bump(const Lattice& l, double b, double sigma);

/// Nodes within minimum-image distance < r of the point set.
struct TubeMask {
  NodeMask mask;
  std::size_t count = 0;
  double measure = 0.0;
};
TubeMask tube_mask(const std::vector<Point>& points, double r, const Lattice& l);

/// Volume of the unit k-ball.
double unit_ball_volume(double k);

struct MinkowskiEstimate {
  std::vector<double> radii, measure, content;
  double content_at_min = 0.0;
  double dimension = 0.0;  // n - slope of log|T| vs log r
  double slope = 0.0;
};

/// Dyadic ladder r_min 2^k <= r_max. Defaults: r_min = 2dx, r_max = min(L/8, diam/4)
/// (L/8 for a single point); fewer than 5 radii is rejected.
MinkowskiEstimate minkowski_content(const std::vector<Point>& points, double m, const Lattice& l,
                                    double r_min = 0.0, double r_max = 0.0);

}  // namespace rdtf
