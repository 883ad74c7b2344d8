#include "rdtf/lattice.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include <fmt/format.h>

#include "rdtf/error.hpp"

namespace rdtf {

NonFiniteError::NonFiniteError(std::string what_field, std::size_t node, int component)
    : Error(fmt::format("non-finite value in {} at node {} component {}", what_field, node,
                        component)),
      node_(node),
      component_(component) {}

NotPositiveDefinite::NotPositiveDefinite(std::size_t node, std::vector<double> eigenvalues)
    : Error([&] {
        std::string ev;
        for (double e : eigenvalues) ev += fmt::format(" {:.6g}", e);
        return fmt::format("metric not positive definite at node {} (eigenvalues:{})", node, ev);
      }()),
      node_(node),
      eigenvalues_(std::move(eigenvalues)) {}

CflViolation::CflViolation(double dt, double dt_max)
    : Error(fmt::format("time step {:.6g} exceeds stability bound {:.6g}", dt, dt_max)),
      dt_(dt),
      dt_max_(dt_max) {}

Lattice::Lattice(int dim, int resolution, double extent)
    : dim_(dim), n_(resolution), extent_(extent) {
  if (dim < 2 || dim > kMaxDim)
    throw InvalidArgument(fmt::format("lattice dimension must be in [2, 4], got {}", dim));
  if (resolution < 8)
    throw InvalidArgument(fmt::format("lattice resolution must be >= 8, got {}", resolution));
  if (!(extent > 0.0) || !std::isfinite(extent))
    throw InvalidArgument("lattice extent must be positive and finite");
  dx_ = extent / resolution;
  count_ = 1;
  for (int a = dim - 1; a >= 0; --a) {
    strides_[a] = count_;
    count_ *= static_cast<std::size_t>(resolution);
  }
  if (count_ > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("lattice too large");
  cell_volume_ = std::pow(dx_, dim);

  neighbours_ = std::make_shared<NeighbourTable>();
}

void Lattice::build_table() const {
  NeighbourTable& table = *neighbours_;
  for (int a = 0; a < dim_; ++a) {
    table.plus[a].resize(count_);
    table.minus[a].resize(count_);
  }
  for (std::size_t node = 0; node < count_; ++node) {
    for (int a = 0; a < dim_; ++a) {
      const int i = static_cast<int>((node / strides_[a]) % n_);
      const std::size_t base = node - static_cast<std::size_t>(i) * strides_[a];
      table.plus[a][node] = static_cast<std::uint32_t>(base + ((i + 1) % n_) * strides_[a]);
      table.minus[a][node] =
          static_cast<std::uint32_t>(base + ((i + n_ - 1) % n_) * strides_[a]);
    }
  }
}

MultiIndex Lattice::multi_index(std::size_t node) const noexcept {
  MultiIndex idx{};
  for (int a = 0; a < dim_; ++a) idx[a] = static_cast<int>((node / strides_[a]) % n_);
  return idx;
}

Point Lattice::position(std::size_t node) const noexcept {
  Point p{};
  const MultiIndex idx = multi_index(node);
  for (int a = 0; a < dim_; ++a) p[a] = coordinate(idx[a]);
  return p;
}

std::size_t Lattice::node(const MultiIndex& idx) const noexcept {
  std::size_t out = 0;
  for (int a = 0; a < dim_; ++a) {
    int i = idx[a] % n_;
    if (i < 0) i += n_;
    out += static_cast<std::size_t>(i) * strides_[a];
  }
  return out;
}

std::size_t Lattice::shifted(std::size_t node, int axis, int offset) const noexcept {
  const int i = static_cast<int>((node / strides_[axis]) % n_);
  int j = (i + offset) % n_;
  if (j < 0) j += n_;
  return node + (static_cast<std::size_t>(j) - static_cast<std::size_t>(i)) * strides_[axis];
}

double Lattice::min_image(double d) const noexcept {
  return d - extent_ * std::nearbyint(d / extent_);
}

double Lattice::distance(const Point& a, const Point& b) const noexcept {
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) {
    const double d = min_image(a[k] - b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

std::size_t Lattice::nearest_node(const Point& p) const noexcept {
  MultiIndex idx{};
  for (int a = 0; a < dim_; ++a)
    idx[a] = static_cast<int>(std::lround((p[a] + 0.5 * extent_) / dx_));
  return node(idx);
}

NodeMask restrict_ball(const Lattice& lattice, const Point& center, double radius) {
  if (!(radius < 0.5 * lattice.extent()))
    throw InvalidArgument(fmt::format("ball radius {:.6g} must be < L/2 = {:.6g}", radius,
                                      0.5 * lattice.extent()));
  NodeMask mask(lattice.node_count(), 0);
  for (std::size_t node = 0; node < lattice.node_count(); ++node)
    mask[node] = lattice.distance(lattice.position(node), center) < radius ? 1 : 0;
  return mask;
}

std::vector<MultiIndex> ball_offsets(const Lattice& lattice, double radius) {
  std::vector<MultiIndex> out;
  const int n = lattice.dim();
  const int reach = static_cast<int>(std::ceil(radius / lattice.spacing()));
  MultiIndex off{};
  for (int a = 0; a < n; ++a) off[a] = -reach;
  const double r2 = radius * radius;
  while (true) {
    double s = 0.0;
    for (int a = 0; a < n; ++a) s += std::pow(off[a] * lattice.spacing(), 2);
    if (s < r2) out.push_back(off);
    int a = n - 1;
    while (a >= 0 && ++off[a] > reach) off[a--] = -reach;
    if (a < 0) break;
  }
  return out;
}

std::size_t count(const NodeMask& mask) noexcept {
  std::size_t c = 0;
  for (auto m : mask) c += m;
  return c;
}

}  // namespace rdtf
