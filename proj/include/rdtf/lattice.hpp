#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace rdtf {

inline constexpr int kMaxDim = 4;

using Point = std::array<double, kMaxDim>;
using MultiIndex = std::array<int, kMaxDim>;

/// Periodic cubic lattice with N nodes per axis on a box of side L centred
/// at the origin. Node i along an axis sits at -L/2 + i*dx. Linear node
/// indices are row-major (last axis fastest).
class Lattice {
 public:
  Lattice(int dim, int resolution, double extent);

  int dim() const noexcept { return dim_; }
  int resolution() const noexcept { return n_; }
  double extent() const noexcept { return extent_; }
  double spacing() const noexcept { return dx_; }
  std::size_t node_count() const noexcept { return count_; }
  std::size_t stride(int axis) const noexcept { return strides_[axis]; }

  /// dx^n, the volume weight of one node.
  double cell_volume() const noexcept { return cell_volume_; }

  double coordinate(int index) const noexcept { return -0.5 * extent_ + index * dx_; }
  Point position(std::size_t node) const noexcept;
  MultiIndex multi_index(std::size_t node) const noexcept;
  /// Linear index of a (possibly out-of-range) multi-index, wrapped periodically.
  std::size_t node(const MultiIndex& idx) const noexcept;

  /// Neighbour of `node` displaced by +1 or -1 along `axis` (periodic).
  std::size_t plus(std::size_t node, int axis) const noexcept {
    return table().plus[axis][node];
  }
  std::size_t minus(std::size_t node, int axis) const noexcept {
    return table().minus[axis][node];
  }
  std::size_t shifted(std::size_t node, int axis, int offset) const noexcept;

  /// Raw neighbour tables for hot loops (hoists the lazy-build check).
  struct Neighbours {
    std::array<const std::uint32_t*, kMaxDim> p{}, m{};
    std::size_t plus(std::size_t node, int axis) const noexcept { return p[axis][node]; }
    std::size_t minus(std::size_t node, int axis) const noexcept { return m[axis][node]; }
  };
  Neighbours neighbours() const {
    const NeighbourTable& t = table();
    Neighbours nb;
    for (int a = 0; a < dim_; ++a) {
      nb.p[a] = t.plus[a].data();
      nb.m[a] = t.minus[a].data();
    }
    return nb;
  }

  /// Minimum-image representative of a coordinate difference.
  double min_image(double d) const noexcept;
  /// Minimum-image Euclidean distance between two points.
  double distance(const Point& a, const Point& b) const noexcept;
  /// Index of the node nearest to a point (periodic rounding).
  std::size_t nearest_node(const Point& p) const noexcept;

  friend bool operator==(const Lattice& a, const Lattice& b) noexcept {
    return a.dim_ == b.dim_ && a.n_ == b.n_ && a.extent_ == b.extent_;
  }

 private:
  // Built on first use and shared between copies; geometry-only users of
  // large lattices never pay for it.
  struct NeighbourTable {
    std::once_flag once;
    std::array<std::vector<std::uint32_t>, kMaxDim> plus;
    std::array<std::vector<std::uint32_t>, kMaxDim> minus;
  };
  const NeighbourTable& table() const {
    std::call_once(neighbours_->once, [this] { build_table(); });
    return *neighbours_;
  }
  void build_table() const;

  int dim_;
  int n_;
  double extent_;
  double dx_;
  double cell_volume_;
  std::size_t count_;
  std::array<std::size_t, kMaxDim> strides_{};
  std::shared_ptr<NeighbourTable> neighbours_;
};

/// Number of independent components of a symmetric 2-tensor in dimension n.
constexpr int sym_count(int dim) noexcept { return dim * (dim + 1) / 2; }

/// Position of (i, j) in the packed upper triangle (row-major), symmetric in i, j.
constexpr int sym_index(int dim, int i, int j) noexcept {
  if (i > j) {
    const int t = i;
    i = j;
    j = t;
  }
  return i * dim - i * (i - 1) / 2 + (j - i);
}

/// Node mask on a lattice.
using NodeMask = std::vector<std::uint8_t>;

/// Nodes whose minimum-image distance to `center` is strictly below `radius`.
/// Throws InvalidArgument when radius >= L/2.
NodeMask restrict_ball(const Lattice& lattice, const Point& center, double radius);

/// Integer offsets of all nodes within `radius` of the origin node.
std::vector<MultiIndex> ball_offsets(const Lattice& lattice, double radius);

std::size_t count(const NodeMask& mask) noexcept;

}  // namespace rdtf
