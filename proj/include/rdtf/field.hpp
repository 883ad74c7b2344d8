#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rdtf/error.hpp"
#include "rdtf/lattice.hpp"

namespace rdtf {

enum class FieldKind : std::uint32_t { Scalar = 1, Vector = 2, Sym2 = 3, Sym3 = 4 };

constexpr int component_count(FieldKind kind, int dim) noexcept {
  switch (kind) {
    case FieldKind::Scalar: return 1;
    case FieldKind::Vector: return dim;
    case FieldKind::Sym2: return sym_count(dim);
    case FieldKind::Sym3: return dim * sym_count(dim);
  }
  return 0;
}

std::string_view kind_name(FieldKind kind) noexcept;

/// Per-node values on a lattice, stored component-major: the values of one
/// component are contiguous over all nodes.
template <FieldKind K>
class Field {
 public:
  static constexpr FieldKind kind = K;

  explicit Field(const Lattice& lattice, double fill = 0.0)
      : lattice_(lattice),
        comps_(component_count(K, lattice.dim())),
        data_(static_cast<std::size_t>(comps_) * lattice.node_count(), fill) {}

  const Lattice& lattice() const noexcept { return lattice_; }
  int components() const noexcept { return comps_; }
  std::size_t nodes() const noexcept { return lattice_.node_count(); }

  double* comp(int c) noexcept { return data_.data() + c * lattice_.node_count(); }
  const double* comp(int c) const noexcept { return data_.data() + c * lattice_.node_count(); }

  double& operator()(std::size_t node, int c = 0) noexcept {
    return data_[c * lattice_.node_count() + node];
  }
  double operator()(std::size_t node, int c = 0) const noexcept {
    return data_[c * lattice_.node_count() + node];
  }

  /// Symmetric accessors (Sym2): (i, j) and (j, i) address the same slot.
  double& at(std::size_t node, int i, int j) noexcept
    requires(K == FieldKind::Sym2)
  {
    return (*this)(node, sym_index(lattice_.dim(), i, j));
  }
  double at(std::size_t node, int i, int j) const noexcept
    requires(K == FieldKind::Sym2)
  {
    return (*this)(node, sym_index(lattice_.dim(), i, j));
  }
  /// Sym3: slot for d_k T_{ij}.
  double& at(std::size_t node, int k, int i, int j) noexcept
    requires(K == FieldKind::Sym3)
  {
    return (*this)(node, k * sym_count(lattice_.dim()) + sym_index(lattice_.dim(), i, j));
  }
  double at(std::size_t node, int k, int i, int j) const noexcept
    requires(K == FieldKind::Sym3)
  {
    return (*this)(node, k * sym_count(lattice_.dim()) + sym_index(lattice_.dim(), i, j));
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Throws NonFiniteError naming the first offending node and component.
  void require_finite(std::string_view name) const {
    const std::size_t n = nodes();
    for (int c = 0; c < comps_; ++c) {
      const double* p = comp(c);
      for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) throw NonFiniteError(std::string(name), i, c);
    }
  }

  Field& operator+=(const Field& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  /// this += s * o
  Field& axpy(double s, const Field& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Field& a, const Field& b) {
    return a.lattice_ == b.lattice_ && a.data_ == b.data_;
  }

 private:
  Lattice lattice_;
  int comps_;
  std::vector<double> data_;
};

using ScalarField = Field<FieldKind::Scalar>;
using VectorField = Field<FieldKind::Vector>;
using Sym2Field = Field<FieldKind::Sym2>;
using Sym3Field = Field<FieldKind::Sym3>;

/// Pointwise Frobenius norm of a symmetric 2-tensor field against delta
/// (off-diagonal entries counted twice).
ScalarField frobenius(const Sym2Field& f);
/// Max over nodes of the Frobenius norm.
double sup_norm(const Sym2Field& f);

// Checkpoints ---------------------------------------------------------------

struct CheckpointHeader {
  int dim = 0;
  int resolution = 0;
  double extent = 0.0;
  FieldKind kind = FieldKind::Scalar;
  double time = 0.0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint_raw(const std::filesystem::path& path, const CheckpointHeader& header,
                          const std::vector<double>& component_major, int comps);
/// Returns the header and fills `component_major` with the payload.
CheckpointHeader read_checkpoint_raw(const std::filesystem::path& path,
                                     std::vector<double>& component_major);

template <FieldKind K>
void write_checkpoint(const std::filesystem::path& path, const Field<K>& f, double time) {
  const Lattice& l = f.lattice();
  write_checkpoint_raw(path, {l.dim(), l.resolution(), l.extent(), K, time}, f.data(),
                       f.components());
}

template <FieldKind K>
Field<K> read_checkpoint(const std::filesystem::path& path, double* time = nullptr) {
  std::vector<double> payload;
  const CheckpointHeader h = read_checkpoint_raw(path, payload);
  if (h.kind != K)
    throw FormatError("checkpoint " + path.string() + " holds a " +
                      std::string(kind_name(h.kind)) + " field, expected " +
                      std::string(kind_name(K)));
  Field<K> f(Lattice(h.dim, h.resolution, h.extent));
  f.data() = std::move(payload);
  if (time) *time = h.time;
  return f;
}

// CSV -----------------------------------------------------------------------

/// RFC-4180 field quoting.
std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& fields);
  void row(const std::vector<double>& values);

 private:
  struct Impl;
  Impl* impl_;
};

/// Parses RFC-4180 text into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string format_double(double v);

}  // namespace rdtf
