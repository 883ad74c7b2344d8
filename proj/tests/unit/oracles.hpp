#pragma once
// Shared test-side helpers: analytic fields and small fits, written
// independently of the library code paths they check.

#include <cmath>
#include <vector>

#include "rdtf/field.hpp"

namespace oracle {

inline double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

template <class F>
rdtf::ScalarField sample(const rdtf::Lattice& l, F f) {
  rdtf::ScalarField s(l);
  for (std::size_t x = 0; x < l.node_count(); ++x) s(x) = f(l.position(x));
  return s;
}

inline double max_diff(const rdtf::ScalarField& a, const rdtf::ScalarField& b) {
  double m = 0;
  for (std::size_t x = 0; x < a.nodes(); ++x) m = std::max(m, std::abs(a(x) - b(x)));
  return m;
}

}  // namespace oracle
