#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mcf/errors.hpp"

namespace mcf {

/// Per-node scalar values, stored row-major with axis 0 fastest.
using Field = std::vector<double>;

/// Uniform periodic grid on the flat torus [0, 2pi)^m.
struct GridSpec {
  int m = 1;
  int N = 64;
  int order = 2;  // central-difference stencil order, 2 or 4

  GridSpec() = default;
  GridSpec(int dim, int resolution, int stencil_order = 2) : m(dim), N(resolution), order(stencil_order) {
    validate();
  }

  void validate() const {
    if (m != 1 && m != 2) throw DomainError("grid dimension must be 1 or 2, got " + std::to_string(m));
    if (N < 8) throw DomainError("grid resolution must be >= 8, got " + std::to_string(N));
    if (order != 2 && order != 4) throw DomainError("stencil order must be 2 or 4, got " + std::to_string(order));
  }

  double spacing() const { return 2.0 * std::numbers::pi / static_cast<double>(N); }

  std::size_t nodes() const { return m == 1 ? static_cast<std::size_t>(N) : static_cast<std::size_t>(N) * N; }

  std::size_t stride(int axis) const { return axis == 0 ? 1 : static_cast<std::size_t>(N); }

  std::array<int, 2> multi_index(std::size_t node) const {
    if (m == 1) return {static_cast<int>(node), 0};
    return {static_cast<int>(node % N), static_cast<int>(node / N)};
  }

  std::size_t node_of(int i0, int i1 = 0) const {
    auto wrap = [this](int i) { return ((i % N) + N) % N; };
    return m == 1 ? static_cast<std::size_t>(wrap(i0)) : static_cast<std::size_t>(wrap(i0) + N * wrap(i1));
  }

  /// Parameter value (angle) of a node along an axis.
  double coordinate(std::size_t node, int axis) const { return multi_index(node)[axis] * spacing(); }

  /// Total parameter-space cell measure h^m.
  double cell_measure() const { return std::pow(spacing(), m); }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.m == b.m && a.N == b.N && a.order == b.order;
  }
};

namespace detail {

inline void check_axis(const GridSpec& grid, int axis) {
  if (axis < 0 || axis >= grid.m)
    throw InvalidAxisError("axis " + std::to_string(axis) + " out of range for m=" + std::to_string(grid.m));
}

inline void check_size(const GridSpec& grid, std::span<const double> f) {
  if (f.size() != grid.nodes())
    throw ShapeError("field has " + std::to_string(f.size()) + " values, grid has " + std::to_string(grid.nodes()));
}

// Calls fn(node, plus1, minus1, plus2, minus2) with periodic neighbours along axis.
template <class Fn>
void for_each_stencil(const GridSpec& grid, int axis, Fn&& fn) {
  const int N = grid.N;
  const std::size_t s = grid.stride(axis);
  const std::size_t lines = grid.nodes() / N;
  for (std::size_t line = 0; line < lines; ++line) {
    // A line along `axis` is {base + k*s}; for axis 0 base = line*N, for axis 1 base = line.
    const std::size_t base = axis == 0 ? line * N : line;
    for (int k = 0; k < N; ++k) {
      auto at = [&](int off) { return base + static_cast<std::size_t>(((k + off) % N + N) % N) * s; };
      fn(at(0), at(1), at(-1), at(2), at(-2));
    }
  }
}

}  // namespace detail

/// First partial derivative along `axis` by periodic central differences.
/// The antisymmetric differences are formed before combining so the operator
/// commutes bitwise with index reflections.
inline Field partial(const GridSpec& grid, std::span<const double> f, int axis) {
  detail::check_axis(grid, axis);
  detail::check_size(grid, f);
  Field out(f.size());
  const double h = grid.spacing();
  if (grid.order == 2) {
    const double c = 1.0 / (2.0 * h);
    detail::for_each_stencil(grid, axis, [&](std::size_t n, std::size_t p1, std::size_t m1, std::size_t, std::size_t) {
      out[n] = (f[p1] - f[m1]) * c;
    });
  } else {
    const double c = 1.0 / (12.0 * h);
    detail::for_each_stencil(grid, axis,
                             [&](std::size_t n, std::size_t p1, std::size_t m1, std::size_t p2, std::size_t m2) {
                               out[n] = (8.0 * (f[p1] - f[m1]) - (f[p2] - f[m2])) * c;
                             });
  }
  return out;
}

/// Second partial derivative. Pure second derivatives use the compact stencil;
/// mixed derivatives compose first-derivative stencils, lower axis first, so the
/// result is symmetric in (i, j) bit for bit.
inline Field second_partial(const GridSpec& grid, std::span<const double> f, int i, int j) {
  detail::check_axis(grid, i);
  detail::check_axis(grid, j);
  detail::check_size(grid, f);
  if (i != j) {
    const int lo = i < j ? i : j;
    const int hi = i < j ? j : i;
    return partial(grid, partial(grid, f, lo), hi);
  }
  Field out(f.size());
  const double h = grid.spacing();
  if (grid.order == 2) {
    const double c = 1.0 / (h * h);
    detail::for_each_stencil(grid, i, [&](std::size_t n, std::size_t p1, std::size_t m1, std::size_t, std::size_t) {
      out[n] = ((f[p1] + f[m1]) - 2.0 * f[n]) * c;
    });
  } else {
    const double c = 1.0 / (12.0 * h * h);
    detail::for_each_stencil(grid, i,
                             [&](std::size_t n, std::size_t p1, std::size_t m1, std::size_t p2, std::size_t m2) {
                               out[n] = (16.0 * (f[p1] + f[m1]) - (f[p2] + f[m2]) - 30.0 * f[n]) * c;
                             });
  }
  return out;
}

/// Fourier symbol of the first-derivative stencil: partial(e^{ik theta}) = i k sigma1(k h) e^{ik theta}.
inline double first_derivative_symbol(const GridSpec& grid, double k) {
  const double h = grid.spacing();
  const double x = k * h;
  if (grid.order == 2) return std::sin(x) / x;
  return (8.0 * std::sin(x) - std::sin(2.0 * x)) / (6.0 * x);
}

/// Fourier symbol of the compact second-derivative stencil: second_partial(e^{ik theta}) = -k^2 sigma2(k h) e^{ik theta}.
inline double second_derivative_symbol(const GridSpec& grid, double k) {
  const double h = grid.spacing();
  const double x = k * h;
  if (grid.order == 2) {
    const double s = std::sin(x / 2.0) / (x / 2.0);
    return s * s;
  }
  return (32.0 * (1.0 - std::cos(x)) - 2.0 * (1.0 - std::cos(2.0 * x))) / (12.0 * x * x);
}

/// cos/sin of the grid angles 2 pi k / N with the dihedral symmetries of the
/// grid holding exactly (cos(-t) == cos(t), sin(pi - t) == sin(t), ...).
class TrigTable {
 public:
  explicit TrigTable(int N) : N_(N), quarter_(N % 4 == 0) {
    if (quarter_) {
      const int q = N / 4;
      base_.resize(q + 1);
      for (int k = 0; k <= q; ++k) base_[k] = std::cos(2.0 * std::numbers::pi * k / N);
      base_[0] = 1.0;
      base_[q] = 0.0;
    }
  }

  double cos(int k) const {
    k = ((k % N_) + N_) % N_;
    if (!quarter_) return std::cos(2.0 * std::numbers::pi * k / N_);
    const int q = N_ / 4;
    if (k <= q) return base_[k];
    if (k <= 2 * q) return -base_[2 * q - k];
    if (k <= 3 * q) return -base_[k - 2 * q];
    return base_[4 * q - k];
  }

  double sin(int k) const {
    if (!quarter_) {
      k = ((k % N_) + N_) % N_;
      return std::sin(2.0 * std::numbers::pi * k / N_);
    }
    return cos(k - N_ / 4);
  }

 private:
  int N_;
  bool quarter_;
  std::vector<double> base_;
};

}  // namespace mcf
