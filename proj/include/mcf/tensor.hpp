#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mcf/grid.hpp"

namespace mcf {

/// A tensor field on the grid. Slot s is contravariant when bit s of
/// `upper_mask` is set. Components are stored component-major so each
/// component is a contiguous Field; component index flattens (i0, i1, ...)
/// with slot 0 most significant.
class TensorField {
 public:
  static constexpr int kMaxRank = 6;

  TensorField() = default;
  TensorField(const GridSpec& grid, int rank, unsigned upper_mask = 0)
      : grid_(grid), rank_(rank), upper_(upper_mask), data_(components_for(grid.m, rank) * grid.nodes(), 0.0) {
    if (rank < 0 || rank > kMaxRank) throw ShapeError("tensor rank out of range: " + std::to_string(rank));
  }

  static TensorField scalar(const GridSpec& grid, std::span<const double> f) {
    TensorField t(grid, 0);
    detail::check_size(grid, f);
    std::copy(f.begin(), f.end(), t.data_.begin());
    return t;
  }

  const GridSpec& grid() const { return grid_; }
  int rank() const { return rank_; }
  unsigned upper_mask() const { return upper_; }
  bool upper(int slot) const { return (upper_ >> slot) & 1u; }
  std::size_t nodes() const { return grid_.nodes(); }
  std::size_t components() const { return components_for(grid_.m, rank_); }

  std::span<double> component(std::size_t c) { return {data_.data() + c * nodes(), nodes()}; }
  std::span<const double> component(std::size_t c) const { return {data_.data() + c * nodes(), nodes()}; }

  template <class... I>
  double& operator()(std::size_t node, I... idx) {
    return data_[flat(idx...) * nodes() + node];
  }
  template <class... I>
  double operator()(std::size_t node, I... idx) const {
    return data_[flat(idx...) * nodes() + node];
  }

  double& at(std::size_t comp, std::size_t node) { return data_[comp * nodes() + node]; }
  double at(std::size_t comp, std::size_t node) const { return data_[comp * nodes() + node]; }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  /// Index tuple of a flattened component.
  std::array<int, kMaxRank> unflatten(std::size_t comp) const {
    std::array<int, kMaxRank> idx{};
    for (int s = rank_ - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(comp % grid_.m);
      comp /= grid_.m;
    }
    return idx;
  }

  std::size_t flatten(const std::array<int, kMaxRank>& idx) const {
    std::size_t c = 0;
    for (int s = 0; s < rank_; ++s) c = c * grid_.m + idx[s];
    return c;
  }

  bool same_shape(const TensorField& o) const { return grid_ == o.grid_ && rank_ == o.rank_ && upper_ == o.upper_; }

  TensorField& operator+=(const TensorField& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  TensorField& operator-=(const TensorField& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  TensorField& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend TensorField operator-(TensorField a, const TensorField& b) { return a -= b; }
  friend TensorField operator+(TensorField a, const TensorField& b) { return a += b; }
  friend TensorField operator*(double s, TensorField a) { return a *= s; }

  bool is_zero() const {
    for (double v : data_)
      if (v != 0.0) return false;
    return true;
  }

 private:
  static std::size_t components_for(int m, int rank) {
    std::size_t c = 1;
    for (int r = 0; r < rank; ++r) c *= static_cast<std::size_t>(m);
    return c;
  }

  template <class... I>
  std::size_t flat(I... idx) const {
    std::size_t c = 0;
    ((c = c * grid_.m + static_cast<std::size_t>(idx)), ...);
    return c;
  }

  void require_same_shape(const TensorField& o) const {
    if (!same_shape(o)) throw ShapeError("tensor fields differ in grid or valence");
  }

  GridSpec grid_;
  int rank_ = 0;
  unsigned upper_ = 0;
  std::vector<double> data_;
};

using TensorFamily = std::vector<TensorField>;

/// (nabla T)_{a, s0, s1, ...} = d_a T - sum_lower Gamma^p_{a s} T_{..p..} + sum_upper Gamma^s_{a p} T^{..p..}.
/// The new derivative index is slot 0; christoffel stores Gamma^k_ij as (k, i, j).
inline TensorField covariant_derivative(const TensorField& T, const TensorField& christoffel) {
  const GridSpec& grid = T.grid();
  if (!(grid == christoffel.grid()) || christoffel.rank() != 3)
    throw ShapeError("covariant derivative: connection does not match the tensor grid");
  if (T.rank() + 1 > TensorField::kMaxRank) throw ShapeError("covariant derivative: rank too large");
  const int m = grid.m;
  const int r = T.rank();
  TensorField out(grid, r + 1, T.upper_mask() << 1);
  const std::size_t nodes = grid.nodes();
  const std::size_t comps = T.components();
  for (std::size_t c = 0; c < comps; ++c) {
    for (int a = 0; a < m; ++a) {
      Field d = partial(grid, T.component(c), a);
      auto dst = out.component(static_cast<std::size_t>(a) * comps + c);
      std::copy(d.begin(), d.end(), dst.begin());
    }
  }
  for (std::size_t c = 0; c < comps; ++c) {
    const auto idx = T.unflatten(c);
    for (int a = 0; a < m; ++a) {
      auto dst = out.component(static_cast<std::size_t>(a) * comps + c);
      for (int s = 0; s < r; ++s) {
        for (int p = 0; p < m; ++p) {
          auto src_idx = idx;
          src_idx[s] = p;
          const auto src = T.component(T.flatten(src_idx));
          if (T.upper(s)) {
            const auto G = christoffel.component(static_cast<std::size_t>((idx[s] * m + a) * m + p));
            for (std::size_t n = 0; n < nodes; ++n) dst[n] += G[n] * src[n];
          } else {
            const auto G = christoffel.component(static_cast<std::size_t>((p * m + a) * m + idx[s]));
            for (std::size_t n = 0; n < nodes; ++n) dst[n] -= G[n] * src[n];
          }
        }
      }
    }
  }
  return out;
}

inline TensorFamily covariant_derivative(const TensorFamily& family, const TensorField& christoffel) {
  TensorFamily out;
  out.reserve(family.size());
  for (const auto& T : family) out.push_back(covariant_derivative(T, christoffel));
  return out;
}

/// Contracts the first two (lower) slots with the inverse metric.
inline TensorField trace_first_pair(const TensorField& T, const TensorField& ginv) {
  if (T.rank() < 2 || T.upper(0) || T.upper(1)) throw ShapeError("trace needs two leading covariant slots");
  const GridSpec& grid = T.grid();
  const int m = grid.m;
  TensorField out(grid, T.rank() - 2, T.upper_mask() >> 2);
  const std::size_t rest = out.components();
  const std::size_t nodes = grid.nodes();
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l) {
      const auto G = ginv.component(static_cast<std::size_t>(k * m + l));
      for (std::size_t c = 0; c < rest; ++c) {
        const auto src = T.component((static_cast<std::size_t>(k) * m + l) * rest + c);
        auto dst = out.component(c);
        for (std::size_t n = 0; n < nodes; ++n) dst[n] += G[n] * src[n];
      }
    }
  return out;
}

/// Rough Laplacian g^{kl} nabla_k nabla_l T.
inline TensorField rough_laplacian(const TensorField& T, const TensorField& christoffel, const TensorField& ginv) {
  return trace_first_pair(covariant_derivative(covariant_derivative(T, christoffel), christoffel), ginv);
}

/// Orthonormal coframe data at every node: lower slots are transformed by E
/// (E^T g E = I), upper slots by E^{-1}.
class MetricFrame {
 public:
  MetricFrame() = default;
  explicit MetricFrame(const TensorField& g) : grid_(g.grid()) {
    if (g.rank() != 2) throw ShapeError("metric must be a rank-2 field");
    const std::size_t nodes = grid_.nodes();
    lower_.resize(nodes * 4);
    upper_.resize(nodes * 4);
    for (std::size_t n = 0; n < nodes; ++n) {
      double* E = &lower_[n * 4];
      double* F = &upper_[n * 4];
      if (grid_.m == 1) {
        const double s = std::sqrt(g(n, 0, 0));
        E[0] = 1.0 / s;
        F[0] = s;
      } else {
        // g = L L^T, E = L^{-T}; upper slots use (E^{-1})^T = L.
        const double l00 = std::sqrt(g(n, 0, 0));
        const double l10 = g(n, 1, 0) / l00;
        const double l11 = std::sqrt(g(n, 1, 1) - l10 * l10);
        E[0] = 1.0 / l00;
        E[1] = -l10 / (l00 * l11);
        E[2] = 0.0;
        E[3] = 1.0 / l11;
        F[0] = l00;
        F[1] = 0.0;
        F[2] = l10;
        F[3] = l11;
      }
    }
  }

  const GridSpec& grid() const { return grid_; }

  /// |T|^2_g at every node.
  Field norm_squared(const TensorField& T) const {
    if (!(T.grid() == grid_)) throw ShapeError("norm: tensor grid differs from metric grid");
    const int m = grid_.m;
    const int r = T.rank();
    const std::size_t comps = T.components();
    const std::size_t nodes = grid_.nodes();
    Field out(nodes, 0.0);
    std::array<double, 64> a{}, b{};
    for (std::size_t n = 0; n < nodes; ++n) {
      for (std::size_t c = 0; c < comps; ++c) a[c] = T.at(c, n);
      // Slot by slot: T_i -> sum_i E_{ia} T_i and T^i -> sum_i L_{ia} T^i, both stored row-major [i][a].
      for (int s = 0; s < r; ++s) {
        const double* M = T.upper(s) ? &upper_[n * 4] : &lower_[n * 4];
        std::size_t inner = 1;
        for (int q = s + 1; q < r; ++q) inner *= m;
        const std::size_t outer = comps / (inner * m);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in)
            for (int k = 0; k < m; ++k) {
              double v = 0.0;
              for (int i = 0; i < m; ++i) v += M[i * m + k] * a[(o * m + i) * inner + in];
              b[(o * m + k) * inner + in] = v;
            }
        std::swap(a, b);
      }
      double s2 = 0.0;
      for (std::size_t c = 0; c < comps; ++c) s2 += a[c] * a[c];
      out[n] = s2;
    }
    return out;
  }

  Field norm_squared(const TensorFamily& family) const {
    Field out(grid_.nodes(), 0.0);
    for (const auto& T : family) {
      const Field f = norm_squared(T);
      for (std::size_t n = 0; n < out.size(); ++n) out[n] += f[n];
    }
    return out;
  }

 private:
  GridSpec grid_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

}  // namespace mcf
