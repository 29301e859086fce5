#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "portwin/core/geometry.hpp"
#include "portwin/grid/uid.hpp"

namespace portwin {

enum class CellFlag : std::uint8_t {
  Fluid = 0,
  Solid = 1,
  Inflow = 2,
  Outflow = 3,
  Wall = 4,
  Slip = 5,  // free-slip symmetry plane
};

/// Dense scalar array over a block's interior plus one ghost layer.
/// Indices run from -1 to n (inclusive) on every axis.
template <typename T>
class GhostArray {
 public:
  GhostArray() = default;
  explicit GhostArray(const Int3& n, T init = T{})
      : n_(n),
        stride_{1, n[0] + 2, (n[0] + 2) * (n[1] + 2)},
        data_(static_cast<std::size_t>((n[0] + 2) * (n[1] + 2) * (n[2] + 2)), init) {}

  const Int3& interior() const { return n_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>((i + 1) + stride_[1] * (j + 1) + stride_[2] * (k + 1));
  }
  std::ptrdiff_t stride(int axis) const { return stride_[axis]; }

  T& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
  T& operator[](std::size_t idx) { return data_[idx]; }
  const T& operator[](std::size_t idx) const { return data_[idx]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const GhostArray&, const GhostArray&) = default;

 private:
  Int3 n_{0, 0, 0};
  std::ptrdiff_t stride_[3]{0, 0, 0};
  std::vector<T> data_;
};

using ScalarField = GhostArray<double>;

/// Field storage of one block. Velocity component a is stored on the high
/// face of each cell along axis a (u(i,j,k) sits at x_{i+1}); pressure is
/// cell-centred. `h_prev` keeps the previous explicit momentum term per
/// component for the two-step time integrator.
struct DataGrid {
  Uid owner;
  std::array<ScalarField, 3> vel;
  ScalarField p;
  std::array<ScalarField, 3> h_prev;
  GhostArray<CellFlag> flag;
  std::int64_t step = 0;

  DataGrid() = default;
  DataGrid(Uid uid, const Int3& n)
      : owner(uid),
        vel{ScalarField(n), ScalarField(n), ScalarField(n)},
        p(n),
        h_prev{ScalarField(n), ScalarField(n), ScalarField(n)},
        flag(n, CellFlag::Fluid) {}

  const Int3& cells() const { return p.interior(); }

  friend bool operator==(const DataGrid&, const DataGrid&) = default;
};

}  // namespace portwin
