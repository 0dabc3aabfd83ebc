#pragma once

// Grid-aware volume containers shared by every module.
//
// Storage order is x-fastest: voxel (i, j, k) lives at i + nx*j + nx*ny*k.
// Multi-component volumes are n x C column-major Eigen matrices, so each
// component is one contiguous column in the same storage order.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sti/error.hpp"

namespace sti {

using Index = Eigen::Index;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Grid {
  std::array<Index, 3> dims{1, 1, 1};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};  // mm

  Grid() = default;
  Grid(std::array<Index, 3> dims, std::array<double, 3> voxel_size = {1.0, 1.0, 1.0});

  Index size() const { return dims[0] * dims[1] * dims[2]; }
  Index index(Index i, Index j, Index k) const { return i + dims[0] * (j + dims[1] * k); }
  std::array<Index, 3> coords(Index linear) const;
  bool contains(Index i, Index j, Index k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }

  // Center of voxel (i, j, k) in mm; voxel centers sit at index * voxel_size.
  Vec3 position(Index i, Index j, Index k) const {
    return {double(i) * voxel_size[0], double(j) * voxel_size[1], double(k) * voxel_size[2]};
  }

  std::string describe() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Throws InputError naming `what` when the grids differ.
void require_same_grid(const Grid& a, const Grid& b, const char* what);

template <typename Scalar, int Components>
class Volume {
 public:
  using Data = Eigen::Matrix<Scalar, Eigen::Dynamic, Components>;
  static constexpr int kComponents = Components;

  Volume() = default;

  explicit Volume(const Grid& grid, Scalar fill = Scalar(0))
      : grid_(grid), data_(Data::Constant(grid.size(), Components, fill)) {}

  Volume(const Grid& grid, Data data) : grid_(grid) {
    check_shape(data.rows(), data.cols());
    data_ = std::move(data);
  }

  // Any other expression is shape-checked before it is narrowed to Data.
  template <typename Derived>
  Volume(const Grid& grid, const Eigen::DenseBase<Derived>& data) : grid_(grid) {
    check_shape(data.rows(), data.cols());
    data_ = data;
  }

  const Grid& grid() const { return grid_; }
  Index size() const { return grid_.size(); }
  const Data& data() const { return data_; }
  Data& data() { return data_; }

  auto component(Index c) { return data_.col(c); }
  auto component(Index c) const { return data_.col(c); }

  Scalar& operator()(Index i, Index j, Index k, Index c = 0) { return data_(grid_.index(i, j, k), c); }
  Scalar operator()(Index i, Index j, Index k, Index c = 0) const {
    return data_(grid_.index(i, j, k), c);
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  void check_shape(Index rows, Index cols) const {
    if (rows != grid_.size() || cols != Components) {
      throw InputError("volume data is " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", grid needs " + std::to_string(grid_.size()) + "x" + std::to_string(Components));
    }
  }

  Grid grid_;
  Data data_;
};

using ScalarVolume = Volume<double, 1>;
using DirectionField = Volume<double, 3>;
// (χ11, χ12, χ13, χ22, χ23, χ33)
using TensorVolume = Volume<double, 6>;
// Row-major χ11 … χ33
using AsymTensorVolume = Volume<double, 9>;

// Upper-triangle (row, col) of each of the six symmetric tensor components.
inline constexpr std::array<std::pair<int, int>, 6> kTensorIndex{
    {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};

// Component slot in a TensorVolume for matrix entry (r, c), symmetric.
constexpr int tensor_component(int r, int c) {
  if (r > c) std::swap(r, c);
  constexpr int table[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return table[r][c];
}

class Mask {
 public:
  using Data = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

  Mask() = default;
  explicit Mask(const Grid& grid, bool fill = true);
  Mask(const Grid& grid, Data data);

  const Grid& grid() const { return grid_; }
  const Data& data() const { return data_; }
  Data& data() { return data_; }
  bool operator[](Index i) const { return data_[i] != 0; }
  bool operator()(Index i, Index j, Index k) const { return data_[grid_.index(i, j, k)] != 0; }
  void set(Index i, bool v) { data_[i] = v ? 1 : 0; }

  Index count() const;
  // 0/1 weights as doubles, convenient for elementwise products.
  Eigen::VectorXd weights() const { return data_.cast<double>().matrix(); }

 private:
  Grid grid_;
  Data data_;
};

class Orientation {
 public:
  Orientation() = default;

  // Normalizes; throws InputError for a (near) zero vector.
  static Orientation from_vector(const Vec3& v);

  const Vec3& h() const { return h_; }
  double operator[](int i) const { return h_[i]; }

 private:
  explicit Orientation(const Vec3& h) : h_(h) {}
  Vec3 h_{0.0, 0.0, 1.0};
};

// m normalized local-field volumes; column c of `data` belongs to orientations[c].
struct FieldSet {
  Grid grid;
  std::vector<Orientation> orientations;
  Eigen::MatrixXd data;

  FieldSet() = default;
  FieldSet(const Grid& grid, std::vector<Orientation> orientations);
  FieldSet(const Grid& grid, std::vector<Orientation> orientations, Eigen::MatrixXd data);

  Index count() const { return Index(orientations.size()); }
  ScalarVolume field(Index c) const;
};

ScalarVolume new_scalar_volume(const Grid& grid, double fill);

Mat3 tensor_at_voxel(const TensorVolume& t, Index i, Index j, Index k);
Mat3 tensor_at(const TensorVolume& t, Index linear);
// Stores the upper triangle of `chi`; the caller guarantees symmetry.
void set_tensor_at(TensorVolume& t, Index linear, const Mat3& chi);

Mat3 asym_tensor_at(const AsymTensorVolume& t, Index linear);

template <typename Scalar, int Components>
Volume<Scalar, Components> apply_mask(const Volume<Scalar, Components>& v, const Mask& m) {
  require_same_grid(v.grid(), m.grid(), "apply_mask");
  auto out = v;
  const auto w = m.data().template cast<Scalar>().matrix();
  for (Index c = 0; c < out.data().cols(); ++c) out.data().col(c).array() *= w.array();
  return out;
}

}  // namespace sti
