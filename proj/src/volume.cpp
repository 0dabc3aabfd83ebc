#include "sti/volume.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sti {

namespace {
constexpr Index kMaxVoxels = Index(1) << 34;
}

Grid::Grid(std::array<Index, 3> d, std::array<double, 3> vs) : dims(d), voxel_size(vs) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InputError("grid dimension " + std::to_string(a) + " must be >= 1");
    if (!(voxel_size[a] > 0.0) || !std::isfinite(voxel_size[a]))
      throw InputError("grid voxel size " + std::to_string(a) + " must be positive");
  }
  // The checks are ordered so no intermediate product can overflow.
  if (dims[0] > kMaxVoxels || dims[1] > kMaxVoxels / dims[0] ||
      dims[2] > kMaxVoxels / (dims[0] * dims[1])) {
    throw InputError("grid " + describe() + " exceeds the supported voxel count");
  }
}

std::array<Index, 3> Grid::coords(Index linear) const {
  const Index i = linear % dims[0];
  const Index rest = linear / dims[0];
  return {i, rest % dims[1], rest / dims[1]};
}

std::string Grid::describe() const {
  std::ostringstream os;
  os << dims[0] << "x" << dims[1] << "x" << dims[2] << " @ " << voxel_size[0] << "x"
     << voxel_size[1] << "x" << voxel_size[2] << " mm";
  return os.str();
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw InputError(std::string(what) + ": grid mismatch (" + a.describe() + " vs " +
                     b.describe() + ")");
  }
}

Mask::Mask(const Grid& grid, bool fill)
    : grid_(grid), data_(Data::Constant(grid.size(), fill ? 1 : 0)) {}

Mask::Mask(const Grid& grid, Data data) : grid_(grid), data_(std::move(data)) {
  if (data_.size() != grid_.size()) throw InputError("mask length does not match grid");
  for (Index i = 0; i < data_.size(); ++i) {
    if (data_[i] > 1) throw InputError("mask values must be 0 or 1");
  }
}

Index Mask::count() const { return (data_ != 0).count(); }

Orientation Orientation::from_vector(const Vec3& v) {
  const double norm = v.norm();
  if (!(norm > 1e-12) || !v.allFinite()) throw InputError("orientation vector must be nonzero");
  return Orientation(v / norm);
}

FieldSet::FieldSet(const Grid& g, std::vector<Orientation> o)
    : grid(g), orientations(std::move(o)),
      data(Eigen::MatrixXd::Zero(g.size(), Index(orientations.size()))) {
  if (orientations.empty()) throw InputError("field set needs at least one orientation");
}

FieldSet::FieldSet(const Grid& g, std::vector<Orientation> o, Eigen::MatrixXd d)
    : grid(g), orientations(std::move(o)), data(std::move(d)) {
  if (orientations.empty()) throw InputError("field set needs at least one orientation");
  if (data.rows() != grid.size() || data.cols() != Index(orientations.size()))
    throw InputError("field set data shape does not match grid and orientation count");
}

ScalarVolume FieldSet::field(Index c) const { return ScalarVolume(grid, data.col(c)); }

ScalarVolume new_scalar_volume(const Grid& grid, double fill) {
  return ScalarVolume(Grid(grid.dims, grid.voxel_size), fill);
}

Mat3 tensor_at(const TensorVolume& t, Index linear) {
  const auto row = t.data().row(linear);
  Mat3 m;
  m << row[0], row[1], row[2],
       row[1], row[3], row[4],
       row[2], row[4], row[5];
  return m;
}

Mat3 tensor_at_voxel(const TensorVolume& t, Index i, Index j, Index k) {
  if (!t.grid().contains(i, j, k)) throw InputError("voxel index out of range");
  return tensor_at(t, t.grid().index(i, j, k));
}

void set_tensor_at(TensorVolume& t, Index linear, const Mat3& chi) {
  for (int c = 0; c < 6; ++c) {
    const auto [r, s] = kTensorIndex[std::size_t(c)];
    t.data()(linear, c) = chi(r, s);
  }
}

Mat3 asym_tensor_at(const AsymTensorVolume& t, Index linear) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = t.data()(linear, 3 * r + c);
  return m;
}

}  // namespace sti
