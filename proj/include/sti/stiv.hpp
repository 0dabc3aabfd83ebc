#pragma once

// STIV volume files.
//
//   magic: STIV1
//   dims: <nx> <ny> <nz>
//   voxel_size: <dx> <dy> <dz>
//   ncomponents: <C>
//   dtype: f32le
//   order: x-fastest
//   <blank line>
//   <C * n little-endian float32 values, component-major>
//
// Each component block is stored in x-fastest voxel order. C is 1, 3, 6 or 9.

#include <filesystem>

#include "sti/volume.hpp"

namespace sti {

struct RawVolume {
  Grid grid;
  Eigen::MatrixXd data;  // n x C
};

std::string encode_stiv(const Grid& grid, const Eigen::MatrixXd& data);
RawVolume decode_stiv(std::string_view bytes);

void write_stiv(const std::filesystem::path& path, const Grid& grid, const Eigen::MatrixXd& data);
RawVolume read_stiv(const std::filesystem::path& path);

// Typed readers check the component count.
ScalarVolume read_scalar_volume(const std::filesystem::path& path);
DirectionField read_direction_field(const std::filesystem::path& path);
TensorVolume read_tensor_volume(const std::filesystem::path& path);
AsymTensorVolume read_asym_tensor_volume(const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);

template <typename Scalar, int C>
void write_volume(const std::filesystem::path& path, const Volume<Scalar, C>& v) {
  write_stiv(path, v.grid(), v.data().template cast<double>());
}
void write_mask(const std::filesystem::path& path, const Mask& m);

}  // namespace sti
