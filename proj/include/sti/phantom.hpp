#pragma once

// Ground-truth susceptibility tensor phantoms built from (MMS, anisotropy,
// fiber direction) fields, plus geometric inputs, measurement noise,
// orientation sampling, and isotropic ablation.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "sti/config.hpp"
#include "sti/rng.hpp"
#include "sti/volume.hpp"

namespace sti {

inline constexpr double kDefaultGamma = 1.0 / 15.0;
inline constexpr double kDefaultEpsilon = 0.002;  // ppm, upper bound of Δ

// Eigenvalues (descending) with mean q, λ1 − (λ2+λ3)/2 = a_s and λ2 − λ3 = Δ.
// Δ is clamped into [0, 2 a_s] so that λ1 ≥ λ2 holds.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> solve_eigenvalues(Scalar q, Scalar a_s, Scalar delta) {
  if (a_s < Scalar(0)) throw UsageError("anisotropy a_S must be >= 0");
  if (delta < Scalar(0)) delta = Scalar(0);
  if (delta > Scalar(2) * a_s) delta = Scalar(2) * a_s;
  const Scalar third = a_s / Scalar(3);
  return {q + Scalar(2) * third, q - third + delta / Scalar(2), q - third - delta / Scalar(2)};
}

// V diag(λ) Vᵀ with V = [v1 v2 v3]; v2, v3 complete v1 through a random
// vector drawn from `rng` (Gram–Schmidt, redrawn when nearly parallel to v1).
Mat3 compose_tensor(const Vec3& eigenvalues, const Vec3& v1, CounterRng& rng);

struct PhantomParams {
  double gamma = kDefaultGamma;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
};

// Per voxel: Δ ~ U[0, ε], a_S = γ a_D, eigenvalues from solve_eigenvalues and
// the tensor from compose_tensor with v1 = dir. Voxels whose direction is the
// zero vector become isotropic q·I.
TensorVolume build_phantom(const ScalarVolume& q, const DirectionField& dir, const ScalarVolume& fa,
                           const PhantomParams& params);

struct Background {
  double q = 0.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();  // mm
  double radius = 1.0;         // mm
  double q = 0.0;
  double fa = 0.0;
  Vec3 direction = Vec3::Zero();
};

struct Cylinder {
  Vec3 axis = Vec3::UnitZ();
  Vec3 center = Vec3::Zero();  // mm
  double radius = 1.0;         // mm
  double q = 0.0;
  double fa = 0.0;
  double half_length = std::numeric_limits<double>::infinity();  // mm along the axis
};

using Primitive = std::variant<Background, Sphere, Cylinder>;

struct GroundTruthFields {
  ScalarVolume q;
  DirectionField dir;
  ScalarVolume fa;
  // Voxels within `mask_margin` mm of any non-background primitive; the whole
  // grid when only backgrounds are given.
  Mask mask;
};

// Rasterizes primitives in order; later primitives overwrite earlier ones.
GroundTruthFields synth_geometry(const Grid& grid, const std::vector<Primitive>& primitives,
                                 double mask_margin = 2.0);

struct GeometrySpec {
  Grid grid;
  std::vector<Primitive> primitives;
  PhantomParams params;
  double mask_margin = 2.0;
};

// Sections: [grid] dims, voxel_size; [phantom] gamma, epsilon, seed,
// mask_margin; then any number of [background], [sphere], [cylinder].
GeometrySpec parse_geometry(std::string_view text);
GeometrySpec read_geometry(const std::filesystem::path& path);

struct NoiseResult {
  FieldSet fields;
  // Orientations left untouched because their signal RMS was zero.
  std::vector<Index> zero_signal;
};

// Adds N(0, σ_c²) to every voxel of orientation c with σ_c = RMS(signal over
// mask) / snr_amplitude_ratio.
NoiseResult add_noise(const FieldSet& y, double snr_amplitude_ratio, std::uint64_t seed,
                      const Mask* mask = nullptr);

struct Box {
  std::array<Index, 3> lo{0, 0, 0};
  std::array<Index, 3> size{1, 1, 1};
};

// Replaces the tensor by (trace/3)·I inside each box, or everywhere when no
// boxes are given.
TensorVolume make_isotropic_ablation(const TensorVolume& x, const std::vector<Box>& regions = {});

enum class ConeSampling {
  AreaUniform,  // cos θ uniform on [cos α, 1]
  TiltUniform,  // θ uniform on [0, α]
};

std::vector<Orientation> sample_orientations(int count, double cone_half_angle_deg, std::uint64_t seed,
                                             ConeSampling mode = ConeSampling::AreaUniform);

}  // namespace sti
