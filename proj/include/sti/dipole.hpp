#pragma once

// Frequency-domain tensor dipole kernel and the multi-orientation forward
// operator δB^c = F⁻¹ Σ_components A^c ⊙ F x, with its exact adjoint.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

// Spatial frequencies (cycles/mm) of every voxel of a grid in standard DFT
// order; row 0 is the DC term. With `hermitian`, the Nyquist coordinate of
// an even axis is taken as 0 so that k and its DFT mirror give the same real
// kernel; the operator and the conditioning diagnostics use this form.
struct FrequencyGrid {
  Grid grid;
  Eigen::Matrix<double, Eigen::Dynamic, 3> k;
};

FrequencyGrid make_frequency_grid(const Grid& grid, bool hermitian = false);

// Single dipole coefficient A_ij(k) = h_i h_j / 3 − (kᵀh) k_i h_j / kᵀk for
// 0-based axes i, j. The DC term (k = 0) is defined as 0.
template <typename Scalar>
Scalar kernel_coefficient(const Eigen::Matrix<Scalar, 3, 1>& h, const Eigen::Matrix<Scalar, 3, 1>& k,
                          int i, int j) {
  const Scalar kk = k.squaredNorm();
  if (kk == Scalar(0)) return Scalar(0);
  return h[i] * h[j] / Scalar(3) - k.dot(h) * k[i] * h[j] / kk;
}

// Coefficient multiplying tensor component `component` of the symmetric
// 6-vector: A_rr on the diagonal, A_rs + A_sr off it.
template <typename Scalar>
Scalar combined_coefficient(const Eigen::Matrix<Scalar, 3, 1>& h, const Eigen::Matrix<Scalar, 3, 1>& k,
                            int component) {
  const auto [r, s] = kTensorIndex[std::size_t(component)];
  if (r == s) return kernel_coefficient(h, k, r, r);
  return kernel_coefficient(h, k, r, s) + kernel_coefficient(h, k, s, r);
}

// Per-frequency coefficients for one orientation. C = 6 is the symmetric
// tensor model; C = 9 assigns every A_ij its own (row-major) component.
template <int C>
struct BasicDipoleKernel {
  Orientation orientation;
  Eigen::Matrix<double, Eigen::Dynamic, C> coeffs;
};

using DipoleKernel = BasicDipoleKernel<6>;
using AsymDipoleKernel = BasicDipoleKernel<9>;

template <int C>
class BasicDipoleOperator {
 public:
  using Kernel = BasicDipoleKernel<C>;

  BasicDipoleOperator(const Grid& grid, const Grid& fft_grid, std::vector<Kernel> kernels,
                      std::optional<Mask> mask);

  // Image grid the operator reads and writes.
  const Grid& grid() const { return grid_; }
  // Possibly zero-padded grid the FFTs run on.
  const Grid& fft_grid() const { return fft_grid_; }
  const std::vector<Kernel>& kernels() const { return kernels_; }
  const std::optional<Mask>& mask() const { return mask_; }
  Index count() const { return Index(kernels_.size()); }
  std::vector<Orientation> orientations() const;

  BasicDipoleOperator with_mask(std::optional<Mask> mask) const;

 private:
  Grid grid_;
  Grid fft_grid_;
  std::vector<Kernel> kernels_;
  std::optional<Mask> mask_;
};

using DipoleOperator = BasicDipoleOperator<6>;
using AsymDipoleOperator = BasicDipoleOperator<9>;

struct OperatorOptions {
  std::optional<Mask> mask;
  // Each FFT axis is padded to ceil(pad_factor * dim); 1 keeps the periodic
  // (wrap-around) convolution.
  double pad_factor = 1.0;
};

DipoleOperator build_operator(const Grid& grid, const std::vector<Orientation>& orientations,
                              const OperatorOptions& options = {});
AsymDipoleOperator build_asym_operator(const Grid& grid, const std::vector<Orientation>& orientations,
                                       const OperatorOptions& options = {});

struct ForwardDiagnostics {
  // Largest |imag| left after the inverse FFTs, before it is discarded.
  double max_imaginary = 0.0;
};

template <int C>
FieldSet forward(const BasicDipoleOperator<C>& op, const Volume<double, C>& x,
                 ForwardDiagnostics* diagnostics = nullptr);

template <int C>
Volume<double, C> adjoint(const BasicDipoleOperator<C>& op, const FieldSet& y);

// x − α · adjoint(mask ⊙ (forward(x) − y))
TensorVolume gradient_step(const DipoleOperator& op, const TensorVolume& x, const FieldSet& y,
                           double alpha);

// ½ ‖M (forward(x) − y)‖²
double data_fidelity(const DipoleOperator& op, const TensorVolume& x, const FieldSet& y);

// Power-iteration estimate of the largest eigenvalue of AᵀMᵀMA, started from a
// fixed-seed random tensor. The returned history has one entry per iteration
// and is nondecreasing.
std::vector<double> operator_norm_history(const DipoleOperator& op, int iterations);
double operator_norm(const DipoleOperator& op, int iterations);

struct ConditionSpectrum {
  // Per-frequency extreme singular values of the m x 6 coefficient matrix;
  // entry 0 (DC) is NaN. When m < 6 sigma_min is 0.
  Eigen::VectorXd sigma_min;
  Eigen::VectorXd sigma_max;
  // max sigma_max / min sigma_min over nonzero frequencies; +inf if singular.
  double condition_number = 0.0;
  double median_frequency_condition = 0.0;
};

ConditionSpectrum condition_spectrum(const std::vector<Orientation>& orientations, const Grid& grid);

// Orientation list files: one "h1 h2 h3" triple per line; blank lines and
// '#' comments are ignored. Vectors are normalized on read.
std::vector<Orientation> parse_orientations(std::string_view text);
std::vector<Orientation> read_orientations(const std::filesystem::path& path);
std::string format_orientations(const std::vector<Orientation>& orientations);

// The 6 icosahedral axes (z plus five at atan(2) ≈ 63.4° tilt): a
// well-conditioned reference design.
std::vector<Orientation> icosahedral_orientations();

}  // namespace sti
