#pragma once

// Tensor dipole inversion: damped least squares (LSQR), the unconstrained
// 9-component fit with symmetric/antisymmetric split, and proximal gradient
// descent with a pluggable proximal operator.

#include <memory>
#include <variant>
#include <vector>

#include "sti/dipole.hpp"
#include "sti/lsqr.hpp"
#include "sti/nn.hpp"

namespace sti {

// Flat views: a Volume<double, C> is its column-major n x C data.
template <int C>
Eigen::VectorXd flatten(const Volume<double, C>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data().data(), v.data().size());
}

template <int C>
Volume<double, C> unflatten(const Grid& grid, const Eigen::VectorXd& flat) {
  if (flat.size() != grid.size() * C) throw InputError("unflatten: vector length does not match grid");
  return Volume<double, C>(grid, Eigen::Map<const typename Volume<double, C>::Data>(flat.data(), grid.size(), C));
}

// [M·A; λ(1 − M)·I] as a LinearMap on flattened volumes. A mask-free
// operator with λ = 0 gives the plain forward model.
template <int C>
LinearMap stacked_map(const BasicDipoleOperator<C>& op, const Mask& mask, double lambda);

struct StiImagConfig {
  LsqrConfig lsqr;
  // Weight of the out-of-mask shrinkage rows relative to the data rows.
  double lambda = 1.0;
  OperatorOptions operator_options;
};

struct SolveInfo {
  int iterations = 0;
  double relative_residual = 0.0;
  LsqrStop stop = LsqrStop::MaxIterations;
  std::vector<double> residual_history;
};

TensorVolume sti_imag(const FieldSet& y, const Mask& mask, const StiImagConfig& cfg = {},
                      SolveInfo* info = nullptr);

struct AstiResult {
  AsymTensorVolume full;
  TensorVolume symmetric;
  // (a12, a13, a23) of (χ − χᵀ)/2.
  DirectionField antisymmetric;
};

// Splits a row-major 9-component tensor volume; symmetric + antisymmetric
// reassembles `full` exactly.
AstiResult split_asymmetric(const AsymTensorVolume& full);
AsymTensorVolume recombine(const TensorVolume& symmetric, const DirectionField& antisymmetric);

AstiResult asti_fit(const FieldSet& y, const Mask& mask, const StiImagConfig& cfg = {}, SolveInfo* info = nullptr);

struct IdentityProx {};

struct SoftThresholdProx {
  // Per-component threshold in ppm.
  std::array<double, 6> tau{};
};

struct CnnProx {
  std::shared_ptr<const nn::ProxNetwork> network;
};

using ProximalOperator = std::variant<IdentityProx, SoftThresholdProx, CnnProx>;

inline double soft_threshold(double v, double tau) {
  const double m = std::abs(v) - tau;
  return m > 0.0 ? std::copysign(m, v) : 0.0;
}

TensorVolume apply_proximal(const ProximalOperator& prox, const TensorVolume& x);

enum class StepRule { InverseLipschitz, Fixed };
enum class InitRule { Zero, ScaledAdjoint };

struct PgdConfig {
  int iterations = 4;
  StepRule step_rule = StepRule::InverseLipschitz;
  double alpha = 0.0;  // used when step_rule == Fixed
  int power_iterations = 20;
  InitRule init = InitRule::Zero;
  // Project each iterate onto the mask after the proximal step.
  bool zero_outside_mask = false;
  OperatorOptions operator_options;
};

struct PgdInfo {
  double alpha = 0.0;
  double lipschitz = 0.0;
  // ½‖M(A x_k − y)‖² for k = 0 … iterations.
  std::vector<double> objective;
};

TensorVolume pgd_reconstruct(const FieldSet& y, const Mask& mask, const ProximalOperator& prox,
                             const PgdConfig& cfg = {}, const TensorVolume* initial = nullptr,
                             PgdInfo* info = nullptr);

// Mean |a − b| over all 6 components of the voxels in `mask` (all voxels
// when null).
double l1_loss(const TensorVolume& a, const TensorVolume& b, const Mask* mask = nullptr);

}  // namespace sti
