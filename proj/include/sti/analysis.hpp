#pragma once

// Per-voxel eigen-analysis of tensor volumes and reconstruction metrics.

#include <optional>
#include <string>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

inline constexpr double kDegenerateGap = 1e-9;        // ppm
inline constexpr double kAnisotropyThreshold = 0.015;  // ppm, ECSE region
inline constexpr double kPsnrSentinel = 300.0;         // dB, identical inputs

struct EigenMaps {
  ScalarVolume lambda1, lambda2, lambda3;
  DirectionField pev;
  ScalarVolume mms, msa;
  // 1 where λ1 − λ2 < kDegenerateGap (PEV undefined), or outside the mask.
  Mask degenerate;
};

struct VoxelEigen {
  Vec3 lambda;  // descending
  Vec3 pev;     // first nonzero coordinate positive; zero when degenerate
  bool degenerate = false;
};

VoxelEigen eig_voxel(const Mat3& chi);

// Voxels outside `mask` are left at zero and flagged degenerate.
EigenMaps eig_decompose(const TensorVolume& x, const Mask* mask = nullptr);

struct PsnrOptions {
  // Peak = max |gt| over the mask unless set.
  std::optional<double> fixed_peak;
};

double psnr(const TensorVolume& est, const TensorVolume& gt, const Mask& mask, const PsnrOptions& opt = {});

// PSNR on arbitrary n x C data, shared by psnr and wpsnr.
double psnr_data(const Eigen::MatrixXd& est, const Eigen::MatrixXd& gt, const Mask& mask,
                 const PsnrOptions& opt = {});

struct SsimOptions {
  double sigma = 1.5;
  int radius = 5;  // 11³ support
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over the mask of one scalar field.
double ssim_component(const ScalarVolume& est, const ScalarVolume& gt, const Mask& mask, const SsimOptions& opt = {});
double ssim(const TensorVolume& est, const TensorVolume& gt, const Mask& mask, const SsimOptions& opt = {});

struct EcseOptions {
  double threshold = kAnisotropyThreshold;
  // 1 − cos instead of 1 − |cos|.
  bool signed_cosine = false;
};

// Mean of 1 − |cos(est, gt)| over voxels with gt_msa > threshold and a
// nonzero gt PEV. A zero est vector counts as error 1.
double ecse(const DirectionField& est_pev, const DirectionField& gt_pev, const ScalarVolume& gt_msa,
            const EcseOptions& opt = {}, const Mask* mask = nullptr);

// MSA · PEV with the PEV flipped into the hemisphere of `reference` per voxel.
DirectionField weighted_pev(const EigenMaps& maps, const DirectionField* reference = nullptr);

double wpsnr(const EigenMaps& est, const EigenMaps& gt, const Mask& mask, const PsnrOptions& opt = {});

// Per-voxel sample variance (n − 1 denominator) across the list, summed over
// the 3 channels. Maps are sign-aligned to the first one beforehand.
ScalarVolume pev_variance(const std::vector<DirectionField>& maps);

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double ecse = 0.0;
  double wpsnr = 0.0;
  Index mask_voxels = 0;
  Index anisotropic_voxels = 0;
  double threshold = kAnisotropyThreshold;
  std::string peak_rule;

  std::string to_text() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

struct MetricOptions {
  PsnrOptions psnr;
  SsimOptions ssim;
  EcseOptions ecse;
};

MetricReport evaluate(const TensorVolume& est, const TensorVolume& gt, const Mask& mask,
                      const MetricOptions& opt = {});

}  // namespace sti
