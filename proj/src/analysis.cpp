#include "sti/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sti {

VoxelEigen eig_voxel(const Mat3& chi) {
  if (!chi.allFinite()) throw NumericalError("eig_decompose: non-finite tensor entry");
  Eigen::SelfAdjointEigenSolver<Mat3> es(chi);
  // Ascending from the solver; reverse to λ1 ≥ λ2 ≥ λ3.
  VoxelEigen out;
  out.lambda = es.eigenvalues().reverse();
  Vec3 v = es.eigenvectors().col(2);
  out.degenerate = out.lambda[0] - out.lambda[1] < kDegenerateGap;
  if (out.degenerate) {
    out.pev.setZero();
    return out;
  }
  for (int a = 0; a < 3; ++a) {
    if (v[a] != 0.0) {
      if (v[a] < 0.0) v = -v;
      break;
    }
  }
  out.pev = v.normalized();
  return out;
}

EigenMaps eig_decompose(const TensorVolume& x, const Mask* mask) {
  const Grid& g = x.grid();
  if (mask) require_same_grid(g, mask->grid(), "eig_decompose mask");
  EigenMaps m{ScalarVolume(g), ScalarVolume(g), ScalarVolume(g), DirectionField(g),
              ScalarVolume(g), ScalarVolume(g), Mask(g, true)};
  for (Index v = 0; v < g.size(); ++v) {
    if (mask && !(*mask)[v]) continue;
    const VoxelEigen e = eig_voxel(tensor_at(x, v));
    m.lambda1.data()(v, 0) = e.lambda[0];
    m.lambda2.data()(v, 0) = e.lambda[1];
    m.lambda3.data()(v, 0) = e.lambda[2];
    m.pev.data().row(v) = e.pev.transpose();
    m.mms.data()(v, 0) = e.lambda.sum() / 3.0;
    m.msa.data()(v, 0) = e.lambda[0] - 0.5 * (e.lambda[1] + e.lambda[2]);
    m.degenerate.set(v, e.degenerate);
  }
  return m;
}

namespace {

Index require_mask(const Grid& g, const Mask& mask, const char* what) {
  require_same_grid(g, mask.grid(), what);
  const Index count = mask.count();
  if (count == 0) throw InputError(std::string(what) + ": empty mask");
  return count;
}

}  // namespace

double psnr_data(const Eigen::MatrixXd& est, const Eigen::MatrixXd& gt, const Mask& mask, const PsnrOptions& opt) {
  if (est.rows() != gt.rows() || est.cols() != gt.cols() || est.rows() != mask.grid().size())
    throw InputError("psnr: shape mismatch");
  const Index count = mask.count();
  if (count == 0) throw InputError("psnr: empty mask");
  double peak = 0.0, sse = 0.0;
  for (Index v = 0; v < est.rows(); ++v) {
    if (!mask[v]) continue;
    peak = std::max(peak, gt.row(v).cwiseAbs().maxCoeff());
    sse += (est.row(v) - gt.row(v)).squaredNorm();
  }
  if (opt.fixed_peak) peak = *opt.fixed_peak;
  const double mse = sse / double(count * est.cols());
  if (mse == 0.0) return kPsnrSentinel;
  if (!(peak > 0.0)) return -kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const TensorVolume& est, const TensorVolume& gt, const Mask& mask, const PsnrOptions& opt) {
  require_same_grid(est.grid(), gt.grid(), "psnr");
  require_mask(gt.grid(), mask, "psnr");
  return psnr_data(est.data(), gt.data(), mask, opt);
}

namespace {

// Separable Gaussian filter with the window renormalized where it leaves
// the grid.
Eigen::VectorXd gaussian_filter(const Grid& g, const Eigen::VectorXd& in, const SsimOptions& opt) {
  std::vector<double> w(std::size_t(2 * opt.radius + 1));
  for (int t = -opt.radius; t <= opt.radius; ++t)
    w[std::size_t(t + opt.radius)] = std::exp(-0.5 * t * t / (opt.sigma * opt.sigma));
  Eigen::VectorXd cur = in;
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd next(cur.size());
    for (Index k = 0; k < g.dims[2]; ++k)
      for (Index j = 0; j < g.dims[1]; ++j)
        for (Index i = 0; i < g.dims[0]; ++i) {
          const std::array<Index, 3> p{i, j, k};
          double acc = 0.0, norm = 0.0;
          for (int t = -opt.radius; t <= opt.radius; ++t) {
            auto q = p;
            q[std::size_t(axis)] += t;
            if (q[std::size_t(axis)] < 0 || q[std::size_t(axis)] >= g.dims[std::size_t(axis)]) continue;
            const double wt = w[std::size_t(t + opt.radius)];
            acc += wt * cur[g.index(q[0], q[1], q[2])];
            norm += wt;
          }
          next[g.index(i, j, k)] = acc / norm;
        }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

double ssim_component(const ScalarVolume& est, const ScalarVolume& gt, const Mask& mask, const SsimOptions& opt) {
  require_same_grid(est.grid(), gt.grid(), "ssim");
  const Index count = require_mask(gt.grid(), mask, "ssim");
  const Grid& g = gt.grid();
  const Eigen::VectorXd x = est.data().col(0), y = gt.data().col(0);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo, absmax = 0.0;
  for (Index v = 0; v < g.size(); ++v) {
    if (!mask[v]) continue;
    lo = std::min(lo, y[v]);
    hi = std::max(hi, y[v]);
    absmax = std::max({absmax, std::abs(x[v]), std::abs(y[v])});
  }
  double range = hi - lo;
  if (!(range > 0.0)) range = absmax;
  if (!(range > 0.0)) return 1.0;  // both fields vanish on the mask
  const double c1 = std::pow(opt.k1 * range, 2), c2 = std::pow(opt.k2 * range, 2);

  const Eigen::VectorXd mx = gaussian_filter(g, x, opt), my = gaussian_filter(g, y, opt);
  const Eigen::VectorXd sxx = gaussian_filter(g, x.cwiseProduct(x), opt) - mx.cwiseProduct(mx);
  const Eigen::VectorXd syy = gaussian_filter(g, y.cwiseProduct(y), opt) - my.cwiseProduct(my);
  const Eigen::VectorXd sxy = gaussian_filter(g, x.cwiseProduct(y), opt) - mx.cwiseProduct(my);
  double sum = 0.0;
  for (Index v = 0; v < g.size(); ++v) {
    if (!mask[v]) continue;
    sum += ((2 * mx[v] * my[v] + c1) * (2 * sxy[v] + c2)) /
           ((mx[v] * mx[v] + my[v] * my[v] + c1) * (sxx[v] + syy[v] + c2));
  }
  return sum / double(count);
}

double ssim(const TensorVolume& est, const TensorVolume& gt, const Mask& mask, const SsimOptions& opt) {
  require_same_grid(est.grid(), gt.grid(), "ssim");
  double sum = 0.0;
  for (int c = 0; c < 6; ++c) {
    ScalarVolume e(est.grid(), est.data().col(c)), t(gt.grid(), gt.data().col(c));
    sum += ssim_component(e, t, mask, opt);
  }
  return sum / 6.0;
}

double ecse(const DirectionField& est, const DirectionField& gt, const ScalarVolume& gt_msa, const EcseOptions& opt,
            const Mask* mask) {
  require_same_grid(est.grid(), gt.grid(), "ecse");
  require_same_grid(gt.grid(), gt_msa.grid(), "ecse anisotropy");
  if (mask) require_same_grid(gt.grid(), mask->grid(), "ecse mask");
  double sum = 0.0;
  Index count = 0;
  for (Index v = 0; v < gt.size(); ++v) {
    if (mask && !(*mask)[v]) continue;
    if (!(gt_msa.data()(v, 0) > opt.threshold)) continue;
    const Vec3 t = gt.data().row(v).transpose();
    if (t.squaredNorm() == 0.0) continue;
    const Vec3 e = est.data().row(v).transpose();
    ++count;
    if (e.squaredNorm() == 0.0) {
      sum += 1.0;
      continue;
    }
    const double cosine = std::clamp(e.dot(t) / (e.norm() * t.norm()), -1.0, 1.0);
    sum += 1.0 - (opt.signed_cosine ? cosine : std::abs(cosine));
  }
  if (count == 0) throw InputError("ecse: no voxel exceeds the anisotropy threshold");
  return sum / double(count);
}

DirectionField weighted_pev(const EigenMaps& maps, const DirectionField* reference) {
  const Grid& g = maps.pev.grid();
  if (reference) require_same_grid(g, reference->grid(), "weighted_pev reference");
  DirectionField out(g);
  for (Index v = 0; v < g.size(); ++v) {
    Vec3 p = maps.pev.data().row(v).transpose();
    if (reference && p.dot(reference->data().row(v).transpose()) < 0.0) p = -p;
    out.data().row(v) = (maps.msa.data()(v, 0) * p).transpose();
  }
  return out;
}

double wpsnr(const EigenMaps& est, const EigenMaps& gt, const Mask& mask, const PsnrOptions& opt) {
  require_same_grid(est.pev.grid(), gt.pev.grid(), "wpsnr");
  require_mask(gt.pev.grid(), mask, "wpsnr");
  const DirectionField e = weighted_pev(est, &gt.pev);
  const DirectionField t = weighted_pev(gt);
  return psnr_data(e.data(), t.data(), mask, opt);
}

ScalarVolume pev_variance(const std::vector<DirectionField>& maps) {
  if (maps.size() < 2) throw InputError("pev_variance needs at least two maps");
  const Grid& g = maps.front().grid();
  for (const auto& m : maps) require_same_grid(g, m.grid(), "pev_variance");
  ScalarVolume out(g);
  const double n = double(maps.size());
  for (Index v = 0; v < g.size(); ++v) {
    const Vec3 ref = maps.front().data().row(v).transpose();
    std::vector<Vec3> aligned;
    aligned.reserve(maps.size());
    Vec3 mean = Vec3::Zero();
    for (const auto& m : maps) {
      Vec3 p = m.data().row(v).transpose();
      if (p.dot(ref) < 0.0) p = -p;
      aligned.push_back(p);
      mean += p;
    }
    mean /= n;
    double ss = 0.0;
    for (const auto& p : aligned) ss += (p - mean).squaredNorm();
    out.data()(v, 0) = ss / (n - 1.0);
  }
  return out;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "psnr_db: " << psnr << "\n"
     << "ssim: " << ssim << "\n"
     << "ecse: " << ecse << "\n"
     << "wpsnr_db: " << wpsnr << "\n"
     << "mask_voxels: " << mask_voxels << "\n"
     << "anisotropic_voxels: " << anisotropic_voxels << "\n"
     << "ecse_region: gt_msa > " << threshold << " ppm\n"
     << "psnr_peak: " << peak_rule << "\n";
  return os.str();
}

std::string MetricReport::csv_header() {
  return "psnr_db,ssim,ecse,wpsnr_db,mask_voxels,anisotropic_voxels,msa_threshold";
}

std::string MetricReport::to_csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << psnr << "," << ssim << "," << ecse << "," << wpsnr << "," << mask_voxels << "," << anisotropic_voxels << ","
     << threshold;
  return os.str();
}

MetricReport evaluate(const TensorVolume& est, const TensorVolume& gt, const Mask& mask, const MetricOptions& opt) {
  MetricReport r;
  r.mask_voxels = require_mask(gt.grid(), mask, "metrics");
  r.threshold = opt.ecse.threshold;
  r.peak_rule = opt.psnr.fixed_peak ? "fixed " + std::to_string(*opt.psnr.fixed_peak) : "max |gt| over mask";
  const EigenMaps e = eig_decompose(est, &mask);
  const EigenMaps t = eig_decompose(gt, &mask);
  for (Index v = 0; v < gt.size(); ++v)
    if (mask[v] && t.msa.data()(v, 0) > opt.ecse.threshold && !t.degenerate[v]) ++r.anisotropic_voxels;
  r.psnr = psnr(est, gt, mask, opt.psnr);
  r.ssim = ssim(est, gt, mask, opt.ssim);
  r.ecse = r.anisotropic_voxels ? ecse(e.pev, t.pev, t.msa, opt.ecse, &mask) : std::nan("");
  r.wpsnr = wpsnr(e, t, mask, opt.psnr);
  return r;
}

}  // namespace sti
