#include "sti/dipole.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "sti/fft3.hpp"
#include "sti/file_util.hpp"

namespace sti {

namespace {

using Complex = std::complex<double>;

double dft_frequency(Index idx, Index n, double voxel) {
  const Index signed_idx = idx <= (n - 1) / 2 ? idx : idx - n;
  return double(signed_idx) / (double(n) * voxel);
}

Grid padded_grid(const Grid& grid, double pad_factor) {
  if (!(pad_factor >= 1.0)) throw UsageError("pad factor must be >= 1");
  std::array<Index, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = Index(std::ceil(pad_factor * double(grid.dims[a]) - 1e-9));
  return Grid(dims, grid.voxel_size);
}

// Copies an image-grid column into the origin corner of a zeroed FFT buffer.
void embed(const Grid& image, const Grid& padded, const Eigen::Ref<const Eigen::VectorXd>& src,
           Eigen::VectorXcd& dst) {
  dst.setZero(padded.size());
  if (image == padded) {
    dst.real() = src;
    return;
  }
  for (Index k = 0; k < image.dims[2]; ++k)
    for (Index j = 0; j < image.dims[1]; ++j)
      for (Index i = 0; i < image.dims[0]; ++i) dst[padded.index(i, j, k)] = src[image.index(i, j, k)];
}

void extract(const Grid& image, const Grid& padded, const Eigen::VectorXcd& src,
             Eigen::Ref<Eigen::VectorXd> dst, double& max_imag) {
  if (image == padded) {
    dst = src.real();
    max_imag = std::max(max_imag, src.imag().cwiseAbs().maxCoeff());
    return;
  }
  for (Index k = 0; k < image.dims[2]; ++k)
    for (Index j = 0; j < image.dims[1]; ++j)
      for (Index i = 0; i < image.dims[0]; ++i) {
        const Complex v = src[padded.index(i, j, k)];
        dst[image.index(i, j, k)] = v.real();
        max_imag = std::max(max_imag, std::abs(v.imag()));
      }
}

template <int C>
std::vector<BasicDipoleKernel<C>> make_kernels(const Grid& fft_grid,
                                               const std::vector<Orientation>& orientations) {
  if (orientations.empty()) throw InputError("dipole operator needs at least one orientation");
  const auto freq = make_frequency_grid(fft_grid, true);
  const Index n = fft_grid.size();
  std::vector<BasicDipoleKernel<C>> kernels;
  kernels.reserve(orientations.size());
  for (const auto& o : orientations) {
    BasicDipoleKernel<C> kernel{o, Eigen::Matrix<double, Eigen::Dynamic, C>(n, C)};
    for (Index v = 0; v < n; ++v) {
      const Vec3 k = freq.k.row(v).transpose();
      for (int c = 0; c < C; ++c) {
        if constexpr (C == 6) {
          kernel.coeffs(v, c) = combined_coefficient(o.h(), k, c);
        } else {
          kernel.coeffs(v, c) = kernel_coefficient(o.h(), k, c / 3, c % 3);
        }
      }
    }
    kernels.push_back(std::move(kernel));
  }
  return kernels;
}

}  // namespace

FrequencyGrid make_frequency_grid(const Grid& grid, bool hermitian) {
  FrequencyGrid out{grid, Eigen::Matrix<double, Eigen::Dynamic, 3>(grid.size(), 3)};
  for (Index k = 0; k < grid.dims[2]; ++k)
    for (Index j = 0; j < grid.dims[1]; ++j)
      for (Index i = 0; i < grid.dims[0]; ++i) {
        const std::array<Index, 3> idx{i, j, k};
        // A bin is its own mirror when every index is 0 or Nyquist.
        bool self_mirror = true;
        for (int a = 0; a < 3; ++a) {
          const Index n = grid.dims[a];
          self_mirror = self_mirror && (idx[a] == 0 || (n % 2 == 0 && idx[a] == n / 2));
        }
        const Index v = grid.index(i, j, k);
        for (int a = 0; a < 3; ++a) {
          const Index n = grid.dims[a];
          const bool nyquist = n % 2 == 0 && idx[a] == n / 2;
          out.k(v, a) = hermitian && nyquist && !self_mirror ? 0.0 : dft_frequency(idx[a], n, grid.voxel_size[a]);
        }
      }
  return out;
}

template <int C>
BasicDipoleOperator<C>::BasicDipoleOperator(const Grid& grid, const Grid& fft_grid,
                                            std::vector<Kernel> kernels, std::optional<Mask> mask)
    : grid_(grid), fft_grid_(fft_grid), kernels_(std::move(kernels)), mask_(std::move(mask)) {
  if (kernels_.empty()) throw InputError("dipole operator needs at least one orientation");
  for (int a = 0; a < 3; ++a) {
    if (fft_grid_.dims[a] < grid_.dims[a]) throw InputError("FFT grid smaller than image grid");
  }
  for (const auto& k : kernels_) {
    if (k.coeffs.rows() != fft_grid_.size()) throw InputError("kernel length does not match FFT grid");
    if (!k.coeffs.allFinite()) throw NumericalError("kernel has non-finite coefficients");
  }
  if (mask_) require_same_grid(mask_->grid(), grid_, "dipole operator mask");
}

template <int C>
std::vector<Orientation> BasicDipoleOperator<C>::orientations() const {
  std::vector<Orientation> out;
  out.reserve(kernels_.size());
  for (const auto& k : kernels_) out.push_back(k.orientation);
  return out;
}

template <int C>
BasicDipoleOperator<C> BasicDipoleOperator<C>::with_mask(std::optional<Mask> mask) const {
  return BasicDipoleOperator(grid_, fft_grid_, kernels_, std::move(mask));
}

DipoleOperator build_operator(const Grid& grid, const std::vector<Orientation>& orientations,
                              const OperatorOptions& options) {
  const Grid fft_grid = padded_grid(grid, options.pad_factor);
  return DipoleOperator(grid, fft_grid, make_kernels<6>(fft_grid, orientations), options.mask);
}

AsymDipoleOperator build_asym_operator(const Grid& grid, const std::vector<Orientation>& orientations,
                                       const OperatorOptions& options) {
  const Grid fft_grid = padded_grid(grid, options.pad_factor);
  return AsymDipoleOperator(grid, fft_grid, make_kernels<9>(fft_grid, orientations), options.mask);
}

template <int C>
FieldSet forward(const BasicDipoleOperator<C>& op, const Volume<double, C>& x,
                 ForwardDiagnostics* diagnostics) {
  require_same_grid(op.grid(), x.grid(), "forward");
  const Grid& fg = op.fft_grid();
  Fft3 fft(fg.dims);

  Eigen::MatrixXcd spectra(fg.size(), C);
  Eigen::VectorXcd buf;
  for (int c = 0; c < C; ++c) {
    embed(op.grid(), fg, x.component(c), buf);
    fft.forward(buf.data());
    spectra.col(c) = buf;
  }

  FieldSet out(op.grid(), op.orientations());
  double max_imag = 0.0;
  for (Index o = 0; o < op.count(); ++o) {
    const auto& coeffs = op.kernels()[std::size_t(o)].coeffs;
    buf = spectra.col(0).cwiseProduct(coeffs.col(0).template cast<Complex>());
    for (int c = 1; c < C; ++c) buf += spectra.col(c).cwiseProduct(coeffs.col(c).template cast<Complex>());
    fft.inverse(buf.data());
    extract(op.grid(), fg, buf, out.data.col(o), max_imag);
  }
  if (op.mask()) out.data.array().colwise() *= op.mask()->weights().array();
  if (diagnostics) diagnostics->max_imaginary = max_imag;
  return out;
}

template <int C>
Volume<double, C> adjoint(const BasicDipoleOperator<C>& op, const FieldSet& y) {
  require_same_grid(op.grid(), y.grid, "adjoint");
  if (y.count() != op.count()) {
    throw InputError("adjoint: field set has " + std::to_string(y.count()) + " orientations, operator has " +
                     std::to_string(op.count()));
  }
  const Grid& fg = op.fft_grid();
  Fft3 fft(fg.dims);

  Eigen::MatrixXcd spectra(fg.size(), op.count());
  Eigen::VectorXcd buf;
  Eigen::VectorXd column;
  for (Index o = 0; o < op.count(); ++o) {
    column = y.data.col(o);
    if (op.mask()) column.array() *= op.mask()->weights().array();
    embed(op.grid(), fg, column, buf);
    fft.forward(buf.data());
    spectra.col(o) = buf;
  }

  Volume<double, C> out(op.grid());
  double ignored = 0.0;
  for (int c = 0; c < C; ++c) {
    buf = spectra.col(0).cwiseProduct(op.kernels()[0].coeffs.col(c).template cast<Complex>());
    for (Index o = 1; o < op.count(); ++o)
      buf += spectra.col(o).cwiseProduct(op.kernels()[std::size_t(o)].coeffs.col(c).template cast<Complex>());
    fft.inverse(buf.data());
    extract(op.grid(), fg, buf, out.component(c), ignored);
  }
  return out;
}

template class BasicDipoleOperator<6>;
template class BasicDipoleOperator<9>;
template FieldSet forward<6>(const DipoleOperator&, const TensorVolume&, ForwardDiagnostics*);
template FieldSet forward<9>(const AsymDipoleOperator&, const AsymTensorVolume&, ForwardDiagnostics*);
template TensorVolume adjoint<6>(const DipoleOperator&, const FieldSet&);
template AsymTensorVolume adjoint<9>(const AsymDipoleOperator&, const FieldSet&);

TensorVolume gradient_step(const DipoleOperator& op, const TensorVolume& x, const FieldSet& y,
                           double alpha) {
  if (alpha < 0.0 || !std::isfinite(alpha)) throw UsageError("gradient step size must be finite and >= 0");
  if (alpha == 0.0) return x;
  FieldSet residual = forward(op, x);
  require_same_grid(residual.grid, y.grid, "gradient_step");
  residual.data -= y.data;
  // adjoint() applies the mask to its input.
  const TensorVolume g = adjoint(op, residual);
  TensorVolume out = x;
  out.data() -= alpha * g.data();
  return out;
}

double data_fidelity(const DipoleOperator& op, const TensorVolume& x, const FieldSet& y) {
  FieldSet r = forward(op, x);
  r.data -= y.data;
  if (op.mask()) r.data.array().colwise() *= op.mask()->weights().array();
  return 0.5 * r.data.squaredNorm();
}

std::vector<double> operator_norm_history(const DipoleOperator& op, int iterations) {
  if (iterations < 1) throw UsageError("operator_norm needs at least one iteration");
  std::mt19937_64 rng(0x5717A9E5ULL);
  std::normal_distribution<double> normal;
  TensorVolume v(op.grid());
  for (Index i = 0; i < v.data().size(); ++i) v.data().data()[i] = normal(rng);
  v.data() /= v.data().norm();

  std::vector<double> history;
  history.reserve(std::size_t(iterations));
  for (int it = 0; it < iterations; ++it) {
    TensorVolume w = adjoint(op, forward(op, v));
    const double norm = w.data().norm();
    history.push_back(norm);
    if (norm == 0.0) break;
    v.data() = w.data() / norm;
  }
  return history;
}

double operator_norm(const DipoleOperator& op, int iterations) {
  return operator_norm_history(op, iterations).back();
}

ConditionSpectrum condition_spectrum(const std::vector<Orientation>& orientations, const Grid& grid) {
  if (orientations.empty()) throw InputError("condition_spectrum needs at least one orientation");
  const auto freq = make_frequency_grid(grid, true);
  const Index n = grid.size();
  const Index m = Index(orientations.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ConditionSpectrum out{Eigen::VectorXd::Constant(n, nan), Eigen::VectorXd::Constant(n, nan), 0.0, 0.0};

  Eigen::MatrixXd rows(m, 6);
  std::vector<double> per_frequency;
  per_frequency.reserve(std::size_t(n));
  double global_max = 0.0;
  double global_min = std::numeric_limits<double>::infinity();
  for (Index v = 0; v < n; ++v) {
    const Vec3 k = freq.k.row(v).transpose();
    if (k.squaredNorm() == 0.0) continue;
    for (Index c = 0; c < m; ++c)
      for (int j = 0; j < 6; ++j) rows(c, j) = combined_coefficient(orientations[std::size_t(c)].h(), k, j);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
    const auto& s = svd.singularValues();
    const double smax = s[0];
    const double smin = m < 6 ? 0.0 : s[5];
    out.sigma_max[v] = smax;
    out.sigma_min[v] = smin;
    global_max = std::max(global_max, smax);
    global_min = std::min(global_min, smin);
    per_frequency.push_back(smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity());
  }
  const double inf = std::numeric_limits<double>::infinity();
  out.condition_number = (m < 6 || global_min <= 0.0) ? inf : global_max / global_min;
  if (!per_frequency.empty()) {
    auto mid = per_frequency.begin() + std::ptrdiff_t(per_frequency.size() / 2);
    std::nth_element(per_frequency.begin(), mid, per_frequency.end());
    out.median_frequency_condition = *mid;
  }
  return out;
}

std::vector<Orientation> parse_orientations(std::string_view text) {
  std::vector<Orientation> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    // Accept the "(a, b, c)" table notation as well as bare triples.
    std::replace_if(line.begin(), line.end(), [](char ch) { return ch == ',' || ch == '(' || ch == ')'; }, ' ');
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3)
      throw InputError("orientation line " + std::to_string(lineno) + ": expected 3 numbers");
    Vec3 h;
    try {
      for (int a = 0; a < 3; ++a) {
        std::size_t used = 0;
        h[a] = std::stod(tok[std::size_t(a)], &used);
        if (used != tok[std::size_t(a)].size()) throw std::invalid_argument("trailing");
      }
      out.push_back(Orientation::from_vector(h));
    } catch (const std::exception&) {
      throw InputError("orientation line " + std::to_string(lineno) + ": invalid vector");
    }
  }
  if (out.empty()) throw InputError("orientation list is empty");
  return out;
}

std::vector<Orientation> read_orientations(const std::filesystem::path& path) {
  try {
    return parse_orientations(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string format_orientations(const std::vector<Orientation>& orientations) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& o : orientations) os << o[0] << " " << o[1] << " " << o[2] << "\n";
  return os.str();
}

std::vector<Orientation> icosahedral_orientations() {
  std::vector<Orientation> out{Orientation::from_vector(Vec3::UnitZ())};
  const double tilt = std::atan(2.0);
  for (int a = 0; a < 5; ++a) {
    const double phi = 2.0 * std::numbers::pi * a / 5.0;
    out.push_back(Orientation::from_vector(
        Vec3(std::sin(tilt) * std::cos(phi), std::sin(tilt) * std::sin(phi), std::cos(tilt))));
  }
  return out;
}

}  // namespace sti
