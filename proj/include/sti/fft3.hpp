#pragma once

#include <unsupported/Eigen/FFT>

#include <array>
#include <complex>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

// In-place 3-D DFT over an x-fastest complex buffer, done axis by axis.
// forward() is unnormalized, inverse() scales by 1/n, matching numpy.fft.
// Holds a plan cache, so one instance must not be shared between threads.
class Fft3 {
 public:
  explicit Fft3(std::array<Index, 3> dims);

  void forward(std::complex<double>* data) { transform(data, false); }
  void inverse(std::complex<double>* data) { transform(data, true); }

  Index size() const { return dims_[0] * dims_[1] * dims_[2]; }

 private:
  void transform(std::complex<double>* data, bool inverse);

  std::array<Index, 3> dims_;
  Eigen::FFT<double> fft_;
  std::vector<std::complex<double>> in_, out_;
};

}  // namespace sti
