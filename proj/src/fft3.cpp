#include "sti/fft3.hpp"

#include <algorithm>

namespace sti {

Fft3::Fft3(std::array<Index, 3> dims) : dims_(dims) {
  const Index longest = std::max({dims[0], dims[1], dims[2]});
  in_.resize(std::size_t(longest));
  out_.resize(std::size_t(longest));
}

void Fft3::transform(std::complex<double>* data, bool inverse) {
  const Index strides[3] = {1, dims_[0], dims_[0] * dims_[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const Index len = dims_[axis];
    if (len == 1) continue;
    const Index stride = strides[axis];
    const Index lines = size() / len;
    for (Index line = 0; line < lines; ++line) {
      // Decompose the line number into the offset of its first element.
      const Index inner = line % stride;
      const Index outer = line / stride;
      std::complex<double>* base = data + inner + outer * stride * len;
      for (Index t = 0; t < len; ++t) in_[std::size_t(t)] = base[t * stride];
      if (inverse) {
        fft_.inv(out_.data(), in_.data(), len);
      } else {
        fft_.fwd(out_.data(), in_.data(), len);
      }
      for (Index t = 0; t < len; ++t) base[t * stride] = out_[std::size_t(t)];
    }
  }
}

}  // namespace sti
