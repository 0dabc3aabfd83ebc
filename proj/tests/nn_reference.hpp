#pragma once

// Naive nested-loop evaluator for the proximal network, used as an oracle.

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sti/nn.hpp"

namespace sti::nn::reference {

inline ChannelVolume random_map(std::array<Index, 3> dims, Index channels, std::uint64_t seed) {
  ChannelVolume v(dims, channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < v.data.size(); ++i) v.data.data()[i] = normal(rng);
  return v;
}

inline ConvWeights random_conv(Index out, Index in, Index k, std::uint64_t seed, bool bias) {
  ConvWeights w(out, in, k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (auto& v : w.weight) v = normal(rng);
  if (bias) {
    w.bias.resize(out);
    for (auto& v : w.bias) v = normal(rng);
  }
  return w;
}

// Plain nested-loop reference layers on (c, z, y, x) arrays, x fastest.
struct Ref {
  Index c = 0, nx = 0, ny = 0, nz = 0;
  std::vector<double> v;

  Ref() = default;
  Ref(Index c, Index nx, Index ny, Index nz) : c(c), nx(nx), ny(ny), nz(nz), v(std::size_t(c * nx * ny * nz), 0.0) {}
  double& at(Index ch, Index x, Index y, Index z) { return v[std::size_t(((ch * nz + z) * ny + y) * nx + x)]; }
  double get(Index ch, Index x, Index y, Index z) const {
    if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return 0.0;
    return v[std::size_t(((ch * nz + z) * ny + y) * nx + x)];
  }
};

inline Ref to_ref(const ChannelVolume& m) {
  Ref r(m.channels(), m.dims[0], m.dims[1], m.dims[2]);
  for (Index ch = 0; ch < r.c; ++ch)
    for (Index z = 0; z < r.nz; ++z)
      for (Index y = 0; y < r.ny; ++y)
        for (Index x = 0; x < r.nx; ++x) r.at(ch, x, y, z) = m.data(m.index(x, y, z), ch);
  return r;
}

inline double max_gap(const Ref& r, const ChannelVolume& m) {
  if (r.c != m.channels() || r.nx != m.dims[0] || r.ny != m.dims[1] || r.nz != m.dims[2])
    throw std::logic_error("reference and engine maps differ in shape");
  double gap = 0.0;
  for (Index ch = 0; ch < r.c; ++ch)
    for (Index z = 0; z < r.nz; ++z)
      for (Index y = 0; y < r.ny; ++y)
        for (Index x = 0; x < r.nx; ++x)
          gap = std::max(gap, std::abs(r.get(ch, x, y, z) - m.data(m.index(x, y, z), ch)));
  return gap;
}

// w: (out, in, k, k, k) row-major flat.
inline Ref ref_conv(const Ref& in, const std::vector<double>& w, const std::vector<double>& bias, Index out_c, Index k,
             Index stride, Index pad) {
  const auto osz = [&](Index n) { return (n + 2 * pad - k) / stride + 1; };
  Ref out(out_c, osz(in.nx), osz(in.ny), osz(in.nz));
  for (Index o = 0; o < out_c; ++o)
    for (Index z = 0; z < out.nz; ++z)
      for (Index y = 0; y < out.ny; ++y)
        for (Index x = 0; x < out.nx; ++x) {
          double s = bias.empty() ? 0.0 : bias[std::size_t(o)];
          for (Index i = 0; i < in.c; ++i)
            for (Index dz = 0; dz < k; ++dz)
              for (Index dy = 0; dy < k; ++dy)
                for (Index dx = 0; dx < k; ++dx)
                  s += w[std::size_t((((o * in.c + i) * k + dz) * k + dy) * k + dx)] *
                       in.get(i, x * stride - pad + dx, y * stride - pad + dy, z * stride - pad + dz);
          out.at(o, x, y, z) = s;
        }
  return out;
}

// w: (in_of_this_layer, out_of_this_layer, 2, 2, 2), stride 2, no padding.
inline Ref ref_upsample(const Ref& in, const std::vector<double>& w, const std::vector<double>& bias, Index out_c) {
  Ref out(out_c, 2 * in.nx, 2 * in.ny, 2 * in.nz);
  for (Index o = 0; o < out_c; ++o)
    for (Index z = 0; z < out.nz; ++z)
      for (Index y = 0; y < out.ny; ++y)
        for (Index x = 0; x < out.nx; ++x) {
          double s = bias[std::size_t(o)];
          for (Index a = 0; a < in.c; ++a)
            s += w[std::size_t((((a * out_c + o) * 2 + z % 2) * 2 + y % 2) * 2 + x % 2)] * in.get(a, x / 2, y / 2, z / 2);
          out.at(o, x, y, z) = s;
        }
  return out;
}

inline Ref ref_pool(const Ref& in) {
  Ref out(in.c, in.nx / 2, in.ny / 2, in.nz / 2);
  for (Index ch = 0; ch < in.c; ++ch)
    for (Index z = 0; z < out.nz; ++z)
      for (Index y = 0; y < out.ny; ++y)
        for (Index x = 0; x < out.nx; ++x) {
          double m = -std::numeric_limits<double>::infinity();
          for (Index d = 0; d < 8; ++d) m = std::max(m, in.get(ch, 2 * x + d % 2, 2 * y + (d / 2) % 2, 2 * z + d / 4));
          out.at(ch, x, y, z) = m;
        }
  return out;
}

inline Ref ref_groupnorm(const Ref& in, Index groups, const std::vector<double>& gamma, const std::vector<double>& beta,
                  double eps) {
  Ref out = in;
  const Index per = in.c / groups;
  const std::size_t vox = std::size_t(in.nx * in.ny * in.nz);
  for (Index g = 0; g < groups; ++g) {
    double sum = 0.0, n = 0.0;
    for (Index ch = g * per; ch < (g + 1) * per; ++ch)
      for (std::size_t i = 0; i < vox; ++i) sum += in.v[std::size_t(ch) * vox + i], n += 1.0;
    const double mean = sum / n;
    double var = 0.0;
    for (Index ch = g * per; ch < (g + 1) * per; ++ch)
      for (std::size_t i = 0; i < vox; ++i) var += std::pow(in.v[std::size_t(ch) * vox + i] - mean, 2);
    var /= n;
    for (Index ch = g * per; ch < (g + 1) * per; ++ch)
      for (std::size_t i = 0; i < vox; ++i) {
        double& x = out.v[std::size_t(ch) * vox + i];
        x = (x - mean) / std::sqrt(var + eps) * gamma[std::size_t(ch)] + beta[std::size_t(ch)];
      }
  }
  return out;
}

inline Ref ref_elu(Ref r) {
  for (auto& x : r.v) x = x > 0 ? x : std::exp(x) - 1.0;
  return r;
}

inline std::vector<double> values(const WeightBundle& b, const std::string& name) {
  const TensorEntry* e = b.find(name);
  if (!e) throw std::logic_error("missing tensor " + name);
  return {e->values.data(), e->values.data() + e->values.size()};
}

inline Ref ref_block(const Ref& x, const WeightBundle& b, const NetworkSpec& s, const std::string& p, Index width) {
  const Index k = s.kernel, pad = k / 2;
  Ref h = ref_conv(x, values(b, p + ".conv.weight"), values(b, p + ".conv.bias"), width, k, 1, pad);
  Ref r = h;
  for (const char* i : {"1", "2"}) {
    r = ref_conv(r, values(b, p + ".res.conv" + i + ".weight"), values(b, p + ".res.conv" + i + ".bias"), width, k, 1,
                 pad);
    if (s.group_norm)
      r = ref_groupnorm(r, s.groups, values(b, p + ".res.norm" + i + ".gamma"), values(b, p + ".res.norm" + i + ".beta"),
                        s.eps);
    r = ref_elu(r);
  }
  for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += r.v[i];
  return h;
}

inline Ref ref_network(const Ref& input, const WeightBundle& b, const NetworkSpec& s) {
  std::vector<Ref> skips;
  Ref h = input;
  for (int l = 0; l <= s.depth; ++l) {
    h = ref_block(h, b, s, "enc" + std::to_string(l), s.widths[std::size_t(l)]);
    if (l < s.depth) {
      skips.push_back(h);
      h = ref_pool(h);
    }
  }
  for (int l = s.depth - 1; l >= 0; --l) {
    const std::string u = "up" + std::to_string(l);
    Ref up = ref_upsample(h, values(b, u + ".weight"), values(b, u + ".bias"), s.widths[std::size_t(l)]);
    for (std::size_t i = 0; i < up.v.size(); ++i) up.v[i] += skips[std::size_t(l)].v[i];
    h = ref_block(up, b, s, "dec" + std::to_string(l), s.widths[std::size_t(l)]);
  }
  Ref out = ref_conv(h, values(b, "out.weight"), values(b, "out.bias"), s.out_channels, 1, 1, 0);
  if (s.global_residual)
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += input.v[i];
  return out;
}

inline std::vector<double> flat(const ConvWeights& w) { return {w.weight.data(), w.weight.data() + w.weight.size()}; }
inline std::vector<double> flat_bias(const ConvWeights& w) { return {w.bias.data(), w.bias.data() + w.bias.size()}; }

}  // namespace sti::nn::reference
