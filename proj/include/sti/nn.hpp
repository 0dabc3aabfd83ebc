#pragma once

// Inference engine for the residual symmetric U-Net proximal operator:
// 3-D conv / transpose conv / max-pool / group norm / ELU primitives, a
// topology description, and the STIW weight format.

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sti/volume.hpp"

namespace sti::nn {

// n x C feature map on an x-fastest voxel grid (same layout as Volume).
struct ChannelVolume {
  std::array<Index, 3> dims{1, 1, 1};
  Eigen::MatrixXd data;

  ChannelVolume() = default;
  ChannelVolume(std::array<Index, 3> dims, Index channels)
      : dims(dims), data(Eigen::MatrixXd::Zero(dims[0] * dims[1] * dims[2], channels)) {}

  Index channels() const { return data.cols(); }
  Index voxels() const { return dims[0] * dims[1] * dims[2]; }
  Index index(Index x, Index y, Index z) const { return x + dims[0] * (y + dims[1] * z); }
};

// Cubic kernel, weight laid out as (out, in, kz, ky, kx) with kx fastest.
// A transpose convolution stores the weights of the convolution it is the
// adjoint of, which is also the (in, out, kz, ky, kx) layout of common
// deep-learning frameworks for transposed layers.
struct ConvWeights {
  Index out_channels = 0;
  Index in_channels = 0;
  Index kernel = 1;
  Eigen::VectorXd weight;
  Eigen::VectorXd bias;  // empty = no bias

  ConvWeights() = default;
  ConvWeights(Index out, Index in, Index k)
      : out_channels(out), in_channels(in), kernel(k), weight(Eigen::VectorXd::Zero(out * in * k * k * k)) {}

  Index offset(Index o, Index i, Index z, Index y, Index x) const {
    return (((o * in_channels + i) * kernel + z) * kernel + y) * kernel + x;
  }
  double& at(Index o, Index i, Index z, Index y, Index x) { return weight[offset(o, i, z, y, x)]; }
  double at(Index o, Index i, Index z, Index y, Index x) const { return weight[offset(o, i, z, y, x)]; }
};

Index conv_output_size(Index n, Index kernel, Index stride, Index padding);
Index transpose_conv_output_size(Index n, Index kernel, Index stride, Index padding);

// Cross-correlation with zero padding; output dim floor((n + 2p − k)/s) + 1.
ChannelVolume conv3d(const ChannelVolume& input, const ConvWeights& w, Index stride, Index padding);

// Adjoint of conv3d(·, w, stride, padding) (bias excluded) plus a bias of
// length w.in_channels. Output dim (n − 1)s − 2p + k.
ChannelVolume transpose_conv3d(const ChannelVolume& input, const ConvWeights& w, Index stride, Index padding);

ChannelVolume maxpool3d(const ChannelVolume& input, Index kernel, Index stride);

// Per-group standardization over (channels in group × voxels), population
// variance, then per-channel affine.
ChannelVolume groupnorm(const ChannelVolume& input, Index groups, const Eigen::VectorXd& gamma,
                        const Eigen::VectorXd& beta, double eps);

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
ChannelVolume elu(ChannelVolume input);

// Network topology, read from a small key = value file:
//
//   depth = 2
//   in_channels = 6
//   out_channels = 6
//   widths = 8 16 32        # depth + 1 entries
//   kernel = 3
//   norm = group            # or none
//   groups = 4
//   eps = 1e-5
//   global_residual = false
struct NetworkSpec {
  int depth = 2;
  int in_channels = 6;
  int out_channels = 6;
  std::vector<int> widths{8, 16, 32};
  int kernel = 3;
  bool group_norm = true;
  int groups = 4;
  double eps = 1e-5;
  bool global_residual = false;

  void validate() const;
};

NetworkSpec parse_topology(std::string_view text);
NetworkSpec read_topology(const std::filesystem::path& path);
std::string format_topology(const NetworkSpec& spec);

struct TensorEntry {
  std::string name;  // e.g. "enc0.res.conv1.weight"
  std::string kind;  // conv3d | transpose_conv3d | groupnorm
  std::vector<Index> shape;
  Eigen::VectorXd values;

  Index numel() const;
};

struct WeightBundle {
  std::vector<TensorEntry> entries;

  const TensorEntry* find(std::string_view name) const;
};

// Every tensor the topology needs, in canonical order, with empty values.
std::vector<TensorEntry> expected_layout(const NetworkSpec& spec);

// Checks names, kinds and shapes against the topology. Throws InputError
// naming the first offending tensor; extra or missing entries are rejected.
void validate_bundle(const WeightBundle& bundle, const NetworkSpec& spec);

// He-style random initialization, deterministic in `seed`; norms start at
// gamma = 1, beta = 0.
WeightBundle random_weights(const NetworkSpec& spec, std::uint64_t seed, double scale = 1.0);

// STIW: UTF-8 manifest then little-endian float32 blobs in manifest order.
//
//   STIW1
//   count: <N>
//   <name> <kind> <d0>x<d1>x...
//   ...
//   <blank line>
//   <payload>
std::string encode_stiw(const WeightBundle& bundle);
WeightBundle decode_stiw(std::string_view bytes);
void save_weights(const std::filesystem::path& path, const WeightBundle& bundle);
WeightBundle load_weights(const std::filesystem::path& path, const NetworkSpec& spec);

class ProxNetwork {
 public:
  ProxNetwork(NetworkSpec spec, const WeightBundle& weights);

  const NetworkSpec& spec() const { return spec_; }

  // Forward pass on a feature map whose dims are divisible by 2^depth.
  ChannelVolume run(const ChannelVolume& input) const;

  // Symmetric zero padding up to a multiple of 2^depth, run, crop.
  TensorVolume infer(const TensorVolume& x, bool allow_padding = true) const;

 private:
  struct Block {
    ConvWeights conv, conv1, conv2;
    Eigen::VectorXd gamma1, beta1, gamma2, beta2;
  };

  ChannelVolume run_block(const Block& b, const ChannelVolume& x) const;

  NetworkSpec spec_;
  std::vector<Block> encoder_;  // depth + 1 levels, the last is the bottleneck
  std::vector<ConvWeights> up_;  // up_[l] maps level l + 1 to level l
  std::vector<Block> decoder_;   // decoder_[l] for l < depth
  ConvWeights head_;
};

}  // namespace sti::nn
