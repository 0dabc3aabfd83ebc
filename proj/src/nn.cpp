#include "sti/nn.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "sti/config.hpp"
#include "sti/file_util.hpp"
#include "sti/parallel.hpp"

namespace sti::nn {

Index conv_output_size(Index n, Index kernel, Index stride, Index padding) {
  if (stride < 1 || kernel < 1 || padding < 0) throw InputError("invalid convolution geometry");
  const Index span = n + 2 * padding - kernel;
  if (span < 0) throw InputError("convolution kernel larger than padded input");
  return span / stride + 1;
}

Index transpose_conv_output_size(Index n, Index kernel, Index stride, Index padding) {
  const Index out = (n - 1) * stride - 2 * padding + kernel;
  if (out < 1) throw InputError("transpose convolution produces an empty output");
  return out;
}

namespace {

void require_channels(const ChannelVolume& in, Index channels, const char* what) {
  if (in.channels() != channels) {
    throw InputError(std::string(what) + ": input has " + std::to_string(in.channels()) + " channels, weights expect " +
                     std::to_string(channels));
  }
}

}  // namespace

ChannelVolume conv3d(const ChannelVolume& in, const ConvWeights& w, Index stride, Index padding) {
  require_channels(in, w.in_channels, "conv3d");
  if (w.weight.size() != w.out_channels * w.in_channels * w.kernel * w.kernel * w.kernel)
    throw InputError("conv3d: weight length does not match its shape");
  if (w.bias.size() != 0 && w.bias.size() != w.out_channels) throw InputError("conv3d: bias length mismatch");
  std::array<Index, 3> od{};
  for (int a = 0; a < 3; ++a) od[a] = conv_output_size(in.dims[a], w.kernel, stride, padding);
  ChannelVolume out(od, w.out_channels);
  const Index k = w.kernel;

  parallel_for(w.out_channels, [&](Index o) {
    auto dst = out.data.col(o);
    if (w.bias.size()) dst.setConstant(w.bias[o]);
    for (Index i = 0; i < w.in_channels; ++i) {
      const auto src = in.data.col(i);
      for (Index kz = 0; kz < k; ++kz)
        for (Index ky = 0; ky < k; ++ky)
          for (Index kx = 0; kx < k; ++kx) {
            const double wt = w.at(o, i, kz, ky, kx);
            if (wt == 0.0) continue;
            for (Index z = 0; z < od[2]; ++z) {
              const Index iz = z * stride - padding + kz;
              if (iz < 0 || iz >= in.dims[2]) continue;
              for (Index y = 0; y < od[1]; ++y) {
                const Index iy = y * stride - padding + ky;
                if (iy < 0 || iy >= in.dims[1]) continue;
                const Index orow = out.index(0, y, z);
                const Index irow = in.index(0, iy, iz);
                for (Index x = 0; x < od[0]; ++x) {
                  const Index ix = x * stride - padding + kx;
                  if (ix < 0 || ix >= in.dims[0]) continue;
                  dst[orow + x] += wt * src[irow + ix];
                }
              }
            }
          }
    }
  });
  return out;
}

ChannelVolume transpose_conv3d(const ChannelVolume& in, const ConvWeights& w, Index stride, Index padding) {
  require_channels(in, w.out_channels, "transpose_conv3d");
  if (w.weight.size() != w.out_channels * w.in_channels * w.kernel * w.kernel * w.kernel)
    throw InputError("transpose_conv3d: weight length does not match its shape");
  if (w.bias.size() != 0 && w.bias.size() != w.in_channels)
    throw InputError("transpose_conv3d: bias length mismatch");
  std::array<Index, 3> od{};
  for (int a = 0; a < 3; ++a) od[a] = transpose_conv_output_size(in.dims[a], w.kernel, stride, padding);
  ChannelVolume out(od, w.in_channels);
  const Index k = w.kernel;

  // Scatter form of the adjoint: input voxel (x, y, z) of channel o feeds
  // output voxel (x s − p + kx, ...) of channel i.
  parallel_for(w.in_channels, [&](Index i) {
    auto dst = out.data.col(i);
    if (w.bias.size()) dst.setConstant(w.bias[i]);
    for (Index o = 0; o < w.out_channels; ++o) {
      const auto src = in.data.col(o);
      for (Index kz = 0; kz < k; ++kz)
        for (Index ky = 0; ky < k; ++ky)
          for (Index kx = 0; kx < k; ++kx) {
            const double wt = w.at(o, i, kz, ky, kx);
            if (wt == 0.0) continue;
            for (Index z = 0; z < in.dims[2]; ++z) {
              const Index oz = z * stride - padding + kz;
              if (oz < 0 || oz >= od[2]) continue;
              for (Index y = 0; y < in.dims[1]; ++y) {
                const Index oy = y * stride - padding + ky;
                if (oy < 0 || oy >= od[1]) continue;
                const Index irow = in.index(0, y, z);
                const Index orow = out.index(0, oy, oz);
                for (Index x = 0; x < in.dims[0]; ++x) {
                  const Index ox = x * stride - padding + kx;
                  if (ox < 0 || ox >= od[0]) continue;
                  dst[orow + ox] += wt * src[irow + x];
                }
              }
            }
          }
    }
  });
  return out;
}

ChannelVolume maxpool3d(const ChannelVolume& in, Index kernel, Index stride) {
  std::array<Index, 3> od{};
  for (int a = 0; a < 3; ++a) od[a] = conv_output_size(in.dims[a], kernel, stride, 0);
  ChannelVolume out(od, in.channels());
  parallel_for(in.channels(), [&](Index c) {
    const auto src = in.data.col(c);
    auto dst = out.data.col(c);
    for (Index z = 0; z < od[2]; ++z)
      for (Index y = 0; y < od[1]; ++y)
        for (Index x = 0; x < od[0]; ++x) {
          double best = -std::numeric_limits<double>::infinity();
          for (Index kz = 0; kz < kernel; ++kz)
            for (Index ky = 0; ky < kernel; ++ky)
              for (Index kx = 0; kx < kernel; ++kx)
                best = std::max(best, src[in.index(x * stride + kx, y * stride + ky, z * stride + kz)]);
          dst[out.index(x, y, z)] = best;
        }
  });
  return out;
}

ChannelVolume groupnorm(const ChannelVolume& in, Index groups, const Eigen::VectorXd& gamma,
                        const Eigen::VectorXd& beta, double eps) {
  const Index channels = in.channels();
  if (groups < 1 || channels % groups != 0)
    throw InputError("groupnorm: " + std::to_string(channels) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  if (gamma.size() != channels || beta.size() != channels) throw InputError("groupnorm: affine length mismatch");
  if (!(eps > 0.0)) throw UsageError("groupnorm: eps must be > 0");
  ChannelVolume out(in.dims, channels);
  const Index per = channels / groups;
  const double count = double(per * in.voxels());
  for (Index g = 0; g < groups; ++g) {
    const auto block = in.data.middleCols(g * per, per);
    const double mean = block.sum() / count;
    const double var = (block.array() - mean).square().sum() / count;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Index c = g * per; c < (g + 1) * per; ++c)
      out.data.col(c) = ((in.data.col(c).array() - mean) * (inv * gamma[c]) + beta[c]).matrix();
  }
  return out;
}

ChannelVolume elu(ChannelVolume in) {
  in.data = in.data.unaryExpr([](double v) { return elu(v); });
  return in;
}

void NetworkSpec::validate() const {
  if (depth < 0 || depth > 6) throw InputError("topology: depth must lie in [0, 6]");
  if (in_channels < 1 || out_channels < 1) throw InputError("topology: channel counts must be >= 1");
  if (int(widths.size()) != depth + 1)
    throw InputError("topology: widths needs depth + 1 = " + std::to_string(depth + 1) + " entries");
  if (kernel < 1 || kernel % 2 == 0) throw InputError("topology: kernel must be odd and >= 1");
  if (!(eps > 0.0)) throw InputError("topology: eps must be > 0");
  for (int w : widths) {
    if (w < 1) throw InputError("topology: widths must be >= 1");
    if (group_norm && (groups < 1 || w % groups != 0))
      throw InputError("topology: width " + std::to_string(w) + " not divisible by groups");
  }
  if (global_residual && in_channels != out_channels)
    throw InputError("topology: global_residual needs in_channels == out_channels");
}

NetworkSpec parse_topology(std::string_view text) {
  const Config cfg = parse_config(text, "topology");
  if (cfg.sections.size() != 1) throw InputError("topology: sections are not allowed");
  const auto& s = cfg.sections.front();
  s.require_known({"depth", "in_channels", "out_channels", "widths", "kernel", "norm", "groups", "eps",
                   "global_residual"});
  NetworkSpec spec;
  spec.depth = int(s.get_int("depth", spec.depth));
  spec.in_channels = int(s.get_int("in_channels", spec.in_channels));
  spec.out_channels = int(s.get_int("out_channels", spec.out_channels));
  spec.kernel = int(s.get_int("kernel", spec.kernel));
  spec.groups = int(s.get_int("groups", spec.groups));
  spec.eps = s.get_double("eps", spec.eps);
  if (s.has("norm")) {
    const auto norm = s.get_string("norm");
    if (norm != "group" && norm != "none")
      throw InputError("topology line " + std::to_string(s.find("norm")->line) + ": norm must be 'group' or 'none'");
    spec.group_norm = norm == "group";
  }
  if (s.has("global_residual")) {
    const auto v = s.get_string("global_residual");
    if (v != "true" && v != "false")
      throw InputError("topology line " + std::to_string(s.find("global_residual")->line) +
                       ": global_residual must be true or false");
    spec.global_residual = v == "true";
  }
  if (s.has("widths")) {
    spec.widths.clear();
    for (const auto& tok : split_ws(s.get_string("widths"))) {
      try {
        spec.widths.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw InputError("topology line " + std::to_string(s.find("widths")->line) + ": widths must be integers");
      }
    }
  } else {
    spec.widths.assign(std::size_t(spec.depth + 1), 0);
    for (int l = 0; l <= spec.depth; ++l) spec.widths[std::size_t(l)] = 8 << l;
  }
  spec.validate();
  return spec;
}

NetworkSpec read_topology(const std::filesystem::path& path) {
  try {
    return parse_topology(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string format_topology(const NetworkSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "depth = " << spec.depth << "\n"
     << "in_channels = " << spec.in_channels << "\n"
     << "out_channels = " << spec.out_channels << "\n"
     << "widths =";
  for (int w : spec.widths) os << " " << w;
  os << "\nkernel = " << spec.kernel << "\n"
     << "norm = " << (spec.group_norm ? "group" : "none") << "\n"
     << "groups = " << spec.groups << "\n"
     << "eps = " << spec.eps << "\n"
     << "global_residual = " << (spec.global_residual ? "true" : "false") << "\n";
  return os.str();
}

Index TensorEntry::numel() const {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

const TensorEntry* WeightBundle::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

namespace {

void add_conv(std::vector<TensorEntry>& out, const std::string& layer, std::string kind, Index a, Index b, Index k,
              Index bias) {
  out.push_back({layer + ".weight", kind, {a, b, k, k, k}, {}});
  out.push_back({layer + ".bias", std::move(kind), {bias}, {}});
}

void add_block(std::vector<TensorEntry>& out, const NetworkSpec& spec, const std::string& prefix, Index in,
               Index width) {
  const Index k = spec.kernel;
  add_conv(out, prefix + ".conv", "conv3d", width, in, k, width);
  for (int r = 1; r <= 2; ++r) {
    const std::string idx = std::to_string(r);
    add_conv(out, prefix + ".res.conv" + idx, "conv3d", width, width, k, width);
    if (spec.group_norm) {
      out.push_back({prefix + ".res.norm" + idx + ".gamma", "groupnorm", {width}, {}});
      out.push_back({prefix + ".res.norm" + idx + ".beta", "groupnorm", {width}, {}});
    }
  }
}

}  // namespace

std::vector<TensorEntry> expected_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<TensorEntry> out;
  const auto& w = spec.widths;
  for (int l = 0; l <= spec.depth; ++l) {
    const Index in = l == 0 ? spec.in_channels : w[std::size_t(l - 1)];
    add_block(out, spec, "enc" + std::to_string(l), in, w[std::size_t(l)]);
  }
  for (int l = spec.depth - 1; l >= 0; --l) {
    // Stored as the adjoint convolution: (channels at level l + 1, channels at level l).
    add_conv(out, "up" + std::to_string(l), "transpose_conv3d", w[std::size_t(l + 1)], w[std::size_t(l)], 2,
             w[std::size_t(l)]);
    add_block(out, spec, "dec" + std::to_string(l), w[std::size_t(l)], w[std::size_t(l)]);
  }
  add_conv(out, "out", "conv3d", spec.out_channels, w[0], 1, spec.out_channels);
  return out;
}

void validate_bundle(const WeightBundle& bundle, const NetworkSpec& spec) {
  const auto layout = expected_layout(spec);
  for (const auto& want : layout) {
    const auto* got = bundle.find(want.name);
    if (!got) throw InputError("weights: missing tensor '" + want.name + "'");
    if (got->kind != want.kind)
      throw InputError("weights: tensor '" + want.name + "' has kind " + got->kind + ", expected " + want.kind);
    if (got->shape != want.shape) throw InputError("weights: tensor '" + want.name + "' has the wrong shape");
    if (got->values.size() != want.numel())
      throw InputError("weights: tensor '" + want.name + "' has the wrong number of values");
  }
  for (const auto& e : bundle.entries) {
    bool known = false;
    for (const auto& want : layout) known = known || want.name == e.name;
    if (!known) throw InputError("weights: unexpected tensor '" + e.name + "'");
  }
}

WeightBundle random_weights(const NetworkSpec& spec, std::uint64_t seed, double scale) {
  WeightBundle b{expected_layout(spec)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (auto& e : b.entries) {
    e.values.resize(e.numel());
    const bool is_gamma = e.name.ends_with(".gamma");
    const bool is_beta = e.name.ends_with(".beta");
    const bool is_bias = e.name.ends_with(".bias");
    if (is_gamma) {
      e.values.setOnes();
    } else if (is_beta) {
      e.values.setZero();
    } else if (is_bias) {
      for (auto& v : e.values) v = 0.01 * scale * normal(rng);
    } else {
      // Fan-in of a (a, b, k, k, k) tensor: b k³ for conv, a k³ for transpose.
      const Index k3 = e.shape[2] * e.shape[3] * e.shape[4];
      const Index fan_in = (e.kind == "transpose_conv3d" ? e.shape[0] : e.shape[1]) * k3;
      const double sd = scale * std::sqrt(2.0 / double(fan_in));
      for (auto& v : e.values) v = sd * normal(rng);
    }
  }
  return b;
}

std::string encode_stiw(const WeightBundle& bundle) {
  std::string out = "STIW1\ncount: " + std::to_string(bundle.entries.size()) + "\n";
  for (const auto& e : bundle.entries) {
    if (e.values.size() != e.numel()) throw InputError("weights: tensor '" + e.name + "' value count mismatch");
    out += e.name + " " + e.kind + " ";
    for (std::size_t d = 0; d < e.shape.size(); ++d) out += (d ? "x" : "") + std::to_string(e.shape[d]);
    out += "\n";
  }
  out += "\n";
  for (const auto& e : bundle.entries)
    append_f32le(out, std::span<const double>(e.values.data(), std::size_t(e.values.size())));
  return out;
}

WeightBundle decode_stiw(std::string_view bytes) {
  if (bytes.empty()) throw InputError("weights: empty file");
  const auto end = bytes.find("\n\n");
  if (end == std::string_view::npos) throw InputError("weights: manifest is not terminated by a blank line");
  std::istringstream in{std::string(bytes.substr(0, end))};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "STIW1") throw InputError("weights: not a STIW1 file");
  if (!std::getline(in, line) || line.rfind("count:", 0) != 0) throw InputError("weights: missing count line");
  long long count = 0;
  try {
    count = std::stoll(trim(line.substr(6)));
  } catch (const std::exception&) {
    throw InputError("weights: invalid count");
  }
  WeightBundle b;
  Index total = 0;
  while (std::getline(in, line)) {
    const auto tok = split_ws(line);
    if (tok.size() != 3) throw InputError("weights: malformed manifest line '" + line + "'");
    TensorEntry e{tok[0], tok[1], {}, {}};
    std::istringstream dims(tok[2]);
    std::string d;
    while (std::getline(dims, d, 'x')) {
      try {
        e.shape.push_back(std::stoll(d));
      } catch (const std::exception&) {
        throw InputError("weights: tensor '" + e.name + "' has an invalid shape");
      }
      if (e.shape.back() < 1) throw InputError("weights: tensor '" + e.name + "' has an invalid shape");
    }
    total += e.numel();
    b.entries.push_back(std::move(e));
  }
  if (Index(b.entries.size()) != count) throw InputError("weights: manifest count does not match its entries");
  const auto payload = bytes.substr(end + 2);
  if (payload.size() != std::size_t(total) * 4) {
    throw InputError("weights: payload has " + std::to_string(payload.size()) + " bytes, manifest needs " +
                     std::to_string(total * 4));
  }
  const auto values = parse_f32le(payload);
  std::size_t pos = 0;
  for (auto& e : b.entries) {
    e.values.resize(e.numel());
    for (Index i = 0; i < e.numel(); ++i) e.values[i] = double(values[pos++]);
    if (!e.values.allFinite()) throw InputError("weights: tensor '" + e.name + "' has non-finite values");
  }
  return b;
}

void save_weights(const std::filesystem::path& path, const WeightBundle& bundle) {
  write_file_atomic(path, encode_stiw(bundle));
}

WeightBundle load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  try {
    auto b = decode_stiw(read_file(path));
    validate_bundle(b, spec);
    return b;
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

namespace {

ConvWeights conv_from(const WeightBundle& b, const std::string& layer) {
  const auto* w = b.find(layer + ".weight");
  const auto* bias = b.find(layer + ".bias");
  ConvWeights c(w->shape[0], w->shape[1], w->shape[2]);
  c.weight = w->values;
  c.bias = bias->values;
  return c;
}

}  // namespace

ProxNetwork::ProxNetwork(NetworkSpec spec, const WeightBundle& weights) : spec_(std::move(spec)) {
  validate_bundle(weights, spec_);
  auto block = [&](const std::string& prefix) {
    Block b{conv_from(weights, prefix + ".conv"), conv_from(weights, prefix + ".res.conv1"),
            conv_from(weights, prefix + ".res.conv2"), {}, {}, {}, {}};
    if (spec_.group_norm) {
      b.gamma1 = weights.find(prefix + ".res.norm1.gamma")->values;
      b.beta1 = weights.find(prefix + ".res.norm1.beta")->values;
      b.gamma2 = weights.find(prefix + ".res.norm2.gamma")->values;
      b.beta2 = weights.find(prefix + ".res.norm2.beta")->values;
    }
    return b;
  };
  for (int l = 0; l <= spec_.depth; ++l) encoder_.push_back(block("enc" + std::to_string(l)));
  up_.resize(std::size_t(spec_.depth));
  decoder_.resize(std::size_t(spec_.depth));
  for (int l = 0; l < spec_.depth; ++l) {
    up_[std::size_t(l)] = conv_from(weights, "up" + std::to_string(l));
    decoder_[std::size_t(l)] = block("dec" + std::to_string(l));
  }
  head_ = conv_from(weights, "out");
}

ChannelVolume ProxNetwork::run_block(const Block& b, const ChannelVolume& x) const {
  const Index pad = spec_.kernel / 2;
  ChannelVolume h = conv3d(x, b.conv, 1, pad);
  ChannelVolume r = conv3d(h, b.conv1, 1, pad);
  if (spec_.group_norm) r = groupnorm(r, spec_.groups, b.gamma1, b.beta1, spec_.eps);
  r = elu(std::move(r));
  r = conv3d(r, b.conv2, 1, pad);
  if (spec_.group_norm) r = groupnorm(r, spec_.groups, b.gamma2, b.beta2, spec_.eps);
  r = elu(std::move(r));
  h.data += r.data;
  return h;
}

ChannelVolume ProxNetwork::run(const ChannelVolume& input) const {
  if (input.channels() != spec_.in_channels)
    throw InputError("network expects " + std::to_string(spec_.in_channels) + " input channels");
  const Index factor = Index(1) << spec_.depth;
  for (int a = 0; a < 3; ++a) {
    if (input.dims[a] % factor != 0)
      throw InputError("network input dims must be divisible by 2^depth = " + std::to_string(factor));
  }
  std::vector<ChannelVolume> skips;
  ChannelVolume h = input;
  for (int l = 0; l <= spec_.depth; ++l) {
    h = run_block(encoder_[std::size_t(l)], h);
    if (l < spec_.depth) {
      skips.push_back(h);
      h = maxpool3d(h, 2, 2);
    }
  }
  for (int l = spec_.depth - 1; l >= 0; --l) {
    ChannelVolume up = transpose_conv3d(h, up_[std::size_t(l)], 2, 0);
    up.data += skips[std::size_t(l)].data;
    h = run_block(decoder_[std::size_t(l)], up);
  }
  ChannelVolume out = conv3d(h, head_, 1, 0);
  if (spec_.global_residual) out.data += input.data;
  return out;
}

TensorVolume ProxNetwork::infer(const TensorVolume& x, bool allow_padding) const {
  if (spec_.in_channels != 6 || spec_.out_channels != 6)
    throw InputError("proximal network must map 6 channels to 6 channels");
  const Grid& g = x.grid();
  const Index factor = Index(1) << spec_.depth;
  std::array<Index, 3> padded{}, lo{};
  for (int a = 0; a < 3; ++a) {
    padded[a] = (g.dims[a] + factor - 1) / factor * factor;
    lo[a] = (padded[a] - g.dims[a]) / 2;
    if (padded[a] != g.dims[a] && !allow_padding)
      throw InputError("grid " + g.describe() + " is not divisible by 2^depth and padding is disabled");
  }
  ChannelVolume in(padded, 6);
  for (Index k = 0; k < g.dims[2]; ++k)
    for (Index j = 0; j < g.dims[1]; ++j)
      for (Index i = 0; i < g.dims[0]; ++i)
        in.data.row(in.index(i + lo[0], j + lo[1], k + lo[2])) = x.data().row(g.index(i, j, k));
  const ChannelVolume out = run(in);
  TensorVolume result(g);
  for (Index k = 0; k < g.dims[2]; ++k)
    for (Index j = 0; j < g.dims[1]; ++j)
      for (Index i = 0; i < g.dims[0]; ++i)
        result.data().row(g.index(i, j, k)) = out.data.row(out.index(i + lo[0], j + lo[1], k + lo[2]));
  if (!result.all_finite()) throw NumericalError("proximal network produced non-finite output");
  return result;
}

}  // namespace sti::nn
