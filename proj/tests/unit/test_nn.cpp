#include <doctest.h>

#include <cmath>

#include "sti/file_util.hpp"
#include "sti/nn.hpp"
#include "sti/parallel.hpp"
#include "sti/solvers.hpp"
#include "nn_reference.hpp"
#include "support.hpp"

using namespace sti;
using namespace sti::nn;
using namespace sti::nn::reference;

TEST_CASE("elu") {
  CHECK(elu(0.0) == 0.0);
  CHECK(elu(1.0) == 1.0);
  CHECK(elu(-1.0) == doctest::Approx(-0.63212).epsilon(1e-5));
  CHECK(elu(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
}

TEST_CASE("conv3d") {
  const ChannelVolume x = random_map({6, 6, 6}, 1, 1);
  ConvWeights one(1, 1, 1);
  one.weight[0] = 1.0;
  CHECK(conv3d(x, one, 1, 0).data == x.data);

  ConvWeights zero(2, 1, 3);
  zero.bias = Eigen::Vector2d(0.5, -1.0);
  const ChannelVolume z = conv3d(x, zero, 1, 1);
  CHECK((z.data.col(0).array() == 0.5).all());
  CHECK((z.data.col(1).array() == -1.0).all());

  const ChannelVolume in = random_map({6, 5, 7}, 3, 2);
  for (Index stride : {1, 2})
    for (Index pad : {0, 1}) {
      const ConvWeights w = random_conv(4, 3, 3, 3 + stride + pad, true);
      const ChannelVolume out = conv3d(in, w, stride, pad);
      CHECK(out.dims[0] == conv_output_size(6, 3, stride, pad));
      CHECK(max_gap(ref_conv(to_ref(in), flat(w), flat_bias(w), 4, 3, stride, pad), out) < 1e-10);
    }
  CHECK_THROWS_AS(conv3d(in, random_conv(4, 2, 3, 1, false), 1, 1), InputError);
}

TEST_CASE("transpose conv3d is the adjoint of conv3d") {
  for (Index stride : {1, 2}) {
    const ConvWeights w = random_conv(5, 3, stride == 2 ? 2 : 3, 10 + stride, false);
    const Index pad = stride == 2 ? 0 : 1;
    const ChannelVolume x = random_map({8, 6, 4}, 3, 20);
    const ChannelVolume ax = conv3d(x, w, stride, pad);
    const ChannelVolume y = random_map(ax.dims, 5, 21);
    const ChannelVolume aty = transpose_conv3d(y, w, stride, pad);
    REQUIRE(aty.dims == x.dims);
    const double lhs = (ax.data.array() * y.data.array()).sum();
    const double rhs = (x.data.array() * aty.data.array()).sum();
    CHECK(std::abs(lhs - rhs) / (ax.data.norm() * y.data.norm()) < 1e-12);
  }
  ConvWeights w = random_conv(4, 2, 2, 7, false);
  w.bias = Eigen::VectorXd::LinSpaced(2, 0.1, 0.2);
  const ChannelVolume y = random_map({3, 2, 4}, 4, 8);
  CHECK(max_gap(ref_upsample(to_ref(y), flat(w), flat_bias(w), 2), transpose_conv3d(y, w, 2, 0)) < 1e-12);
}

TEST_CASE("maxpool3d") {
  const ChannelVolume x = random_map({6, 4, 8}, 2, 4);
  const ChannelVolume p = maxpool3d(x, 2, 2);
  CHECK(p.dims == std::array<Index, 3>{3, 2, 4});
  CHECK(max_gap(ref_pool(to_ref(x)), p) == 0.0);
}

TEST_CASE("groupnorm") {
  ChannelVolume c({4, 4, 4}, 4);
  c.data.setConstant(3.0);
  CHECK(groupnorm(c, 2, Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(4), 1e-5).data.cwiseAbs().maxCoeff() == 0.0);

  const ChannelVolume x = random_map({5, 4, 3}, 6, 9);
  const ChannelVolume n = groupnorm(x, 2, Eigen::VectorXd::Ones(6), Eigen::VectorXd::Constant(6, 5.0), 1e-5);
  CHECK(std::abs(n.data.leftCols(3).mean() - 5.0) < 1e-6);
  CHECK(std::abs(n.data.rightCols(3).mean() - 5.0) < 1e-6);

  std::vector<double> gamma{0.5, 1.0, 2.0, -1.0, 0.1, 3.0}, beta{0.0, 1.0, -1.0, 0.2, 0.0, 0.4};
  const ChannelVolume g = groupnorm(x, 2, Eigen::Map<Eigen::VectorXd>(gamma.data(), 6),
                                    Eigen::Map<Eigen::VectorXd>(beta.data(), 6), 1e-5);
  CHECK(max_gap(ref_groupnorm(to_ref(x), 2, gamma, beta, 1e-5), g) < 1e-8);
  CHECK_THROWS_AS(groupnorm(x, 4, Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(6), 1e-5), InputError);
}

TEST_CASE("topology parsing") {
  const NetworkSpec s = parse_topology(
      "depth = 1\nin_channels = 6\nout_channels = 6\nwidths = 4 8\nkernel = 1\nnorm = none\nglobal_residual = true\n");
  CHECK(s.depth == 1);
  CHECK(s.widths == std::vector<int>{4, 8});
  CHECK_FALSE(s.group_norm);
  CHECK(s.global_residual);
  CHECK(parse_topology(format_topology(s)).widths == s.widths);
  CHECK_THROWS_AS(parse_topology("depth = 2\nwidths = 8 16\n"), InputError);
  CHECK_THROWS_AS(parse_topology("depth = 1\nwidths = 6 8\ngroups = 4\n"), InputError);
  CHECK_THROWS_AS(parse_topology("depth = 1\nwidths = 8 8\nkernel = 2\n"), InputError);
  try {
    parse_topology("depth = 1\nwidths = 8 8\nnorm = batch\n");
    FAIL("expected error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  const NetworkSpec d = read_topology(STI_DATA_DIR "/topology_depth2.txt");
  CHECK(d.depth == 2);
  CHECK(d.in_channels == 6);
}

TEST_CASE("depth-2 network matches the reference evaluator") {
  for (bool residual : {false, true}) {
    NetworkSpec s;
    s.widths = {4, 8, 8};
    s.groups = 2;
    s.global_residual = residual;
    const WeightBundle w = random_weights(s, 42);
    const ProxNetwork net(s, w);
    const ChannelVolume x = random_map({8, 8, 8}, 6, 43);
    const ChannelVolume y = net.run(x);
    const Ref ref = ref_network(to_ref(x), w, s);
    double scale = 0.0;
    for (double v : ref.v) scale = std::max(scale, std::abs(v));
    CHECK(max_gap(ref, y) < 1e-8 * std::max(1.0, scale));
  }
}

TEST_CASE("hand-built depth-1 network is the identity") {
  NetworkSpec s;
  s.depth = 1;
  s.widths = {6, 6};
  s.kernel = 1;
  s.group_norm = false;
  WeightBundle w{expected_layout(s)};
  for (auto& e : w.entries) {
    e.values = Eigen::VectorXd::Zero(e.numel());
    const bool pass = e.name == "enc0.conv.weight" || e.name == "dec0.conv.weight" || e.name == "out.weight";
    if (pass)
      for (Index c = 0; c < 6; ++c) e.values[c * 6 + c] = 1.0;
  }
  const ProxNetwork net(s, w);
  const auto x = test::random_volume<6>(test::cube(6), 5, 0.02);
  CHECK((net.infer(x).data() - x.data()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(net.infer(test::random_volume<6>(Grid({5, 4, 4}), 1), false), InputError);
  CHECK(net.infer(test::random_volume<6>(Grid({5, 4, 3}), 1)).grid() == Grid({5, 4, 3}));

  CnnProx prox{std::make_shared<const ProxNetwork>(net)};
  CHECK((apply_proximal(prox, x).data() - x.data()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("inference is deterministic across runs and thread counts") {
  NetworkSpec s;
  const ProxNetwork net(s, random_weights(s, 7));
  const auto x = test::random_volume<6>(test::cube(8), 3, 0.05);
  set_thread_count(1);
  const TensorVolume a = net.infer(x);
  set_thread_count(4);
  const TensorVolume b = net.infer(x);
  const TensorVolume c = net.infer(x);
  set_thread_count(1);
  CHECK(a.data() == b.data());
  CHECK(b.data() == c.data());
  CHECK(a.data().allFinite());
}

TEST_CASE("shifting by one stride period shifts the output") {
  // Pointwise convolutions and no normalization keep the receptive field
  // inside one pooling period.
  NetworkSpec s;
  s.kernel = 1;
  s.group_norm = false;
  const ProxNetwork net(s, random_weights(s, 11));
  const ChannelVolume x = random_map({16, 8, 8}, 6, 12);
  ChannelVolume shifted({16, 8, 8}, 6);
  for (Index z = 0; z < 8; ++z)
    for (Index y = 0; y < 8; ++y)
      for (Index i = 4; i < 16; ++i) shifted.data.row(x.index(i, y, z)) = x.data.row(x.index(i - 4, y, z));
  const ChannelVolume a = net.run(x), b = net.run(shifted);
  double gap = 0.0;
  for (Index z = 0; z < 8; ++z)
    for (Index y = 0; y < 8; ++y)
      for (Index i = 4; i < 16; ++i)
        gap = std::max(gap, (b.data.row(x.index(i, y, z)) - a.data.row(x.index(i - 4, y, z))).cwiseAbs().maxCoeff());
  CHECK(gap < 1e-12);
}

TEST_CASE("STIW weights") {
  NetworkSpec s;
  const WeightBundle w = random_weights(s, 1);
  CHECK_NOTHROW(validate_bundle(w, s));
  const auto dir = test::scratch_dir("stiw");
  save_weights(dir / "w.stiw", w);
  const WeightBundle back = load_weights(dir / "w.stiw", s);
  REQUIRE(back.entries.size() == w.entries.size());
  for (std::size_t i = 0; i < w.entries.size(); ++i) {
    CHECK(back.entries[i].name == w.entries[i].name);
    CHECK(back.entries[i].values == w.entries[i].values.cast<float>().cast<double>());
  }
  // float32 values survive a second round trip bit for bit.
  CHECK(encode_stiw(back) == encode_stiw(decode_stiw(encode_stiw(back))));

  const std::string bytes = encode_stiw(w);
  CHECK(bytes.rfind("STIW1\ncount: ", 0) == 0);
  CHECK(bytes.find("enc0.conv.weight conv3d 8x6x3x3x3\n") != std::string::npos);
  CHECK(bytes.find("up0.weight transpose_conv3d 16x8x2x2x2\n") != std::string::npos);

  WeightBundle wrong = w;
  for (auto& e : wrong.entries)
    if (e.name == "dec1.res.conv2.weight") e.shape[1] = 8, e.values.conservativeResize(e.numel());
  try {
    validate_bundle(wrong, s);
    FAIL("expected error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("dec1.res.conv2.weight") != std::string::npos);
  }
  save_weights(dir / "wrong.stiw", wrong);
  CHECK_THROWS_WITH_AS(load_weights(dir / "wrong.stiw", s), doctest::Contains("dec1.res.conv2.weight"), InputError);

  WeightBundle partial = w;
  partial.entries.pop_back();
  CHECK_THROWS_AS(validate_bundle(partial, s), InputError);
  WeightBundle extra = w;
  extra.entries.push_back({"bogus.weight", "conv3d", {1, 1, 1, 1, 1}, Eigen::VectorXd::Zero(1)});
  CHECK_THROWS_AS(validate_bundle(extra, s), InputError);

  write_file_atomic(dir / "empty.stiw", "");
  CHECK_THROWS_AS(load_weights(dir / "empty.stiw", s), InputError);
  CHECK_THROWS_AS(decode_stiw(bytes.substr(0, bytes.size() - 3)), InputError);
  CHECK_THROWS_AS(decode_stiw(bytes + "x"), InputError);
  CHECK_THROWS_AS(load_weights(dir / "absent.stiw", s), InputError);
}
