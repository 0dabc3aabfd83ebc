#include "sti/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sti/file_util.hpp"

namespace sti {

Mat3 compose_tensor(const Vec3& eigenvalues, const Vec3& v1_in, CounterRng& rng) {
  const double norm = v1_in.norm();
  if (!(norm > 1e-12)) throw InputError("compose_tensor: principal direction is the zero vector");
  const Vec3 v1 = v1_in / norm;

  Vec3 v2;
  for (;;) {
    Vec3 r(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const double rn = r.norm();
    if (rn < 1e-3 || rn > 1.0) continue;
    r /= rn;
    if (std::abs(r.dot(v1)) > 0.99) continue;
    v2 = (r - r.dot(v1) * v1).normalized();
    break;
  }
  Mat3 V;
  V.col(0) = v1;
  V.col(1) = v2;
  V.col(2) = v1.cross(v2);
  Mat3 chi = V * eigenvalues.asDiagonal() * V.transpose();
  // Symmetrize away rounding so χ = χᵀ holds bitwise.
  return 0.5 * (chi + chi.transpose());
}

TensorVolume build_phantom(const ScalarVolume& q, const DirectionField& dir, const ScalarVolume& fa,
                           const PhantomParams& params) {
  require_same_grid(q.grid(), dir.grid(), "build_phantom direction field");
  require_same_grid(q.grid(), fa.grid(), "build_phantom anisotropy field");
  if (!(params.gamma > 0.0)) throw UsageError("gamma must be > 0");
  if (params.epsilon < 0.0) throw UsageError("epsilon must be >= 0");

  TensorVolume out(q.grid());
  for (Index v = 0; v < q.size(); ++v) {
    const double qv = q.data()(v, 0);
    const double ad = fa.data()(v, 0);
    if (ad < 0.0 || ad > 1.0) throw InputError("anisotropy a_D must lie in [0, 1]");
    const Vec3 d = dir.data().row(v).transpose();
    if (d.squaredNorm() == 0.0) {
      set_tensor_at(out, v, qv * Mat3::Identity());
      continue;
    }
    CounterRng rng(params.seed, std::uint64_t(v));
    const double delta = rng.uniform() * params.epsilon;
    const Vec3 lambda = solve_eigenvalues(qv, params.gamma * ad, delta);
    set_tensor_at(out, v, compose_tensor(lambda, d, rng));
  }
  return out;
}

namespace {

struct Shape {
  // Signed-free containment test with an outward margin in mm.
  static bool inside(const Sphere& s, const Vec3& p, double margin) {
    return (p - s.center).norm() <= s.radius + margin;
  }
  static bool inside(const Cylinder& c, const Vec3& p, double margin) {
    const Vec3 axis = c.axis.normalized();
    const Vec3 d = p - c.center;
    const double along = d.dot(axis);
    return (d - along * axis).norm() <= c.radius + margin && std::abs(along) <= c.half_length + margin;
  }
};

}  // namespace

GroundTruthFields synth_geometry(const Grid& grid, const std::vector<Primitive>& primitives,
                                 double mask_margin) {
  if (primitives.empty()) throw InputError("geometry needs at least one primitive");
  GroundTruthFields f{ScalarVolume(grid), DirectionField(grid), ScalarVolume(grid), Mask(grid, false)};
  bool any_shape = false;

  for (const auto& prim : primitives) {
    if (const auto* b = std::get_if<Background>(&prim)) {
      f.q.data().setConstant(b->q);
      f.fa.data().setZero();
      f.dir.data().setZero();
      continue;
    }
    any_shape = true;
    for (Index k = 0; k < grid.dims[2]; ++k)
      for (Index j = 0; j < grid.dims[1]; ++j)
        for (Index i = 0; i < grid.dims[0]; ++i) {
          const Vec3 p = grid.position(i, j, k);
          const Index v = grid.index(i, j, k);
          std::visit(
              [&](const auto& shape) {
                using T = std::decay_t<decltype(shape)>;
                if constexpr (!std::is_same_v<T, Background>) {
                  if (Shape::inside(shape, p, mask_margin)) f.mask.set(v, true);
                  if (!Shape::inside(shape, p, 0.0)) return;
                  f.q.data()(v, 0) = shape.q;
                  f.fa.data()(v, 0) = shape.fa;
                  Vec3 d = Vec3::Zero();
                  if constexpr (std::is_same_v<T, Cylinder>) {
                    d = shape.axis.normalized();
                  } else if (shape.direction.squaredNorm() > 0.0) {
                    d = shape.direction.normalized();
                  }
                  if (shape.fa == 0.0) d.setZero();
                  f.dir.data().row(v) = d.transpose();
                }
              },
              prim);
        }
  }
  if (!any_shape) f.mask = Mask(grid, true);
  return f;
}

GeometrySpec parse_geometry(std::string_view text) {
  const Config cfg = parse_config(text);
  GeometrySpec spec;
  const ConfigSection* grid = cfg.first("grid");
  if (!grid) throw InputError("geometry config needs a [grid] section");
  for (const auto& s : cfg.sections) {
    const auto fail = [&](const std::string& msg) {
      throw InputError("config line " + std::to_string(s.line()) + ": " + msg);
    };
    const auto fa_of = [&](const ConfigSection& sec) {
      const double fa = sec.get_double("fa", 0.0);
      if (fa < 0.0 || fa > 1.0) fail("fa must lie in [0, 1]");
      return fa;
    };
    if (s.name() == "grid") {
      s.require_known({"dims", "voxel_size"});
      const Vec3 d = s.get_vec3("dims");
      const Vec3 vs = s.get_vec3_opt("voxel_size").value_or(Vec3::Ones());
      for (int a = 0; a < 3; ++a)
        if (d[a] < 1 || d[a] != std::floor(d[a])) fail("dims must be positive integers");
      spec.grid = Grid({Index(d[0]), Index(d[1]), Index(d[2])}, {vs[0], vs[1], vs[2]});
    } else if (s.name() == "phantom") {
      s.require_known({"gamma", "epsilon", "seed", "mask_margin"});
      spec.params.gamma = s.get_double("gamma", kDefaultGamma);
      spec.params.epsilon = s.get_double("epsilon", kDefaultEpsilon);
      spec.params.seed = std::uint64_t(s.get_int("seed", 0));
      spec.mask_margin = s.get_double("mask_margin", 2.0);
    } else if (s.name() == "background") {
      s.require_known({"q"});
      spec.primitives.emplace_back(Background{s.get_double("q")});
    } else if (s.name() == "sphere") {
      s.require_known({"center", "radius", "q", "fa", "direction"});
      Sphere sp{s.get_vec3("center"), s.get_double("radius"), s.get_double("q", 0.0), fa_of(s),
                s.get_vec3_opt("direction").value_or(Vec3::Zero())};
      if (!(sp.radius > 0.0)) fail("sphere radius must be > 0");
      spec.primitives.emplace_back(sp);
    } else if (s.name() == "cylinder") {
      s.require_known({"axis", "center", "radius", "q", "fa", "half_length"});
      Cylinder c{s.get_vec3("axis"), s.get_vec3("center"), s.get_double("radius"), s.get_double("q", 0.0),
                 fa_of(s), s.get_double("half_length", std::numeric_limits<double>::infinity())};
      if (!(c.axis.norm() > 0.0)) fail("cylinder axis must be nonzero");
      if (!(c.radius > 0.0)) fail("cylinder radius must be > 0");
      spec.primitives.emplace_back(c);
    } else {
      fail("unknown section [" + s.name() + "]");
    }
  }
  if (spec.primitives.empty()) throw InputError("geometry config lists no primitives");
  return spec;
}

GeometrySpec read_geometry(const std::filesystem::path& path) {
  try {
    return parse_geometry(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

NoiseResult add_noise(const FieldSet& y, double ratio, std::uint64_t seed, const Mask* mask) {
  if (!(ratio > 0.0)) throw UsageError("SNR amplitude ratio must be > 0");
  if (mask) require_same_grid(mask->grid(), y.grid, "add_noise mask");
  NoiseResult out{y, {}};
  const Index n = y.grid.size();
  const double count = mask ? double(mask->count()) : double(n);
  for (Index c = 0; c < y.count(); ++c) {
    double sum_sq = 0.0;
    for (Index v = 0; v < n; ++v) {
      if (mask && !(*mask)[v]) continue;
      sum_sq += y.data(v, c) * y.data(v, c);
    }
    const double rms = count > 0 ? std::sqrt(sum_sq / count) : 0.0;
    if (rms == 0.0) {
      out.zero_signal.push_back(c);
      continue;
    }
    const double sigma = rms / ratio;
    CounterRng rng(seed, std::uint64_t(c));
    std::normal_distribution<double> normal(0.0, sigma);
    for (Index v = 0; v < n; ++v) out.fields.data(v, c) += normal(rng);
  }
  return out;
}

TensorVolume make_isotropic_ablation(const TensorVolume& x, const std::vector<Box>& regions) {
  const Grid& g = x.grid();
  TensorVolume out = x;
  auto isotropize = [&](Index v) {
    const double mean = (x.data()(v, 0) + x.data()(v, 3) + x.data()(v, 5)) / 3.0;
    out.data().row(v) << mean, 0.0, 0.0, mean, 0.0, mean;
  };
  if (regions.empty()) {
    for (Index v = 0; v < g.size(); ++v) isotropize(v);
    return out;
  }
  for (const auto& b : regions) {
    for (int a = 0; a < 3; ++a) {
      if (b.lo[a] < 0 || b.size[a] < 1 || b.lo[a] + b.size[a] > g.dims[a])
        throw InputError("ablation box exceeds the grid along axis " + std::to_string(a));
    }
    for (Index k = b.lo[2]; k < b.lo[2] + b.size[2]; ++k)
      for (Index j = b.lo[1]; j < b.lo[1] + b.size[1]; ++j)
        for (Index i = b.lo[0]; i < b.lo[0] + b.size[0]; ++i) isotropize(g.index(i, j, k));
  }
  return out;
}

std::vector<Orientation> sample_orientations(int count, double cone_half_angle_deg, std::uint64_t seed,
                                             ConeSampling mode) {
  if (count < 1) throw UsageError("orientation count must be >= 1");
  if (!(cone_half_angle_deg > 0.0) || cone_half_angle_deg > 90.0)
    throw UsageError("cone half angle must lie in (0, 90] degrees");
  const double alpha = cone_half_angle_deg * std::numbers::pi / 180.0;
  const double cos_alpha = std::cos(alpha);
  std::vector<Orientation> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    CounterRng rng(seed, std::uint64_t(i));
    double theta;
    if (mode == ConeSampling::AreaUniform) {
      // acos is ill-conditioned near 1; work with 1 − cos θ instead.
      const double one_minus_cos = rng.uniform() * (1.0 - cos_alpha);
      theta = 2.0 * std::asin(std::sqrt(0.5 * one_minus_cos));
    } else {
      theta = rng.uniform() * alpha;
    }
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    out.push_back(Orientation::from_vector(
        Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta))));
  }
  return out;
}

}  // namespace sti
