#include "sti/tracking.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sti/file_util.hpp"
#include "sti/parallel.hpp"
#include "sti/rng.hpp"

namespace sti {

void TrackConfig::validate() const {
  if (!(anisotropy_cutoff >= 0.0)) throw UsageError("anisotropy cutoff must be >= 0");
  if (!(max_length_mm > 0.0)) throw UsageError("max length must be > 0");
  if (!(angle_threshold_deg > 0.0) || angle_threshold_deg > 180.0)
    throw UsageError("angle threshold must lie in (0, 180] degrees");
  if (!(min_step_voxels > 0.0) || min_step_voxels > 1.0) throw UsageError("minimum step must lie in (0, 1] voxels");
  if (seed_count < 1) throw UsageError("seed count must be >= 1");
}

std::string TrackConfig::digest() const {
  std::ostringstream os;
  os.precision(17);
  os << "cutoff=" << anisotropy_cutoff << ";max_length=" << max_length_mm << ";angle=" << angle_threshold_deg
     << ";min_step=" << min_step_voxels << ";seeds=" << seed_count << ";seed=" << seed << ";jitter=" << jitter;
  return fnv1a_hex(os.str());
}

double Streamline::length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
  return len;
}

namespace {

Index voxel_toward(const Grid& g, const Vec3& p, const Vec3& d) {
  std::array<Index, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double bias = d[a] > 0.0 ? 1e-9 : (d[a] < 0.0 ? -1e-9 : 0.0);
    idx[std::size_t(a)] = Index(std::floor(p[a] / g.voxel_size[std::size_t(a)] + 0.5 + bias));
  }
  if (!g.contains(idx[0], idx[1], idx[2])) return -1;
  return g.index(idx[0], idx[1], idx[2]);
}

// Follows one direction from the seed; the returned points start at it.
std::vector<Vec3> follow(const DirectionField& pev, const ScalarVolume& anis, const Mask& mask, const Vec3& seed,
                         Vec3 heading, const TrackConfig& cfg) {
  const Grid& g = pev.grid();
  const double cos_limit = std::cos(cfg.angle_threshold_deg * std::numbers::pi / 180.0);
  const double min_vs = std::min({g.voxel_size[0], g.voxel_size[1], g.voxel_size[2]});
  const double min_step = cfg.min_step_voxels * min_vs;
  std::vector<Vec3> pts{seed};
  Vec3 p = seed;
  double length = 0.0;
  bool first = true;
  while (length < cfg.max_length_mm) {
    const Index v = voxel_toward(g, p, heading);
    if (v < 0 || !mask[v]) break;
    if (!(anis.data()(v, 0) >= cfg.anisotropy_cutoff)) break;
    Vec3 d = pev.data().row(v).transpose();
    const double dn = d.norm();
    if (!(dn > 0.0)) break;
    d /= dn;
    if (d.dot(heading) < 0.0) d = -d;
    if (!first && d.dot(heading) < cos_limit) break;
    first = false;

    const std::array<Index, 3> c = g.coords(v);
    double t = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (d[a] == 0.0) continue;
      const double vs = g.voxel_size[std::size_t(a)];
      const double face = (double(c[std::size_t(a)]) + (d[a] > 0.0 ? 0.5 : -0.5)) * vs;
      t = std::min(t, (face - p[a]) / d[a]);
    }
    if (t < min_step) {
      // The minimum step must not carry the track past the mask boundary.
      const Index land = voxel_toward(g, p + min_step * d, d);
      if (land >= 0 && mask[land]) {
        t = min_step;
      } else if (!(t > 1e-12)) {
        break;
      }
    }
    t = std::min(t, cfg.max_length_mm - length);
    p += t * d;
    length += t;
    pts.push_back(p);
    heading = d;
  }
  return pts;
}

// Cuts a polyline at arc length `keep`.
void trim(std::vector<Vec3>& pts, double keep) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = (pts[i] - pts[i - 1]).norm();
    if (len + seg > keep) {
      const double f = (keep - len) / seg;
      pts[i] = pts[i - 1] + f * (pts[i] - pts[i - 1]);
      pts.resize(i + 1);
      return;
    }
    len += seg;
  }
}

double polyline_length(const std::vector<Vec3>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

}  // namespace

Index voxel_at(const Grid& grid, const Vec3& p) { return voxel_toward(grid, p, Vec3::Zero()); }

Streamline track_from(const DirectionField& pev, const ScalarVolume& anis, const Mask& mask, const Vec3& seed,
                      const TrackConfig& cfg) {
  Streamline s;
  const Index v = voxel_at(pev.grid(), seed);
  Vec3 d = v >= 0 ? Vec3(pev.data().row(v).transpose()) : Vec3::Zero();
  if (!(d.norm() > 0.0)) {
    s.points.push_back(seed);
    return s;
  }
  d.normalize();
  std::vector<Vec3> fwd = follow(pev, anis, mask, seed, d, cfg);
  std::vector<Vec3> bwd = follow(pev, anis, mask, seed, -d, cfg);

  // Split the length budget: a short branch is kept whole, otherwise both
  // branches get half.
  const double half = 0.5 * cfg.max_length_mm;
  const double lf = polyline_length(fwd), lb = polyline_length(bwd);
  if (lf + lb > cfg.max_length_mm) {
    if (std::min(lf, lb) <= half) {
      if (lf < lb) trim(bwd, cfg.max_length_mm - lf);
      else trim(fwd, cfg.max_length_mm - lb);
    } else {
      trim(fwd, half);
      trim(bwd, half);
    }
  }
  s.points.assign(bwd.rbegin(), bwd.rend());
  s.points.insert(s.points.end(), fwd.begin() + 1, fwd.end());
  return s;
}

std::vector<Vec3> sample_seeds(const Mask& mask, const TrackConfig& cfg) {
  const Grid& g = mask.grid();
  std::vector<Index> voxels;
  for (Index v = 0; v < g.size(); ++v)
    if (mask[v]) voxels.push_back(v);
  if (voxels.empty()) throw InputError("tracking mask is empty");
  std::vector<Vec3> seeds(std::size_t(cfg.seed_count));
  for (Index s = 0; s < cfg.seed_count; ++s) {
    CounterRng rng(cfg.seed, std::uint64_t(s));
    const auto pick = std::min(Index(rng.uniform() * double(voxels.size())), Index(voxels.size()) - 1);
    const auto c = g.coords(voxels[std::size_t(pick)]);
    Vec3 p = g.position(c[0], c[1], c[2]);
    if (cfg.jitter) {
      for (int a = 0; a < 3; ++a) p[a] += rng.uniform(-0.5, 0.5) * g.voxel_size[std::size_t(a)];
    }
    seeds[std::size_t(s)] = p;
  }
  return seeds;
}

Tractogram fact_track(const DirectionField& pev, const ScalarVolume& anis, const Mask& mask,
                      const TrackConfig& cfg) {
  cfg.validate();
  require_same_grid(pev.grid(), anis.grid(), "fact_track anisotropy");
  require_same_grid(pev.grid(), mask.grid(), "fact_track mask");
  const auto seeds = sample_seeds(mask, cfg);
  Tractogram t;
  t.config_digest = cfg.digest();
  t.streamlines.resize(seeds.size());
  parallel_for(Index(seeds.size()), [&](Index s) {
    t.streamlines[std::size_t(s)] = track_from(pev, anis, mask, seeds[std::size_t(s)], cfg);
  });
  return t;
}

Tractogram select_through_region(const Tractogram& t, const Mask& region) {
  Tractogram out;
  out.config_digest = t.config_digest;
  for (const auto& s : t.streamlines) {
    for (const auto& p : s.points) {
      const Index v = voxel_at(region.grid(), p);
      if (v >= 0 && region[v]) {
        out.streamlines.push_back(s);
        break;
      }
    }
  }
  return out;
}

namespace {

void append_u32le(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(char((v >> (8 * b)) & 0xFF));
}

std::uint32_t read_u32le(std::string_view s, std::size_t pos) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= std::uint32_t(static_cast<unsigned char>(s[pos + std::size_t(b)])) << (8 * b);
  return v;
}

}  // namespace

std::string encode_tractogram(const Tractogram& t) {
  std::string out = "STITRK1\ncount: " + std::to_string(t.streamlines.size()) + "\nconfig: " +
                    (t.config_digest.empty() ? "-" : t.config_digest) + "\n\n";
  for (const auto& s : t.streamlines) append_u32le(out, std::uint32_t(s.points.size()));
  std::vector<double> xyz;
  for (const auto& s : t.streamlines)
    for (const auto& p : s.points) xyz.insert(xyz.end(), {p[0], p[1], p[2]});
  append_f32le(out, xyz);
  return out;
}

Tractogram decode_tractogram(std::string_view bytes) {
  const auto end = bytes.find("\n\n");
  if (end == std::string_view::npos) throw InputError("tractogram: missing header terminator");
  std::istringstream in{std::string(bytes.substr(0, end))};
  std::string magic, count_line, config_line;
  std::getline(in, magic);
  std::getline(in, count_line);
  std::getline(in, config_line);
  if (trim(magic) != "STITRK1") throw InputError("tractogram: not a STITRK1 file");
  if (count_line.rfind("count:", 0) != 0 || config_line.rfind("config:", 0) != 0)
    throw InputError("tractogram: malformed header");
  std::size_t count = 0;
  try {
    count = std::stoull(trim(count_line.substr(6)));
  } catch (const std::exception&) {
    throw InputError("tractogram: invalid count");
  }
  Tractogram t;
  t.config_digest = trim(config_line.substr(7));
  const auto body = bytes.substr(end + 2);
  if (body.size() < 4 * count) throw InputError("tractogram: truncated point counts");
  std::size_t total = 0;
  std::vector<std::uint32_t> counts(count);
  for (std::size_t i = 0; i < count; ++i) total += counts[i] = read_u32le(body, 4 * i);
  if (body.size() != 4 * count + 12 * total) throw InputError("tractogram: payload length mismatch");
  const auto xyz = parse_f32le(body.substr(4 * count));
  std::size_t pos = 0;
  t.streamlines.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::uint32_t k = 0; k < counts[i]; ++k, pos += 3)
      t.streamlines[i].points.emplace_back(xyz[pos], xyz[pos + 1], xyz[pos + 2]);
  }
  return t;
}

void write_tractogram(const std::filesystem::path& path, const Tractogram& t) {
  write_file_atomic(path, encode_tractogram(t));
}

Tractogram read_tractogram(const std::filesystem::path& path) {
  try {
    return decode_tractogram(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace sti
