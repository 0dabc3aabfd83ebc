#include "sti/render.hpp"

#include <cmath>

#include "sti/file_util.hpp"

namespace sti {

SliceSpec parse_slice(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw UsageError("slice must look like axis:index, e.g. z:16");
  const std::string axis = trim(text.substr(0, colon));
  SliceSpec s;
  if (axis == "x" || axis == "sagittal") s.axis = SliceAxis::X;
  else if (axis == "y" || axis == "coronal") s.axis = SliceAxis::Y;
  else if (axis == "z" || axis == "axial") s.axis = SliceAxis::Z;
  else throw UsageError("unknown slice axis '" + axis + "'");
  try {
    std::size_t used = 0;
    const std::string idx = trim(text.substr(colon + 1));
    s.index = std::stoll(idx, &used);
    if (used != idx.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw UsageError("slice index must be an integer");
  }
  return s;
}

std::uint8_t window_level(double v, double lo, double hi) {
  if (!(hi > lo)) throw UsageError("window upper bound must exceed the lower bound");
  const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return std::uint8_t(std::lround(255.0 * t));
}

namespace {

// Slice pixel (x, y) → voxel; image rows run top-down so the second
// in-plane axis is flipped.
struct SliceMap {
  const Grid& g;
  SliceSpec s;
  Index width = 0, height = 0;

  SliceMap(const Grid& grid, const SliceSpec& spec) : g(grid), s(spec) {
    const int a = int(spec.axis);
    if (spec.index < 0 || spec.index >= g.dims[std::size_t(a)])
      throw InputError("slice " + std::to_string(spec.index) + " is outside 0.." +
                       std::to_string(g.dims[std::size_t(a)] - 1));
    const int u = a == 0 ? 1 : 0, v = a == 2 ? 1 : 2;
    width = g.dims[std::size_t(u)];
    height = g.dims[std::size_t(v)];
  }

  Index voxel(Index x, Index y) const {
    const Index r = height - 1 - y;
    switch (s.axis) {
      case SliceAxis::X: return g.index(s.index, x, r);
      case SliceAxis::Y: return g.index(x, s.index, r);
      default: return g.index(x, r, s.index);
    }
  }
};

}  // namespace

SliceImage render_gray(const ScalarVolume& vol, const SliceSpec& slice, double lo, double hi) {
  const SliceMap map(vol.grid(), slice);
  SliceImage img{map.width, map.height, 1, std::vector<std::uint8_t>(std::size_t(map.width * map.height)), lo, hi};
  for (Index y = 0; y < map.height; ++y)
    for (Index x = 0; x < map.width; ++x)
      img.pixels[std::size_t(y * map.width + x)] = window_level(vol.data()(map.voxel(x, y), 0), lo, hi);
  return img;
}

SliceImage render_pev(const DirectionField& pev, const SliceSpec& slice, const ScalarVolume* msa, double msa_max) {
  const SliceMap map(pev.grid(), slice);
  if (msa) {
    require_same_grid(pev.grid(), msa->grid(), "render msa");
    if (!(msa_max > 0.0)) msa_max = msa->data().maxCoeff();
  }
  SliceImage img{map.width, map.height, 3, std::vector<std::uint8_t>(std::size_t(3 * map.width * map.height)), 0.0,
                 msa ? msa_max : 1.0};
  for (Index y = 0; y < map.height; ++y)
    for (Index x = 0; x < map.width; ++x) {
      const Index v = map.voxel(x, y);
      double scale = 1.0;
      if (msa) scale = msa_max > 0.0 ? std::clamp(msa->data()(v, 0) / msa_max, 0.0, 1.0) : 0.0;
      for (int c = 0; c < 3; ++c)
        img.pixels[std::size_t(3 * (y * map.width + x) + c)] =
            window_level(scale * std::abs(pev.data()(v, c)), 0.0, 1.0);
    }
  return img;
}

std::string encode_netpbm(const SliceImage& img) {
  std::string out = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

void write_netpbm(const std::filesystem::path& path, const SliceImage& img) {
  write_file_atomic(path, encode_netpbm(img));
}

}  // namespace sti
