#pragma once

// Slice rasters written as binary PGM (gray) or PPM (RGB).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

enum class SliceAxis { X, Y, Z };  // sagittal, coronal, axial

struct SliceSpec {
  SliceAxis axis = SliceAxis::Z;
  Index index = 0;
};

SliceSpec parse_slice(std::string_view text);  // "z:16", "axial:16", ...

struct SliceImage {
  Index width = 0;
  Index height = 0;
  int channels = 1;  // 1 gray, 3 RGB
  std::vector<std::uint8_t> pixels;  // row-major, top row first
  double window_lo = 0.0;
  double window_hi = 1.0;

  std::uint8_t at(Index x, Index y, int c = 0) const {
    return pixels[std::size_t((y * width + x) * channels + c)];
  }
};

// Linear window: lo → 0, hi → 255, clamped.
std::uint8_t window_level(double v, double lo, double hi);

SliceImage render_gray(const ScalarVolume& v, const SliceSpec& slice, double lo, double hi);

// |PEV| components to RGB, optionally scaled by MSA / msa_max (clamped to 1).
SliceImage render_pev(const DirectionField& pev, const SliceSpec& slice, const ScalarVolume* msa = nullptr,
                      double msa_max = 0.0);

std::string encode_netpbm(const SliceImage& img);
void write_netpbm(const std::filesystem::path& path, const SliceImage& img);

}  // namespace sti
