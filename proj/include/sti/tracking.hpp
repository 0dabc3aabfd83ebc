#pragma once

// FACT streamline tractography on principal-eigenvector fields.

#include <filesystem>
#include <string>
#include <vector>

#include "sti/volume.hpp"

namespace sti {

struct TrackConfig {
  double anisotropy_cutoff = 0.01;  // ppm of MSA
  double max_length_mm = 250.0;
  double angle_threshold_deg = 45.0;
  double min_step_voxels = 0.1;
  Index seed_count = 10000;
  std::uint64_t seed = 0;
  bool jitter = true;

  void validate() const;
  std::string digest() const;
};

struct Streamline {
  std::vector<Vec3> points;  // mm

  double length() const;
};

struct Tractogram {
  std::vector<Streamline> streamlines;
  std::string config_digest;
};

// Voxel containing a mm position, or -1 outside the grid. Voxel centres sit
// at index · voxel_size.
Index voxel_at(const Grid& grid, const Vec3& p);

// Tracks both directions from `seed_mm` and joins them with the seed in the
// interior; a seed that terminates immediately yields a one-point streamline.
Streamline track_from(const DirectionField& pev, const ScalarVolume& anisotropy, const Mask& mask,
                      const Vec3& seed_mm, const TrackConfig& cfg);

// Uniform seeding within the mask: seed s picks a random mask voxel and a
// jittered position inside it, both from CounterRng(cfg.seed, s).
std::vector<Vec3> sample_seeds(const Mask& mask, const TrackConfig& cfg);

Tractogram fact_track(const DirectionField& pev, const ScalarVolume& anisotropy, const Mask& mask,
                      const TrackConfig& cfg);

Tractogram select_through_region(const Tractogram& t, const Mask& region);

// Text header then per-streamline counts and float32 xyz:
//
//   STITRK1
//   count: <N>
//   config: <digest>
//   <blank line>
//   N x uint32le point count, then all points as f32le x y z
std::string encode_tractogram(const Tractogram& t);
Tractogram decode_tractogram(std::string_view bytes);
void write_tractogram(const std::filesystem::path& path, const Tractogram& t);
Tractogram read_tractogram(const std::filesystem::path& path);

}  // namespace sti
