#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ctlab {

using Shape3 = std::array<std::int64_t, 3>;

// 3D scalar field in z-major layout (slice z, row y, col x). Spacing is pure
// metadata; no computation in the library depends on it.
struct Volume3 {
  Shape3 shape{0, 0, 0};  // D, H, W
  std::array<double, 3> spacing_mm{1.5, 0.731, 0.731};
  std::vector<float> data;

  Volume3() = default;
  Volume3(std::int64_t d, std::int64_t h, std::int64_t w, float fill = 0.0f)
      : shape{d, h, w}, data(static_cast<std::size_t>(d * h * w), fill) {}

  std::int64_t size() const { return shape[0] * shape[1] * shape[2]; }

  float& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((z * shape[1] + y) * shape[2] + x)];
  }
  float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((z * shape[1] + y) * shape[2] + x)];
  }
};

// Parallel-beam acquisition description. Angles live in [0, pi), evenly
// spaced with the endpoint excluded; detector offsets are symmetric about the
// rotation center in units of `detector_spacing` voxels.
struct ProjectionGeometry {
  int num_angles = 0;
  int num_detectors = 0;
  std::vector<double> angles;
  double detector_spacing = 1.0;
};

ProjectionGeometry make_parallel_geometry(int num_angles, int num_detectors,
                                          double detector_spacing = 1.0);

// Per-slice 2D sinograms, laid out (slice, angle, detector).
struct SinogramStack {
  std::int64_t num_slices = 0;
  ProjectionGeometry geometry;
  std::vector<float> data;

  SinogramStack() = default;
  SinogramStack(std::int64_t slices, ProjectionGeometry g)
      : num_slices(slices),
        geometry(std::move(g)),
        data(static_cast<std::size_t>(slices * geometry.num_angles *
                                      geometry.num_detectors),
             0.0f) {}

  std::int64_t size() const {
    return num_slices * geometry.num_angles * geometry.num_detectors;
  }
  float& at(std::int64_t s, std::int64_t a, std::int64_t t) {
    return data[static_cast<std::size_t>(
        (s * geometry.num_angles + a) * geometry.num_detectors + t)];
  }
  float at(std::int64_t s, std::int64_t a, std::int64_t t) const {
    return data[static_cast<std::size_t>(
        (s * geometry.num_angles + a) * geometry.num_detectors + t)];
  }
};

// Container format: `<stem>.json` sidecar + `<stem>.raw` payload, f32
// little-endian, z-major. `path` may be the stem or either file name.
// Round-trips are bit-exact; non-finite values are rejected on both ends.
void save_volume(const Volume3& v, const std::string& path);
Volume3 load_volume(const std::string& path);

// Sinogram stacks persist through the same container with axis order
// (slice, angle, detector) and a `geometry` sidecar entry.
void save_sinogram(const SinogramStack& s, const std::string& path);
SinogramStack load_sinogram(const std::string& path);

// Start offsets of a centered crop. Odd remainders leave the extra voxel on
// the high-index side: offset = floor((shape - target) / 2).
Shape3 crop_center_offsets(const Shape3& shape, const Shape3& target);

Volume3 crop_center(const Volume3& v, const Shape3& target);

// Non-overlapping tiling into patches, offsets in z-major order. Every shape
// component must be divisible by the matching patch component.
std::vector<std::pair<Shape3, Volume3>> patch_volume(const Volume3& v,
                                                     const Shape3& patch);

}  // namespace ctlab
