#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "ctlab/rng.hpp"
#include "ctlab/volume.hpp"

namespace ctlab {

// One random ellipsoid in normalized [-1,1]^3 coordinates.
struct Ellipsoid {
  std::array<double, 3> center{0, 0, 0};     // (cz, cy, cx)
  std::array<double, 3> semi_axes{1, 1, 1};  // strictly positive
  std::array<double, 3> euler{0, 0, 0};      // radians
  double intensity = 0.0;                    // may be negative
};

struct PhantomConfig {
  Shape3 shape{128, 128, 128};
  double count_mean = 114.0;
  int count_cap = 200;
  std::array<double, 2> intensity_range{-0.4, 1.0};
  std::array<double, 2> axis_range{0.03, 0.35};  // fraction of half-extent
  double center_range = 0.8;                     // centers in [-r, r]^3
  std::uint64_t seed = 0;
};

// Number of ellipsoids for one volume: min(Poisson(count_mean), count_cap).
int sample_count(const PhantomConfig& cfg, Rng& rng);

// Draw order per ellipsoid is fixed: center (z,y,x), semi-axes (z,y,x),
// Euler angles, intensity.
Ellipsoid sample_ellipsoid(const PhantomConfig& cfg, Rng& rng);

// World -> ellipsoid frame rotation, R = Rx(e2) * Ry(e1) * Rz(e0) acting on
// (x, y, z) vectors.
std::array<std::array<double, 3>, 3> rotation_matrix(
    const std::array<double, 3>& euler);

// Voxel (z,y,x) takes `intensity` when its center, mapped by (i+0.5)/N*2-1
// per axis, satisfies the rotated quadratic form <= 1.
Volume3 rasterize(const Ellipsoid& e, const Shape3& shape);

// Additive rasterization into an existing volume (restricted to the
// ellipsoid's bounding box).
void rasterize_into(const Ellipsoid& e, Volume3& vol);

// Sum of k random ellipsoids, negatives clamped to zero, divided by the
// volume maximum (skipped when max == 0), then masked by the inscribed
// cylinder along z.
Volume3 generate_phantom(const PhantomConfig& cfg, Rng& rng);

void apply_cylinder_mask(Volume3& v);

struct DatasetSplit {
  int n_train = 192;
  int n_val = 8;
  int n_test = 20;
};

// Writes volumes as train/vol_###, val/vol_###, test/vol_### under `root`
// plus manifest.json mapping each stem to {split, seed, ellipsoid_count}.
// Volume i always derives its stream as child(i), so regeneration from the
// manifest seed is bit-identical regardless of thread count.
void generate_dataset(const PhantomConfig& cfg, const std::string& root,
                      const DatasetSplit& split, int threads = 1);

}  // namespace ctlab
