#pragma once

#include <cstdint>

#include "ctlab/grid.hpp"
#include "ctlab/rng.hpp"
#include "ctlab/volume.hpp"

namespace ctlab {

// Additive white Gaussian noise target. `none` makes add_awgn the identity.
struct NoiseSpec {
  double snr_db = 35.0;
  std::uint64_t seed = 0;
  bool none = false;
  // When set, noise power is referenced to each slice's own mean-square
  // signal instead of the whole stack's.
  bool per_slice_power = false;
};

// Parallel-beam Radon transform of one square slice. Each sinogram entry is
// the line integral along the ray at angles[a] with signed detector offset
// s = (t - (nd-1)/2) * detector_spacing from the image center, sampled at
// unit-voxel steps with bilinear interpolation; samples outside the grid
// contribute zero.
Grid2D radon_slice(const Grid2D& img, const ProjectionGeometry& g);

// Exact adjoint of radon_slice's discretization: every gathered sample is
// scattered back with the same bilinear weights.
Grid2D backproject_slice(const Grid2D& sino, const ProjectionGeometry& g,
                         std::int64_t out_size);

// radon_slice applied independently per slice (2D projection per slice, no
// cross-slice coupling).
SinogramStack radon_volume(const Volume3& v, const ProjectionGeometry& g,
                           int threads = 1);

// output = s + eps, eps ~ N(0, sigma^2) i.i.d. with
// sigma^2 = P_signal / 10^(snr_db/10), P_signal the mean square of the stack.
// Each slice draws from child(seed, slice), so the result is independent of
// how work is scheduled. An all-zero stack has undefined SNR and throws.
SinogramStack add_awgn(const SinogramStack& s, const NoiseSpec& n);

}  // namespace ctlab
