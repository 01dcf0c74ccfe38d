#pragma once

#include <cstdint>
#include <vector>

#include "ctlab/volume.hpp"

namespace ctlab {

// Dense 2D double buffer for slice-level numerics (projection, filtering,
// metrics). Volumes store f32; per-slice math runs in f64.
struct Grid2D {
  std::int64_t h = 0, w = 0;
  std::vector<double> v;

  Grid2D() = default;
  Grid2D(std::int64_t h_, std::int64_t w_, double fill = 0.0)
      : h(h_), w(w_), v(static_cast<std::size_t>(h_ * w_), fill) {}

  double& at(std::int64_t i, std::int64_t j) {
    return v[static_cast<std::size_t>(i * w + j)];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return v[static_cast<std::size_t>(i * w + j)];
  }
  std::int64_t size() const { return h * w; }
};

Grid2D slice_to_grid(const Volume3& vol, std::int64_t z);
void grid_to_slice(const Grid2D& g, Volume3& vol, std::int64_t z);

}  // namespace ctlab
