#include "ctlab/projector.hpp"

#include <cmath>
#include <stdexcept>

namespace ctlab {

Grid2D slice_to_grid(const Volume3& vol, std::int64_t z) {
  Grid2D g(vol.shape[1], vol.shape[2]);
  const float* src = &vol.data[static_cast<std::size_t>(z * g.h * g.w)];
  for (std::int64_t i = 0; i < g.size(); ++i)
    g.v[static_cast<std::size_t>(i)] = static_cast<double>(src[i]);
  return g;
}

void grid_to_slice(const Grid2D& g, Volume3& vol, std::int64_t z) {
  float* dst = &vol.data[static_cast<std::size_t>(z * g.h * g.w)];
  for (std::int64_t i = 0; i < g.size(); ++i)
    dst[i] = static_cast<float>(g.v[static_cast<std::size_t>(i)]);
}

namespace {

// Number of unit steps on each side of the ray center, enough to cross the
// grid diagonal from any direction.
std::int64_t ray_half_steps(std::int64_t n) {
  return static_cast<std::int64_t>(
             std::ceil(static_cast<double>(n) * 0.70710678118654752440)) +
         2;
}

void check_geometry(const ProjectionGeometry& g) {
  if (g.num_angles < 1 || g.num_detectors < 1 ||
      static_cast<int>(g.angles.size()) != g.num_angles)
    throw std::invalid_argument("invalid projection geometry");
}

}  // namespace

Grid2D radon_slice(const Grid2D& img, const ProjectionGeometry& g) {
  if (img.h != img.w) throw std::invalid_argument("radon_slice: slice not square");
  check_geometry(g);
  const std::int64_t n = img.h;
  const double center = (static_cast<double>(n) - 1.0) / 2.0;
  const double det_center = (static_cast<double>(g.num_detectors) - 1.0) / 2.0;
  const std::int64_t half = ray_half_steps(n);
  Grid2D sino(g.num_angles, g.num_detectors);

  for (int a = 0; a < g.num_angles; ++a) {
    const double cosv = std::cos(g.angles[static_cast<std::size_t>(a)]);
    const double sinv = std::sin(g.angles[static_cast<std::size_t>(a)]);
    for (int t = 0; t < g.num_detectors; ++t) {
      const double s =
          (static_cast<double>(t) - det_center) * g.detector_spacing;
      double acc = 0.0;
      for (std::int64_t k = -half; k <= half; ++k) {
        const double u = static_cast<double>(k);
        const double x = s * cosv - u * sinv + center;
        const double y = s * sinv + u * cosv + center;
        const std::int64_t ix = static_cast<std::int64_t>(std::floor(x));
        const std::int64_t iy = static_cast<std::int64_t>(std::floor(y));
        if (ix < -1 || ix >= n || iy < -1 || iy >= n) continue;
        const double fx = x - static_cast<double>(ix);
        const double fy = y - static_cast<double>(iy);
        double v = 0.0;
        if (iy >= 0) {
          if (ix >= 0) v += (1.0 - fy) * (1.0 - fx) * img.at(iy, ix);
          if (ix + 1 < n) v += (1.0 - fy) * fx * img.at(iy, ix + 1);
        }
        if (iy + 1 < n) {
          if (ix >= 0) v += fy * (1.0 - fx) * img.at(iy + 1, ix);
          if (ix + 1 < n) v += fy * fx * img.at(iy + 1, ix + 1);
        }
        acc += v;
      }
      sino.at(a, t) = acc;  // unit step length
    }
  }
  return sino;
}

Grid2D backproject_slice(const Grid2D& sino, const ProjectionGeometry& g,
                         std::int64_t out_size) {
  check_geometry(g);
  if (sino.h != g.num_angles || sino.w != g.num_detectors)
    throw std::invalid_argument("backproject_slice: sinogram/geometry mismatch");
  const std::int64_t n = out_size;
  const double center = (static_cast<double>(n) - 1.0) / 2.0;
  const double det_center = (static_cast<double>(g.num_detectors) - 1.0) / 2.0;
  const std::int64_t half = ray_half_steps(n);
  Grid2D img(n, n);

  for (int a = 0; a < g.num_angles; ++a) {
    const double cosv = std::cos(g.angles[static_cast<std::size_t>(a)]);
    const double sinv = std::sin(g.angles[static_cast<std::size_t>(a)]);
    for (int t = 0; t < g.num_detectors; ++t) {
      const double s =
          (static_cast<double>(t) - det_center) * g.detector_spacing;
      const double val = sino.at(a, t);
      if (val == 0.0) continue;
      for (std::int64_t k = -half; k <= half; ++k) {
        const double u = static_cast<double>(k);
        const double x = s * cosv - u * sinv + center;
        const double y = s * sinv + u * cosv + center;
        const std::int64_t ix = static_cast<std::int64_t>(std::floor(x));
        const std::int64_t iy = static_cast<std::int64_t>(std::floor(y));
        if (ix < -1 || ix >= n || iy < -1 || iy >= n) continue;
        const double fx = x - static_cast<double>(ix);
        const double fy = y - static_cast<double>(iy);
        if (iy >= 0) {
          if (ix >= 0) img.at(iy, ix) += (1.0 - fy) * (1.0 - fx) * val;
          if (ix + 1 < n) img.at(iy, ix + 1) += (1.0 - fy) * fx * val;
        }
        if (iy + 1 < n) {
          if (ix >= 0) img.at(iy + 1, ix) += fy * (1.0 - fx) * val;
          if (ix + 1 < n) img.at(iy + 1, ix + 1) += fy * fx * val;
        }
      }
    }
  }
  return img;
}

SinogramStack radon_volume(const Volume3& v, const ProjectionGeometry& g,
                           int threads) {
  if (v.shape[1] != v.shape[2])
    throw std::invalid_argument("radon_volume: slices not square");
  check_geometry(g);
  SinogramStack stack(v.shape[0], g);
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1)
  for (std::int64_t z = 0; z < v.shape[0]; ++z) {
    const Grid2D sino = radon_slice(slice_to_grid(v, z), g);
    float* dst = &stack.at(z, 0, 0);
    for (std::int64_t i = 0; i < sino.size(); ++i)
      dst[i] = static_cast<float>(sino.v[static_cast<std::size_t>(i)]);
  }
  return stack;
}

SinogramStack add_awgn(const SinogramStack& s, const NoiseSpec& n) {
  if (n.none) return s;
  if (!std::isfinite(n.snr_db))
    throw std::invalid_argument("add_awgn: snr_db must be finite");
  const std::int64_t per_slice = s.geometry.num_angles * s.geometry.num_detectors;

  const auto mean_square = [&](std::int64_t lo, std::int64_t hi) {
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double v = s.data[static_cast<std::size_t>(i)];
      acc += v * v;
    }
    return acc / static_cast<double>(hi - lo);
  };

  const double gain = std::pow(10.0, -n.snr_db / 10.0);
  double global_sigma = 0.0;
  if (!n.per_slice_power) {
    const double p = mean_square(0, s.size());
    if (p <= 0.0)
      throw std::invalid_argument("add_awgn: zero-power stack, SNR undefined");
    global_sigma = std::sqrt(p * gain);
  }

  SinogramStack out = s;
  const Rng base(n.seed);
  for (std::int64_t z = 0; z < s.num_slices; ++z) {
    double sigma = global_sigma;
    if (n.per_slice_power) {
      const double p = mean_square(z * per_slice, (z + 1) * per_slice);
      if (p <= 0.0)
        throw std::invalid_argument("add_awgn: zero-power slice, SNR undefined");
      sigma = std::sqrt(p * gain);
    }
    Rng rng = base.child(static_cast<std::uint64_t>(z));
    float* dst = &out.data[static_cast<std::size_t>(z * per_slice)];
    for (std::int64_t i = 0; i < per_slice; ++i)
      dst[i] = static_cast<float>(static_cast<double>(dst[i]) +
                                  sigma * rng.normal());
  }
  return out;
}

}  // namespace ctlab
