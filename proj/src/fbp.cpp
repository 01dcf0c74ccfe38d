#include "ctlab/fbp.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "ctlab/fft.hpp"
#include "ctlab/projector.hpp"

namespace ctlab {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "ramp") return FilterKind::Ramp;
  if (s == "hann") return FilterKind::Hann;
  if (s == "hamming") return FilterKind::Hamming;
  throw std::invalid_argument("unknown filter kind: " + s);
}

std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::Ramp: return "ramp";
    case FilterKind::Hann: return "hann";
    case FilterKind::Hamming: return "hamming";
  }
  return "?";
}

std::vector<double> build_filter(int n_detectors, const FilterSpec& f) {
  if (n_detectors < 1) throw std::invalid_argument("build_filter: n_detectors < 1");
  if (!(f.frequency_scaling > 0.0) || f.frequency_scaling > 1.0)
    throw std::invalid_argument("build_filter: frequency_scaling not in (0, 1]");
  const std::int64_t m = next_pow2(2 * static_cast<std::int64_t>(n_detectors));
  std::vector<double> resp(static_cast<std::size_t>(m), 0.0);
  const double d = f.frequency_scaling;
  for (std::int64_t k = 0; k < m; ++k) {
    const std::int64_t folded = std::min(k, m - k);
    const double nu = static_cast<double>(folded) / (static_cast<double>(m) / 2.0);
    if (nu == 0.0 || nu > d) continue;
    double window = 1.0;
    switch (f.kind) {
      case FilterKind::Ramp: window = 1.0; break;
      case FilterKind::Hann: window = 0.5 * (1.0 + std::cos(kPi * nu / d)); break;
      case FilterKind::Hamming:
        window = 0.54 + 0.46 * std::cos(kPi * nu / d);
        break;
    }
    resp[static_cast<std::size_t>(k)] = nu * window;
  }
  return resp;
}

Grid2D fbp_slice(const Grid2D& sino, const ProjectionGeometry& g,
                 const FilterSpec& f, std::int64_t out_size) {
  if (sino.h != g.num_angles || sino.w != g.num_detectors)
    throw std::invalid_argument("fbp_slice: sinogram/geometry mismatch");
  const std::vector<double> resp = build_filter(g.num_detectors, f);
  const std::int64_t m = static_cast<std::int64_t>(resp.size());

  Grid2D filtered(sino.h, sino.w);
  std::vector<std::complex<double>> row(static_cast<std::size_t>(m));
  for (std::int64_t a = 0; a < sino.h; ++a) {
    std::fill(row.begin(), row.end(), std::complex<double>(0.0, 0.0));
    for (std::int64_t t = 0; t < sino.w; ++t)
      row[static_cast<std::size_t>(t)] = sino.at(a, t);
    fft_inplace(row, false);
    for (std::int64_t k = 0; k < m; ++k)
      row[static_cast<std::size_t>(k)] *= resp[static_cast<std::size_t>(k)];
    fft_inplace(row, true);
    for (std::int64_t t = 0; t < sino.w; ++t)
      filtered.at(a, t) = row[static_cast<std::size_t>(t)].real();
  }

  Grid2D img = backproject_slice(filtered, g, out_size);
  const double scale =
      kPi / (2.0 * static_cast<double>(g.num_angles)) * g.detector_spacing;
  for (double& v : img.v) v *= scale;
  return img;
}

Volume3 fbp_volume(const SinogramStack& s, const FilterSpec& f,
                   std::int64_t out_size, int threads) {
  Volume3 out(s.num_slices, out_size, out_size);
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1)
  for (std::int64_t z = 0; z < s.num_slices; ++z) {
    Grid2D sino(s.geometry.num_angles, s.geometry.num_detectors);
    const float* src = &s.data[static_cast<std::size_t>(z * sino.size())];
    for (std::int64_t i = 0; i < sino.size(); ++i)
      sino.v[static_cast<std::size_t>(i)] = static_cast<double>(src[i]);
    grid_to_slice(fbp_slice(sino, s.geometry, f, out_size), out, z);
  }
  return out;
}

}  // namespace ctlab
