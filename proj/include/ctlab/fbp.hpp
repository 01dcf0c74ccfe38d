#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctlab/grid.hpp"
#include "ctlab/volume.hpp"

namespace ctlab {

enum class FilterKind { Ramp, Hann, Hamming };

FilterKind filter_kind_from_string(const std::string& s);
std::string to_string(FilterKind k);

struct FilterSpec {
  FilterKind kind = FilterKind::Hann;
  double frequency_scaling = 0.8;  // fraction of the Nyquist band kept
};

// Frequency response over the padded FFT bins (size = next power of two
// >= 2 * n_detectors). Bin frequency is normalized to [0, 1] at Nyquist;
// the ramp |nu| is windowed by the filter kind evaluated at nu/d and forced
// to zero above d = frequency_scaling. The DC bin is zero.
std::vector<double> build_filter(int n_detectors, const FilterSpec& f);

// Filtered back projection of one slice: each angle row is zero-padded,
// filtered in the frequency domain, truncated, backprojected, and scaled by
// pi / (2 * num_angles) * detector_spacing.
Grid2D fbp_slice(const Grid2D& sino, const ProjectionGeometry& g,
                 const FilterSpec& f, std::int64_t out_size);

// fbp_slice per slice; no cross-slice coupling.
Volume3 fbp_volume(const SinogramStack& s, const FilterSpec& f,
                   std::int64_t out_size, int threads = 1);

}  // namespace ctlab
