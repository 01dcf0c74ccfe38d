#pragma once

#include <cstdint>
#include <vector>

#include "ctlab/grid.hpp"
#include "ctlab/volume.hpp"

namespace ctlab {

// Display cap applied where RMSE is exactly zero and PSNR would be infinite.
constexpr double kPsnrCap = 300.0;

enum class SsimConstants { Standard, AsPrinted };

struct SsimOpts {
  int window = 11;
  double sigma = 1.5;
  bool global_stats = false;  // single whole-image window instead of sliding
  // Standard: C1 = (0.01 L)^2, C2 = (0.03 L)^2. AsPrinted: C1 = 0.01 L,
  // C2 = 0.03 L unsquared (the published constants 2.55 / 7.65 for L = 255).
  SsimConstants constants = SsimConstants::Standard;
};

// sqrt of the mean squared difference.
double rmse(const std::vector<double>& a, const std::vector<double>& b);
double rmse(const Grid2D& a, const Grid2D& b);

// 20 log10(data_range / rmse); +inf when rmse == 0.
double psnr(const Grid2D& a, const Grid2D& b, double data_range);

// Mean of the local SSIM map over an 11x11 Gaussian window (sigma 1.5),
// valid positions only. Symmetric in (a, b); exactly 1 for identical images.
double ssim(const Grid2D& a, const Grid2D& b, double data_range,
            const SsimOpts& opts = {});

struct SliceMetrics {
  std::int64_t slice = 0;
  double psnr_db = 0.0;
  double ssim_x100 = 0.0;
  double rmse = 0.0;
};

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct MetricReport {
  std::vector<SliceMetrics> per_slice;
  MetricStat psnr_db, ssim_x100, rmse;
  double data_range = 1.0;
};

// Per-slice PSNR/SSIM/RMSE plus volume mean +- population std. SSIM is
// reported on the x100 scale; infinite PSNR slices enter as kPsnrCap.
MetricReport report_volume(const Volume3& recon, const Volume3& gt,
                           double data_range, const SsimOpts& opts = {},
                           int threads = 1);

}  // namespace ctlab
