#include "ctlab/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctlab/projector.hpp"

namespace ctlab {

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("rmse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double rmse(const Grid2D& a, const Grid2D& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("rmse: shape mismatch");
  return rmse(a.v, b.v);
}

double psnr(const Grid2D& a, const Grid2D& b, double data_range) {
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range <= 0");
  const double e = rmse(a, b);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(data_range / e);
}

namespace {

std::vector<double> gaussian_kernel(int n, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(n));
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable valid-mode filtering: rows first, then columns.
Grid2D filter_valid(const Grid2D& img, const std::vector<double>& k) {
  const std::int64_t n = static_cast<std::int64_t>(k.size());
  Grid2D rows(img.h, img.w - n + 1);
  for (std::int64_t i = 0; i < rows.h; ++i)
    for (std::int64_t j = 0; j < rows.w; ++j) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < n; ++t)
        acc += k[static_cast<std::size_t>(t)] * img.at(i, j + t);
      rows.at(i, j) = acc;
    }
  Grid2D out(img.h - n + 1, rows.w);
  for (std::int64_t i = 0; i < out.h; ++i)
    for (std::int64_t j = 0; j < out.w; ++j) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < n; ++t)
        acc += k[static_cast<std::size_t>(t)] * rows.at(i + t, j);
      out.at(i, j) = acc;
    }
  return out;
}

void ssim_constants(double data_range, SsimConstants kind, double& c1,
                    double& c2) {
  if (kind == SsimConstants::Standard) {
    c1 = (0.01 * data_range) * (0.01 * data_range);
    c2 = (0.03 * data_range) * (0.03 * data_range);
  } else {
    c1 = 0.01 * data_range;
    c2 = 0.03 * data_range;
  }
}

}  // namespace

double ssim(const Grid2D& a, const Grid2D& b, double data_range,
            const SsimOpts& opts) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("ssim: shape mismatch");
  double c1 = 0.0, c2 = 0.0;
  ssim_constants(data_range, opts.constants, c1, c2);

  if (opts.global_stats) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      ma += a.v[static_cast<std::size_t>(i)];
      mb += b.v[static_cast<std::size_t>(i)];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      const double da = a.v[static_cast<std::size_t>(i)] - ma;
      const double db = b.v[static_cast<std::size_t>(i)] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
    va /= n;
    vb /= n;
    cov /= n;
    return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }

  if (a.h < opts.window || a.w < opts.window)
    throw std::invalid_argument("ssim: image smaller than window");
  const std::vector<double> k = gaussian_kernel(opts.window, opts.sigma);

  Grid2D aa(a.h, a.w), bb(a.h, a.w), ab(a.h, a.w);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double av = a.v[static_cast<std::size_t>(i)];
    const double bv = b.v[static_cast<std::size_t>(i)];
    aa.v[static_cast<std::size_t>(i)] = av * av;
    bb.v[static_cast<std::size_t>(i)] = bv * bv;
    ab.v[static_cast<std::size_t>(i)] = av * bv;
  }
  const Grid2D mu_a = filter_valid(a, k);
  const Grid2D mu_b = filter_valid(b, k);
  const Grid2D m_aa = filter_valid(aa, k);
  const Grid2D m_bb = filter_valid(bb, k);
  const Grid2D m_ab = filter_valid(ab, k);

  double acc = 0.0;
  for (std::int64_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.v[static_cast<std::size_t>(i)];
    const double mb = mu_b.v[static_cast<std::size_t>(i)];
    const double va = m_aa.v[static_cast<std::size_t>(i)] - ma * ma;
    const double vb = m_bb.v[static_cast<std::size_t>(i)] - mb * mb;
    const double cov = m_ab.v[static_cast<std::size_t>(i)] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

MetricReport report_volume(const Volume3& recon, const Volume3& gt,
                           double data_range, const SsimOpts& opts,
                           int threads) {
  if (recon.shape != gt.shape)
    throw std::invalid_argument("report_volume: shape mismatch");
  MetricReport rep;
  rep.data_range = data_range;
  rep.per_slice.resize(static_cast<std::size_t>(recon.shape[0]));

#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1)
  for (std::int64_t z = 0; z < recon.shape[0]; ++z) {
    const Grid2D r = slice_to_grid(recon, z);
    const Grid2D g = slice_to_grid(gt, z);
    SliceMetrics m;
    m.slice = z;
    m.rmse = rmse(r, g);
    const double p = psnr(r, g, data_range);
    m.psnr_db = std::isinf(p) ? kPsnrCap : p;
    m.ssim_x100 = 100.0 * ssim(r, g, data_range, opts);
    rep.per_slice[static_cast<std::size_t>(z)] = m;
  }

  const auto stat = [&](auto field) {
    MetricStat s;
    const double n = static_cast<double>(rep.per_slice.size());
    for (const auto& m : rep.per_slice) s.mean += field(m);
    s.mean /= n;
    for (const auto& m : rep.per_slice) {
      const double d = field(m) - s.mean;
      s.stddev += d * d;
    }
    s.stddev = std::sqrt(s.stddev / n);
    return s;
  };
  rep.psnr_db = stat([](const SliceMetrics& m) { return m.psnr_db; });
  rep.ssim_x100 = stat([](const SliceMetrics& m) { return m.ssim_x100; });
  rep.rmse = stat([](const SliceMetrics& m) { return m.rmse; });
  return rep;
}

}  // namespace ctlab
