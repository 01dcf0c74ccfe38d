#include "ctlab/stitcher.hpp"

#include <algorithm>
#include <stdexcept>

namespace ctlab {

namespace {

struct AxisWindow {
  std::int64_t in_lo, in_hi, paste_lo, paste_hi;
};

std::vector<AxisWindow> plan_axis(std::int64_t extent, std::int64_t block,
                                  std::int64_t margin, std::int64_t align) {
  if (extent < 1) throw std::invalid_argument("plan_stitch: empty axis");
  if (block < 1 || margin < 0 || align < 1)
    throw std::invalid_argument("plan_stitch: invalid block/margin/alignment");
  if (align > 1 && extent % align != 0)
    throw std::invalid_argument(
        "plan_stitch: volume extent must be a multiple of the alignment");

  const std::int64_t b = std::min(block, extent);
  std::vector<AxisWindow> wins;
  if (b == extent) {
    wins.push_back({0, extent, 0, extent});
    return wins;
  }
  if (2 * margin >= b)
    throw std::invalid_argument("plan_stitch: margin must be < block/2");

  std::int64_t paste_lo = 0;
  while (paste_lo < extent) {
    AxisWindow w{};
    w.paste_lo = paste_lo;
    w.in_lo = std::max<std::int64_t>(0, paste_lo - margin);
    w.in_hi = w.in_lo + b;
    if (w.in_hi >= extent) {
      w.in_hi = extent;
      w.in_lo = extent - b;
      w.paste_hi = extent;
    } else {
      w.paste_hi = w.in_hi - margin;
    }
    if (align > 1) {
      // Snap to the pooling grid; only ever widens the context.
      w.in_lo = (w.in_lo / align) * align;
      w.in_hi = ((w.in_hi + align - 1) / align) * align;
    }
    if (w.paste_hi <= w.paste_lo)
      throw std::invalid_argument("plan_stitch: infeasible cover");
    wins.push_back(w);
    paste_lo = w.paste_hi;
  }
  return wins;
}

}  // namespace

StitchPlan plan_stitch(const Shape3& shape, const Shape3& block,
                       const Shape3& margin, const Shape3& alignment) {
  StitchPlan plan;
  plan.shape = shape;
  std::array<std::vector<AxisWindow>, 3> axes;
  for (int i = 0; i < 3; ++i)
    axes[static_cast<std::size_t>(i)] =
        plan_axis(shape[static_cast<std::size_t>(i)], block[static_cast<std::size_t>(i)],
                  margin[static_cast<std::size_t>(i)], alignment[static_cast<std::size_t>(i)]);
  for (const AxisWindow& wz : axes[0])
    for (const AxisWindow& wy : axes[1])
      for (const AxisWindow& wx : axes[2]) {
        StitchWindow w;
        w.in_lo = {wz.in_lo, wy.in_lo, wx.in_lo};
        w.in_hi = {wz.in_hi, wy.in_hi, wx.in_hi};
        w.paste_lo = {wz.paste_lo, wy.paste_lo, wx.paste_lo};
        w.paste_hi = {wz.paste_hi, wy.paste_hi, wx.paste_hi};
        plan.windows.push_back(w);
      }
  return plan;
}

namespace {

Tensor window_to_tensor(const Volume3& v, const Shape3& lo, const Shape3& hi) {
  const std::int64_t d = hi[0] - lo[0], h = hi[1] - lo[1], w = hi[2] - lo[2];
  std::vector<double> data(static_cast<std::size_t>(d * h * w));
  std::size_t i = 0;
  for (std::int64_t z = lo[0]; z < hi[0]; ++z)
    for (std::int64_t y = lo[1]; y < hi[1]; ++y)
      for (std::int64_t x = lo[2]; x < hi[2]; ++x)
        data[i++] = static_cast<double>(v.at(z, y, x));
  return Tensor::from_data({1, 1, d, h, w}, std::move(data));
}

}  // namespace

Volume3 stitched_forward(const ModelSpec& spec, ModelParams& params,
                         const Volume3& v, const StitchPlan& plan) {
  if (plan.shape != v.shape)
    throw std::invalid_argument("stitched_forward: plan/volume shape mismatch");
  Volume3 out(v.shape[0], v.shape[1], v.shape[2]);
  out.spacing_mm = v.spacing_mm;

  for (const StitchWindow& w : plan.windows) {
    Tensor block_out;
    {
      NoGradGuard no_grad;
      Tensor block_in;
      if (spec.dims == 2) {
        // Slice-wise model: batch the window's slices along N.
        const std::int64_t d = w.in_hi[0] - w.in_lo[0];
        const std::int64_t h = w.in_hi[1] - w.in_lo[1];
        const std::int64_t ww = w.in_hi[2] - w.in_lo[2];
        std::vector<double> data(static_cast<std::size_t>(d * h * ww));
        std::size_t i = 0;
        for (std::int64_t z = w.in_lo[0]; z < w.in_hi[0]; ++z)
          for (std::int64_t y = w.in_lo[1]; y < w.in_hi[1]; ++y)
            for (std::int64_t x = w.in_lo[2]; x < w.in_hi[2]; ++x)
              data[i++] = static_cast<double>(v.at(z, y, x));
        block_in = Tensor::from_data({d, 1, 1, h, ww}, std::move(data));
      } else {
        block_in = window_to_tensor(v, w.in_lo, w.in_hi);
      }
      block_out = forward(spec, params, block_in, /*train=*/false);
    }
    const std::int64_t bh = w.in_hi[1] - w.in_lo[1];
    const std::int64_t bw = w.in_hi[2] - w.in_lo[2];
    const double* src = block_out.data().data();
    for (std::int64_t z = w.paste_lo[0]; z < w.paste_hi[0]; ++z)
      for (std::int64_t y = w.paste_lo[1]; y < w.paste_hi[1]; ++y)
        for (std::int64_t x = w.paste_lo[2]; x < w.paste_hi[2]; ++x) {
          const std::int64_t bz = z - w.in_lo[0];
          const std::int64_t by = y - w.in_lo[1];
          const std::int64_t bx = x - w.in_lo[2];
          out.at(z, y, x) =
              static_cast<float>(src[(bz * bh + by) * bw + bx]);
        }
  }
  return out;
}

Volume3 forward_volume(const ModelSpec& spec, ModelParams& params,
                       const Volume3& v) {
  StitchPlan plan = plan_stitch(v.shape, v.shape, {0, 0, 0});
  return stitched_forward(spec, params, v, plan);
}

}  // namespace ctlab
