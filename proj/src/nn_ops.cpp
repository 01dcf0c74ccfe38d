#include "ctlab/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctlab/parallel.hpp"

namespace ctlab {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct ConvDims {
  std::int64_t n, ic, oc, d, h, w, kd, kh, kw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.dims().size() == 5, "conv3d: input must be (N, C, D, H, W)");
  require(w.dims().size() == 5, "conv3d: weight must be (OC, IC, KD, KH, KW)");
  require(b.dims().size() == 1, "conv3d: bias must be (OC)");
  ConvDims cd{x.dims()[0], x.dims()[1], w.dims()[0], x.dims()[2],
              x.dims()[3], x.dims()[4], w.dims()[2], w.dims()[3], w.dims()[4]};
  require(w.dims()[1] == cd.ic, "conv3d: channel mismatch");
  require(b.dims()[0] == cd.oc, "conv3d: bias/weight mismatch");
  require(cd.kd % 2 == 1 && cd.kh % 2 == 1 && cd.kw % 2 == 1,
          "conv3d: kernels must be odd");
  return cd;
}

// y[n,oc] += sum_ic sum_k w * shifted x. Shift-and-accumulate keeps the inner
// x loop contiguous.
void conv_forward(const double* x, const double* w, const double* b, double* y,
                  const ConvDims& c) {
  const std::int64_t spatial = c.d * c.h * c.w;
  const std::int64_t pd = (c.kd - 1) / 2, ph = (c.kh - 1) / 2,
                     pw = (c.kw - 1) / 2;
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t n = 0; n < c.n; ++n)
    for (std::int64_t oc = 0; oc < c.oc; ++oc) {
      double* yp = y + (n * c.oc + oc) * spatial;
      std::fill(yp, yp + spatial, b[oc]);
      for (std::int64_t ic = 0; ic < c.ic; ++ic) {
        const double* xp = x + (n * c.ic + ic) * spatial;
        const double* wp = w + (oc * c.ic + ic) * c.kd * c.kh * c.kw;
        for (std::int64_t kd = 0; kd < c.kd; ++kd)
          for (std::int64_t kh = 0; kh < c.kh; ++kh)
            for (std::int64_t kw = 0; kw < c.kw; ++kw) {
              const double wv = wp[(kd * c.kh + kh) * c.kw + kw];
              const std::int64_t dz = kd - pd, dy = kh - ph, dx = kw - pw;
              const std::int64_t z0 = std::max<std::int64_t>(0, -dz);
              const std::int64_t z1 = std::min(c.d, c.d - dz);
              const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
              const std::int64_t y1 = std::min(c.h, c.h - dy);
              const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
              const std::int64_t x1 = std::min(c.w, c.w - dx);
              for (std::int64_t z = z0; z < z1; ++z)
                for (std::int64_t yy = y0; yy < y1; ++yy) {
                  double* yrow = yp + (z * c.h + yy) * c.w;
                  const double* xrow =
                      xp + ((z + dz) * c.h + (yy + dy)) * c.w + dx;
                  for (std::int64_t xx = x0; xx < x1; ++xx)
                    yrow[xx] += wv * xrow[xx];
                }
            }
      }
    }
}

// gx[n,ic] += sum_oc sum_k w * shifted gy (transpose of conv_forward).
void conv_backward_input(const double* gy, const double* w, double* gx,
                         const ConvDims& c) {
  const std::int64_t spatial = c.d * c.h * c.w;
  const std::int64_t pd = (c.kd - 1) / 2, ph = (c.kh - 1) / 2,
                     pw = (c.kw - 1) / 2;
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t n = 0; n < c.n; ++n)
    for (std::int64_t ic = 0; ic < c.ic; ++ic) {
      double* gxp = gx + (n * c.ic + ic) * spatial;
      for (std::int64_t oc = 0; oc < c.oc; ++oc) {
        const double* gyp = gy + (n * c.oc + oc) * spatial;
        const double* wp = w + (oc * c.ic + ic) * c.kd * c.kh * c.kw;
        for (std::int64_t kd = 0; kd < c.kd; ++kd)
          for (std::int64_t kh = 0; kh < c.kh; ++kh)
            for (std::int64_t kw = 0; kw < c.kw; ++kw) {
              const double wv = wp[(kd * c.kh + kh) * c.kw + kw];
              // x index = y index + delta, so gx[i] += wv * gy[i - delta].
              const std::int64_t dz = pd - kd, dy = ph - kh, dx = pw - kw;
              const std::int64_t z0 = std::max<std::int64_t>(0, -dz);
              const std::int64_t z1 = std::min(c.d, c.d - dz);
              const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
              const std::int64_t y1 = std::min(c.h, c.h - dy);
              const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
              const std::int64_t x1 = std::min(c.w, c.w - dx);
              for (std::int64_t z = z0; z < z1; ++z)
                for (std::int64_t yy = y0; yy < y1; ++yy) {
                  double* gxrow = gxp + (z * c.h + yy) * c.w;
                  const double* gyrow =
                      gyp + ((z + dz) * c.h + (yy + dy)) * c.w + dx;
                  for (std::int64_t xx = x0; xx < x1; ++xx)
                    gxrow[xx] += wv * gyrow[xx];
                }
            }
      }
    }
}

void conv_backward_weight(const double* gy, const double* x, double* gw,
                          const ConvDims& c) {
  const std::int64_t spatial = c.d * c.h * c.w;
  const std::int64_t pd = (c.kd - 1) / 2, ph = (c.kh - 1) / 2,
                     pw = (c.kw - 1) / 2;
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t oc = 0; oc < c.oc; ++oc)
    for (std::int64_t ic = 0; ic < c.ic; ++ic) {
      double* gwp = gw + (oc * c.ic + ic) * c.kd * c.kh * c.kw;
      for (std::int64_t kd = 0; kd < c.kd; ++kd)
        for (std::int64_t kh = 0; kh < c.kh; ++kh)
          for (std::int64_t kw = 0; kw < c.kw; ++kw) {
            const std::int64_t dz = kd - pd, dy = kh - ph, dx = kw - pw;
            const std::int64_t z0 = std::max<std::int64_t>(0, -dz);
            const std::int64_t z1 = std::min(c.d, c.d - dz);
            const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
            const std::int64_t y1 = std::min(c.h, c.h - dy);
            const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
            const std::int64_t x1 = std::min(c.w, c.w - dx);
            double acc = 0.0;
            for (std::int64_t n = 0; n < c.n; ++n) {
              const double* gyp = gy + (n * c.oc + oc) * spatial;
              const double* xp = x + (n * c.ic + ic) * spatial;
              for (std::int64_t z = z0; z < z1; ++z)
                for (std::int64_t yy = y0; yy < y1; ++yy) {
                  const double* gyrow = gyp + (z * c.h + yy) * c.w;
                  const double* xrow =
                      xp + ((z + dz) * c.h + (yy + dy)) * c.w + dx;
                  for (std::int64_t xx = x0; xx < x1; ++xx)
                    acc += gyrow[xx] * xrow[xx];
                }
            }
            gwp[(kd * c.kh + kh) * c.kw + kw] += acc;
          }
    }
}

void conv_backward_bias(const double* gy, double* gb, const ConvDims& c) {
  const std::int64_t spatial = c.d * c.h * c.w;
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::int64_t oc = 0; oc < c.oc; ++oc) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < c.n; ++n) {
      const double* gyp = gy + (n * c.oc + oc) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) acc += gyp[i];
    }
    gb[oc] += acc;
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const ConvDims c = conv_dims(x, w, b);
  std::vector<double> out(
      static_cast<std::size_t>(c.n * c.oc * c.d * c.h * c.w));
  conv_forward(x.data().data(), w.data().data(), b.data().data(), out.data(),
               c);
  return make_op(
      {c.n, c.oc, c.d, c.h, c.w}, std::move(out), {x, w, b},
      [c](TensorNode& self) {
        const double* gy = self.grad.data();
        TensorNode& xn = *self.inputs[0];
        TensorNode& wn = *self.inputs[1];
        TensorNode& bn = *self.inputs[2];
        if (xn.needs_grad) {
          xn.ensure_grad();
          conv_backward_input(gy, wn.data.data(), xn.grad.data(), c);
        }
        if (wn.needs_grad) {
          wn.ensure_grad();
          conv_backward_weight(gy, xn.data.data(), wn.grad.data(), c);
        }
        if (bn.needs_grad) {
          bn.ensure_grad();
          conv_backward_bias(gy, bn.grad.data(), c);
        }
      });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var, bool train,
                 double momentum, double eps) {
  require(x.dims().size() == 5, "batchnorm: input must be (N, C, D, H, W)");
  const std::int64_t n = x.dims()[0], ch = x.dims()[1];
  const std::int64_t spatial = x.dims()[2] * x.dims()[3] * x.dims()[4];
  require(n >= 1 && spatial >= 1, "batchnorm: zero-size batch");
  require(gamma.dims() == std::vector<std::int64_t>{ch} &&
              beta.dims() == std::vector<std::int64_t>{ch} &&
              running_mean.dims() == std::vector<std::int64_t>{ch} &&
              running_var.dims() == std::vector<std::int64_t>{ch},
          "batchnorm: parameter shapes must be (C)");

  const std::int64_t count = n * spatial;
  const double* xp = x.data().data();
  std::vector<double> mean(static_cast<std::size_t>(ch), 0.0);
  std::vector<double> invstd(static_cast<std::size_t>(ch), 0.0);

  if (train) {
    std::vector<double>& rm = running_mean.data();
    std::vector<double>& rv = running_var.data();
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::int64_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const double* p = xp + (b * ch + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double acc2 = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const double* p = xp + (b * ch + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) {
          const double d = p[i] - mu;
          acc2 += d * d;
        }
      }
      const double var = acc2 / static_cast<double>(count);
      mean[static_cast<std::size_t>(c)] = mu;
      invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
      const double var_unbiased =
          count > 1 ? acc2 / static_cast<double>(count - 1) : var;
      rm[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * rm[static_cast<std::size_t>(c)] + momentum * mu;
      rv[static_cast<std::size_t>(c)] =
          (1.0 - momentum) * rv[static_cast<std::size_t>(c)] +
          momentum * var_unbiased;
    }
  } else {
    const std::vector<double>& rm = running_mean.data();
    const std::vector<double>& rv = running_var.data();
    for (std::int64_t c = 0; c < ch; ++c) {
      mean[static_cast<std::size_t>(c)] = rm[static_cast<std::size_t>(c)];
      invstd[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(rv[static_cast<std::size_t>(c)] + eps);
    }
  }

  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const double* gp = gamma.data().data();
  const double* bp = beta.data().data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double mu = mean[static_cast<std::size_t>(c)];
      const double is = invstd[static_cast<std::size_t>(c)];
      const double g = gp[c], bb = bp[c];
      const double* src = xp + (b * ch + c) * spatial;
      double* dst = out.data() + (b * ch + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i)
        dst[i] = g * (src[i] - mu) * is + bb;
    }

  return make_op(
      x.dims(), std::move(out), {x, gamma, beta},
      [n, ch, spatial, count, train, mean, invstd](TensorNode& self) {
        TensorNode& xn = *self.inputs[0];
        TensorNode& gn = *self.inputs[1];
        TensorNode& bn = *self.inputs[2];
        const double* gy = self.grad.data();
        const double* xp = xn.data.data();
        const double* gp = gn.data.data();
        const bool want_x = xn.needs_grad;
        const bool want_g = gn.needs_grad;
        const bool want_b = bn.needs_grad;
        if (want_x) xn.ensure_grad();
        if (want_g) gn.ensure_grad();
        if (want_b) bn.ensure_grad();
#pragma omp parallel for schedule(static) num_threads(num_threads())
        for (std::int64_t c = 0; c < ch; ++c) {
          const double mu = mean[static_cast<std::size_t>(c)];
          const double is = invstd[static_cast<std::size_t>(c)];
          double s1 = 0.0, s2 = 0.0;  // sum g, sum g * xhat
          for (std::int64_t b = 0; b < n; ++b) {
            const double* gyp = gy + (b * ch + c) * spatial;
            const double* src = xp + (b * ch + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) {
              s1 += gyp[i];
              s2 += gyp[i] * (src[i] - mu) * is;
            }
          }
          if (want_b) bn.grad[static_cast<std::size_t>(c)] += s1;
          if (want_g) gn.grad[static_cast<std::size_t>(c)] += s2;
          if (want_x) {
            const double g = gp[c];
            if (train) {
              const double inv_count = 1.0 / static_cast<double>(count);
              for (std::int64_t b = 0; b < n; ++b) {
                const double* gyp = gy + (b * ch + c) * spatial;
                const double* src = xp + (b * ch + c) * spatial;
                double* gxp = xn.grad.data() + (b * ch + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                  const double xhat = (src[i] - mu) * is;
                  gxp[i] += g * is *
                            (gyp[i] - s1 * inv_count - xhat * s2 * inv_count);
                }
              }
            } else {
              for (std::int64_t b = 0; b < n; ++b) {
                const double* gyp = gy + (b * ch + c) * spatial;
                double* gxp = xn.grad.data() + (b * ch + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i)
                  gxp[i] += gyp[i] * g * is;
              }
            }
          }
        }
      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const double* xp = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = xp[i] >= 0.0 ? xp[i] : slope * xp[i];
  return make_op(x.dims(), std::move(out), {x}, [slope](TensorNode& self) {
    TensorNode& xn = *self.inputs[0];
    if (!xn.needs_grad) return;
    xn.ensure_grad();
    const double* gy = self.grad.data();
    const double* xp = xn.data.data();
    double* gx = xn.grad.data();
    const std::int64_t n = self.numel();
    for (std::int64_t i = 0; i < n; ++i)
      gx[i] += xp[i] > 0.0 ? gy[i] : slope * gy[i];
  });
}

Tensor maxpool(const Tensor& x, std::array<int, 3> kernel) {
  require(x.dims().size() == 5, "maxpool: input must be (N, C, D, H, W)");
  const std::int64_t n = x.dims()[0], ch = x.dims()[1];
  const std::int64_t di = x.dims()[2], hi = x.dims()[3], wi = x.dims()[4];
  const std::int64_t kz = kernel[0], ky = kernel[1], kx = kernel[2];
  require(kz >= 1 && ky >= 1 && kx >= 1, "maxpool: kernel must be positive");
  require(di % kz == 0 && hi % ky == 0 && wi % kx == 0,
          "maxpool: spatial dims must be divisible by the kernel");
  const std::int64_t dz = di / kz, dy = hi / ky, dx = wi / kx;
  const std::int64_t out_n = n * ch * dz * dy * dx;

  std::vector<double> out(static_cast<std::size_t>(out_n));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out_n));
  const double* xp = x.data().data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const std::int64_t plane_in = (b * ch + c) * di * hi * wi;
      const std::int64_t plane_out = (b * ch + c) * dz * dy * dx;
      for (std::int64_t z = 0; z < dz; ++z)
        for (std::int64_t y = 0; y < dy; ++y)
          for (std::int64_t xo = 0; xo < dx; ++xo) {
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t best_idx = -1;
            for (std::int64_t iz = z * kz; iz < (z + 1) * kz; ++iz)
              for (std::int64_t iy = y * ky; iy < (y + 1) * ky; ++iy)
                for (std::int64_t ix = xo * kx; ix < (xo + 1) * kx; ++ix) {
                  const std::int64_t idx = plane_in + (iz * hi + iy) * wi + ix;
                  if (xp[idx] > best) {
                    best = xp[idx];
                    best_idx = idx;
                  }
                }
            const std::int64_t oidx = plane_out + (z * dy + y) * dx + xo;
            out[static_cast<std::size_t>(oidx)] = best;
            (*argmax)[static_cast<std::size_t>(oidx)] = best_idx;
          }
    }

  return make_op({n, ch, dz, dy, dx}, std::move(out), {x},
                 [argmax](TensorNode& self) {
                   TensorNode& xn = *self.inputs[0];
                   if (!xn.needs_grad) return;
                   xn.ensure_grad();
                   const double* gy = self.grad.data();
                   double* gx = xn.grad.data();
                   const std::int64_t m = self.numel();
                   for (std::int64_t i = 0; i < m; ++i)
                     gx[(*argmax)[static_cast<std::size_t>(i)]] += gy[i];
                 });
}

namespace {

struct LinTap {
  std::int64_t lo, hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};

std::vector<LinTap> linear_taps(std::int64_t n_in, int scale) {
  std::vector<LinTap> taps(static_cast<std::size_t>(n_in * scale));
  for (std::int64_t i = 0; i < n_in * scale; ++i) {
    double src = (static_cast<double>(i) + 0.5) / static_cast<double>(scale) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t hi = std::min(lo + 1, n_in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor upsample_linear(const Tensor& x, std::array<int, 3> scale) {
  require(x.dims().size() == 5, "upsample: input must be (N, C, D, H, W)");
  require(scale[0] >= 1 && scale[1] >= 1 && scale[2] >= 1,
          "upsample: scale must be positive");
  const std::int64_t n = x.dims()[0], ch = x.dims()[1];
  const std::int64_t di = x.dims()[2], hi = x.dims()[3], wi = x.dims()[4];
  const std::int64_t dz = di * scale[0], dy = hi * scale[1], dx = wi * scale[2];

  auto tz = std::make_shared<std::vector<LinTap>>(linear_taps(di, scale[0]));
  auto ty = std::make_shared<std::vector<LinTap>>(linear_taps(hi, scale[1]));
  auto tx = std::make_shared<std::vector<LinTap>>(linear_taps(wi, scale[2]));

  std::vector<double> out(static_cast<std::size_t>(n * ch * dz * dy * dx));
  const double* xp = x.data().data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* src = xp + (b * ch + c) * di * hi * wi;
      double* dst = out.data() + (b * ch + c) * dz * dy * dx;
      for (std::int64_t z = 0; z < dz; ++z) {
        const LinTap& az = (*tz)[static_cast<std::size_t>(z)];
        for (std::int64_t y = 0; y < dy; ++y) {
          const LinTap& ay = (*ty)[static_cast<std::size_t>(y)];
          for (std::int64_t xo = 0; xo < dx; ++xo) {
            const LinTap& ax = (*tx)[static_cast<std::size_t>(xo)];
            double acc = 0.0;
            for (int cz = 0; cz < 2; ++cz) {
              const double wz = cz ? az.w_hi : 1.0 - az.w_hi;
              if (wz == 0.0) continue;
              const std::int64_t iz = cz ? az.hi : az.lo;
              for (int cy = 0; cy < 2; ++cy) {
                const double wy = cy ? ay.w_hi : 1.0 - ay.w_hi;
                if (wy == 0.0) continue;
                const std::int64_t iy = cy ? ay.hi : ay.lo;
                for (int cx = 0; cx < 2; ++cx) {
                  const double wx = cx ? ax.w_hi : 1.0 - ax.w_hi;
                  if (wx == 0.0) continue;
                  const std::int64_t ix = cx ? ax.hi : ax.lo;
                  acc += wz * wy * wx * src[(iz * hi + iy) * wi + ix];
                }
              }
            }
            dst[(z * dy + y) * dx + xo] = acc;
          }
        }
      }
    }

  return make_op(
      {n, ch, dz, dy, dx}, std::move(out), {x},
      [n, ch, di, hi, wi, dz, dy, dx, tz, ty, tx](TensorNode& self) {
        TensorNode& xn = *self.inputs[0];
        if (!xn.needs_grad) return;
        xn.ensure_grad();
        const double* gy = self.grad.data();
#pragma omp parallel for collapse(2) schedule(static) num_threads(num_threads())
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            double* gx = xn.grad.data() + (b * ch + c) * di * hi * wi;
            const double* g = gy + (b * ch + c) * dz * dy * dx;
            for (std::int64_t z = 0; z < dz; ++z) {
              const LinTap& az = (*tz)[static_cast<std::size_t>(z)];
              for (std::int64_t y = 0; y < dy; ++y) {
                const LinTap& ay = (*ty)[static_cast<std::size_t>(y)];
                for (std::int64_t xo = 0; xo < dx; ++xo) {
                  const LinTap& ax = (*tx)[static_cast<std::size_t>(xo)];
                  const double gv = g[(z * dy + y) * dx + xo];
                  if (gv == 0.0) continue;
                  for (int cz = 0; cz < 2; ++cz) {
                    const double wz = cz ? az.w_hi : 1.0 - az.w_hi;
                    if (wz == 0.0) continue;
                    const std::int64_t iz = cz ? az.hi : az.lo;
                    for (int cy = 0; cy < 2; ++cy) {
                      const double wy = cy ? ay.w_hi : 1.0 - ay.w_hi;
                      if (wy == 0.0) continue;
                      const std::int64_t iy = cy ? ay.hi : ay.lo;
                      for (int cx = 0; cx < 2; ++cx) {
                        const double wx = cx ? ax.w_hi : 1.0 - ax.w_hi;
                        if (wx == 0.0) continue;
                        const std::int64_t ix = cx ? ax.hi : ax.lo;
                        gx[(iz * hi + iy) * wi + ix] += wz * wy * wx * gv;
                      }
                    }
                  }
                }
              }
            }
          }
      });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.dims().size() == 5 && b.dims().size() == 5,
          "concat: inputs must be (N, C, D, H, W)");
  for (int i : {0, 2, 3, 4})
    require(a.dims()[static_cast<std::size_t>(i)] ==
                b.dims()[static_cast<std::size_t>(i)],
            "concat: non-channel dims must match");
  const std::int64_t n = a.dims()[0], ca = a.dims()[1], cb = b.dims()[1];
  const std::int64_t spatial = a.dims()[2] * a.dims()[3] * a.dims()[4];
  std::vector<double> out(static_cast<std::size_t>(n * (ca + cb) * spatial));
  for (std::int64_t bi = 0; bi < n; ++bi) {
    std::copy(a.data().begin() + bi * ca * spatial,
              a.data().begin() + (bi + 1) * ca * spatial,
              out.begin() + bi * (ca + cb) * spatial);
    std::copy(b.data().begin() + bi * cb * spatial,
              b.data().begin() + (bi + 1) * cb * spatial,
              out.begin() + (bi * (ca + cb) + ca) * spatial);
  }
  std::vector<std::int64_t> dims = a.dims();
  dims[1] = ca + cb;
  return make_op(std::move(dims), std::move(out), {a, b},
                 [n, ca, cb, spatial](TensorNode& self) {
                   TensorNode& an = *self.inputs[0];
                   TensorNode& bn = *self.inputs[1];
                   const double* gy = self.grad.data();
                   if (an.needs_grad) {
                     an.ensure_grad();
                     for (std::int64_t bi = 0; bi < n; ++bi) {
                       const double* g = gy + bi * (ca + cb) * spatial;
                       double* ga = an.grad.data() + bi * ca * spatial;
                       for (std::int64_t i = 0; i < ca * spatial; ++i)
                         ga[i] += g[i];
                     }
                   }
                   if (bn.needs_grad) {
                     bn.ensure_grad();
                     for (std::int64_t bi = 0; bi < n; ++bi) {
                       const double* g = gy + (bi * (ca + cb) + ca) * spatial;
                       double* gb = bn.grad.data() + bi * cb * spatial;
                       for (std::int64_t i = 0; i < cb * spatial; ++i)
                         gb[i] += g[i];
                     }
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.dims() == b.dims(), "add: shapes must match");
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ap[i] + bp[i];
  return make_op(a.dims(), std::move(out), {a, b}, [](TensorNode& self) {
    const double* gy = self.grad.data();
    const std::int64_t m = self.numel();
    for (int k = 0; k < 2; ++k) {
      TensorNode& t = *self.inputs[static_cast<std::size_t>(k)];
      if (!t.needs_grad) continue;
      t.ensure_grad();
      double* g = t.grad.data();
      for (std::int64_t i = 0; i < m; ++i) g[i] += gy[i];
    }
  });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require(pred.dims() == target.dims(), "l1_loss: shapes must match");
  const std::int64_t m = pred.numel();
  const double* pp = pred.data().data();
  const double* tp = target.data().data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < m; ++i) acc += std::abs(pp[i] - tp[i]);
  const double inv = 1.0 / static_cast<double>(m);
  return make_op({}, {acc * inv}, {pred, target}, [m, inv](TensorNode& self) {
    const double g0 = self.grad[0];
    TensorNode& pn = *self.inputs[0];
    TensorNode& tn = *self.inputs[1];
    const double* pp = pn.data.data();
    const double* tp = tn.data.data();
    const auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (pn.needs_grad) {
      pn.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        pn.grad[static_cast<std::size_t>(i)] += g0 * inv * sign(pp[i] - tp[i]);
    }
    if (tn.needs_grad) {
      tn.ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        tn.grad[static_cast<std::size_t>(i)] -= g0 * inv * sign(pp[i] - tp[i]);
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({}, {acc}, {x}, [](TensorNode& self) {
    TensorNode& xn = *self.inputs[0];
    if (!xn.needs_grad) return;
    xn.ensure_grad();
    const double g0 = self.grad[0];
    for (double& g : xn.grad) g += g0;
  });
}

}  // namespace ctlab
