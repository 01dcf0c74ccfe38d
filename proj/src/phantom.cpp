#include "ctlab/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctlab {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

int sample_count(const PhantomConfig& cfg, Rng& rng) {
  if (cfg.count_cap < 1) throw std::invalid_argument("count_cap must be >= 1");
  return std::min(rng.poisson(cfg.count_mean), cfg.count_cap);
}

Ellipsoid sample_ellipsoid(const PhantomConfig& cfg, Rng& rng) {
  if (!(cfg.axis_range[0] > 0.0) || cfg.axis_range[0] > cfg.axis_range[1])
    throw std::invalid_argument("axis_range must satisfy 0 < lo <= hi");
  Ellipsoid e;
  for (int i = 0; i < 3; ++i)
    e.center[i] = rng.uniform(-cfg.center_range, cfg.center_range);
  for (int i = 0; i < 3; ++i)
    e.semi_axes[i] = rng.uniform(cfg.axis_range[0], cfg.axis_range[1]);
  for (int i = 0; i < 3; ++i) e.euler[i] = rng.uniform(0.0, kTwoPi);
  e.intensity = rng.uniform(cfg.intensity_range[0], cfg.intensity_range[1]);
  return e;
}

std::array<std::array<double, 3>, 3> rotation_matrix(
    const std::array<double, 3>& euler) {
  const double ca = std::cos(euler[0]), sa = std::sin(euler[0]);
  const double cb = std::cos(euler[1]), sb = std::sin(euler[1]);
  const double cg = std::cos(euler[2]), sg = std::sin(euler[2]);
  // R = Rx(g) * Ry(b) * Rz(a), rows act on column vectors (x, y, z).
  return {{{cb * ca, cb * sa, -sb},
           {sg * sb * ca - cg * sa, sg * sb * sa + cg * ca, sg * cb},
           {cg * sb * ca + sg * sa, cg * sb * sa - sg * ca, cg * cb}}};
}

namespace {

struct EllipsoidFrame {
  std::array<std::array<double, 3>, 3> rot;  // world -> ellipsoid
  std::array<double, 3> inv_axes;
  std::array<double, 3> half_extent;  // AABB half widths in world (x, y, z)
};

EllipsoidFrame make_frame(const Ellipsoid& e) {
  EllipsoidFrame f;
  f.rot = rotation_matrix(e.euler);
  for (int i = 0; i < 3; ++i) {
    if (!(e.semi_axes[i] > 0.0))
      throw std::invalid_argument("ellipsoid semi-axes must be positive");
    f.inv_axes[i] = 1.0 / e.semi_axes[i];
  }
  // Support of the ellipsoid along world axis i: ||column i of R^T diag(a)||.
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double m = f.rot[j][i] * e.semi_axes[j];
      s += m * m;
    }
    f.half_extent[i] = std::sqrt(s);
  }
  return f;
}

inline bool inside(const EllipsoidFrame& f, const Ellipsoid& e, double x,
                   double y, double z) {
  const double dx = x - e.center[2];
  const double dy = y - e.center[1];
  const double dz = z - e.center[0];
  double q = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double u =
        (f.rot[i][0] * dx + f.rot[i][1] * dy + f.rot[i][2] * dz) * f.inv_axes[i];
    q += u * u;
  }
  return q <= 1.0;
}

// Voxel center i -> normalized coordinate in [-1, 1].
inline double coord(std::int64_t i, std::int64_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

// First voxel index whose center coordinate >= c, clamped to [0, n].
inline std::int64_t lower_index(double c, std::int64_t n) {
  const double i = ((c + 1.0) * static_cast<double>(n) - 1.0) / 2.0;
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(i)), 0, n);
}

}  // namespace

void rasterize_into(const Ellipsoid& e, Volume3& vol) {
  const EllipsoidFrame f = make_frame(e);
  const auto [D, H, W] = vol.shape;
  const std::int64_t z0 = lower_index(e.center[0] - f.half_extent[2], D);
  const std::int64_t z1 = lower_index(e.center[0] + f.half_extent[2], D);
  const std::int64_t y0 = lower_index(e.center[1] - f.half_extent[1], H);
  const std::int64_t y1 = lower_index(e.center[1] + f.half_extent[1], H);
  const std::int64_t x0 = lower_index(e.center[2] - f.half_extent[0], W);
  const std::int64_t x1 = lower_index(e.center[2] + f.half_extent[0], W);
  const float add = static_cast<float>(e.intensity);
  for (std::int64_t z = z0; z < z1; ++z) {
    const double zc = coord(z, D);
    for (std::int64_t y = y0; y < y1; ++y) {
      const double yc = coord(y, H);
      float* row = &vol.at(z, y, 0);
      for (std::int64_t x = x0; x < x1; ++x) {
        if (inside(f, e, coord(x, W), yc, zc)) row[x] += add;
      }
    }
  }
}

Volume3 rasterize(const Ellipsoid& e, const Shape3& shape) {
  Volume3 vol(shape[0], shape[1], shape[2]);
  rasterize_into(e, vol);
  return vol;
}

void apply_cylinder_mask(Volume3& v) {
  const auto [D, H, W] = v.shape;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  const double r = static_cast<double>(std::min(H, W)) / 2.0;
  const double r2 = r * r;
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx > r2) {
        for (std::int64_t z = 0; z < D; ++z) v.at(z, y, x) = 0.0f;
      }
    }
}

namespace {

Volume3 generate_phantom_counted(const PhantomConfig& cfg, Rng& rng,
                                 int& count_out) {
  Volume3 vol(cfg.shape[0], cfg.shape[1], cfg.shape[2]);
  const int k = sample_count(cfg, rng);
  count_out = k;
  for (int i = 0; i < k; ++i) {
    const Ellipsoid e = sample_ellipsoid(cfg, rng);
    rasterize_into(e, vol);
  }
  float maxval = 0.0f;
  for (float& v : vol.data) {
    if (v < 0.0f) v = 0.0f;
    maxval = std::max(maxval, v);
  }
  if (maxval > 0.0f) {
    for (float& v : vol.data) v /= maxval;
  }
  apply_cylinder_mask(vol);
  return vol;
}

}  // namespace

Volume3 generate_phantom(const PhantomConfig& cfg, Rng& rng) {
  int count = 0;
  return generate_phantom_counted(cfg, rng, count);
}

void generate_dataset(const PhantomConfig& cfg, const std::string& root,
                      const DatasetSplit& split, int threads) {
  namespace fs = std::filesystem;
  const int total = split.n_train + split.n_val + split.n_test;
  if (total < 1) throw std::invalid_argument("dataset needs >= 1 volume");
  fs::create_directories(root);
  for (const char* s : {"train", "val", "test"})
    fs::create_directories(fs::path(root) / s);

  struct Entry {
    std::string stem;
    std::string split_name;
    std::uint64_t seed;
    int count;
  };
  std::vector<Entry> entries(static_cast<std::size_t>(total));
  const Rng base(cfg.seed);

  const auto split_of = [&](int i) -> std::pair<std::string, int> {
    if (i < split.n_train) return {"train", i};
    if (i < split.n_train + split.n_val) return {"val", i - split.n_train};
    return {"test", i - split.n_train - split.n_val};
  };

  std::string first_error;
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : 1)
  for (int i = 0; i < total; ++i) {
    try {
      Rng stream = base.child(static_cast<std::uint64_t>(i));
      const std::uint64_t vol_seed = stream.seed();
      int count = 0;
      Volume3 vol = generate_phantom_counted(cfg, stream, count);
      const auto [split_name, idx] = split_of(i);
      char name[64];
      std::snprintf(name, sizeof(name), "%s/vol_%03d", split_name.c_str(), idx);
      save_volume(vol, (fs::path(root) / name).string());
      entries[static_cast<std::size_t>(i)] =
          Entry{name, split_name, vol_seed, count};
    } catch (const std::exception& e) {
#pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);

  nlohmann::json manifest;
  for (const auto& e : entries)
    manifest[e.stem] = {{"split", e.split_name},
                        {"seed", e.seed},
                        {"ellipsoid_count", e.count}};
  std::ofstream out(fs::path(root) / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest under " + root);
  out << manifest.dump(2) << "\n";
}

}  // namespace ctlab
