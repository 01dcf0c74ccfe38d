#include <cmath>
#include <fstream>

#include "ctlab/phantom.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace ctlab;
using ctlab::testing::TempDir;

namespace {

// Truncated-Poisson oracle: pmf by direct recurrence, E[min(P, cap)] and
// P(P >= cap) by summation.
struct TruncatedPoisson {
  double expectation = 0.0;
  double cap_probability = 0.0;
};

TruncatedPoisson truncated_poisson(double mean, int cap) {
  TruncatedPoisson out;
  double p = std::exp(-mean);  // pmf(0)
  double below_cap = 0.0;
  for (int k = 0; k < cap; ++k) {
    out.expectation += k * p;
    below_cap += p;
    p *= mean / static_cast<double>(k + 1);
  }
  out.cap_probability = 1.0 - below_cap;
  out.expectation += cap * out.cap_probability;
  return out;
}

// Independent membership test: assemble Q = R^T diag(1/a^2) R and evaluate
// the quadratic form directly.
bool inside_oracle(const Ellipsoid& e, double xc, double yc, double zc) {
  const auto r = rotation_matrix(e.euler);
  double q[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        q[i][j] += r[k][i] * r[k][j] / (e.semi_axes[k] * e.semi_axes[k]);
  const double d[3] = {xc - e.center[2], yc - e.center[1], zc - e.center[0]};
  double acc = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) acc += d[i] * q[i][j] * d[j];
  return acc <= 1.0;
}

double voxel_coord(std::int64_t i, std::int64_t n) {
  return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

}  // namespace

TEST_CASE("sample_count: cap is never exceeded and the mean matches the "
          "truncated-Poisson oracle") {
  PhantomConfig cfg;
  cfg.count_mean = 114.0;
  cfg.count_cap = 200;
  Rng rng(2024);
  const int n = 100000;
  double mean = 0.0;
  int cap_hits = 0;
  for (int i = 0; i < n; ++i) {
    const int k = sample_count(cfg, rng);
    CHECK(k >= 0);
    CHECK(k <= 200);
    mean += k;
    if (k >= 200) ++cap_hits;
  }
  mean /= n;
  const TruncatedPoisson oracle = truncated_poisson(114.0, 200);
  CHECK(std::abs(mean - oracle.expectation) < 0.5);

  // Cap-hit frequency within 3 sigma of the binomial prediction.
  const double expected_hits = n * oracle.cap_probability;
  const double sigma =
      std::sqrt(n * oracle.cap_probability * (1.0 - oracle.cap_probability));
  CHECK(std::abs(cap_hits - expected_hits) <= 3.0 * sigma + 1.0);
}

TEST_CASE("sample_count: zero mean always yields zero") {
  PhantomConfig cfg;
  cfg.count_mean = 0.0;
  Rng rng(5);
  for (int i = 0; i < 100; ++i) CHECK(sample_count(cfg, rng) == 0);
}

TEST_CASE("rasterize: unit sphere covers every voxel center of a 2^3 grid") {
  Ellipsoid e;
  e.semi_axes = {1.0, 1.0, 1.0};
  e.intensity = 0.75;
  const Volume3 v = rasterize(e, {2, 2, 2});
  for (float x : v.data) CHECK(x == doctest::Approx(0.75));
}

TEST_CASE("rasterize: zero intensity gives a zero volume") {
  Ellipsoid e;
  e.semi_axes = {0.5, 0.4, 0.3};
  e.euler = {0.3, 0.9, 1.7};
  e.intensity = 0.0;
  const Volume3 v = rasterize(e, {8, 8, 8});
  for (float x : v.data) CHECK(x == 0.0f);
}

TEST_CASE("rasterize: rotation by 2 pi reproduces the unrotated volume") {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  Ellipsoid e;
  e.center = {0.1, -0.2, 0.3};
  e.semi_axes = {0.5, 0.3, 0.4};
  e.intensity = 1.0;
  const Volume3 base = rasterize(e, {16, 16, 16});
  for (int axis = 0; axis < 3; ++axis) {
    Ellipsoid r = e;
    r.euler[static_cast<std::size_t>(axis)] = kTwoPi;
    const Volume3 rot = rasterize(r, {16, 16, 16});
    CHECK(rot.data == base.data);
  }
}

TEST_CASE("rasterize: agrees with the quadratic-form oracle on random "
          "ellipsoids") {
  Rng rng(77);
  PhantomConfig cfg;
  cfg.shape = {16, 16, 16};
  for (int trial = 0; trial < 100; ++trial) {
    const Ellipsoid e = sample_ellipsoid(cfg, rng);
    const Volume3 v = rasterize(e, cfg.shape);
    for (std::int64_t z = 0; z < 16; ++z)
      for (std::int64_t y = 0; y < 16; ++y)
        for (std::int64_t x = 0; x < 16; ++x) {
          const bool in = inside_oracle(e, voxel_coord(x, 16),
                                        voxel_coord(y, 16), voxel_coord(z, 16));
          const float expected = in ? static_cast<float>(e.intensity) : 0.0f;
          CHECK(v.at(z, y, x) == doctest::Approx(expected));
        }
  }
}

TEST_CASE("generate_phantom: range, mask and determinism") {
  PhantomConfig cfg;
  cfg.shape = {32, 32, 32};
  cfg.count_mean = 40.0;
  Rng a(11), b(11);
  const Volume3 va = generate_phantom(cfg, a);
  const Volume3 vb = generate_phantom(cfg, b);
  CHECK(va.data == vb.data);

  float maxval = 0.0f;
  for (float x : va.data) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
    maxval = std::max(maxval, x);
  }
  CHECK(maxval == 1.0f);

  const double cy = (32.0 - 1.0) / 2.0, cx = cy, r2 = 16.0 * 16.0;
  for (std::int64_t z = 0; z < 32; ++z)
    for (std::int64_t y = 0; y < 32; ++y)
      for (std::int64_t x = 0; x < 32; ++x) {
        const double dy = y - cy, dx = x - cx;
        if (dy * dy + dx * dx > r2) CHECK(va.at(z, y, x) == 0.0f);
      }
}

TEST_CASE("generate_dataset: minimal run, manifest and regeneration") {
  TempDir dir("phantom_ds");
  PhantomConfig cfg;
  cfg.shape = {8, 8, 8};
  cfg.count_mean = 10.0;
  cfg.seed = 321;

  SUBCASE("single training volume") {
    generate_dataset(cfg, dir.str(), {1, 0, 0});
    CHECK(std::filesystem::exists(dir.path() / "train/vol_000.raw"));
    CHECK(std::filesystem::exists(dir.path() / "manifest.json"));
  }

  SUBCASE("full split with per-volume seeds that regenerate bit-identically") {
    generate_dataset(cfg, dir.str(), {3, 1, 2}, /*threads=*/2);
    std::ifstream mf(dir.path() / "manifest.json");
    nlohmann::json manifest;
    mf >> manifest;
    REQUIRE(manifest.size() == 6);
    int train = 0, val = 0, test = 0;
    for (const auto& [stem, meta] : manifest.items()) {
      const std::string split = meta.at("split").get<std::string>();
      if (split == "train") ++train;
      if (split == "val") ++val;
      if (split == "test") ++test;
      Rng stream(meta.at("seed").get<std::uint64_t>());
      const Volume3 regen = generate_phantom(cfg, stream);
      const Volume3 disk = load_volume((dir.path() / stem).string());
      CHECK(regen.data == disk.data);
      CHECK(meta.at("ellipsoid_count").get<int>() >= 0);
    }
    CHECK(train == 3);
    CHECK(val == 1);
    CHECK(test == 2);
  }
}
