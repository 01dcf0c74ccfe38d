#include <cmath>

#include "ctlab/model.hpp"
#include "ctlab/nn_ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctlab;
using ctlab::testing::TempDir;
using ctlab::testing::random_tensor;

namespace {

// Independent per-layer enumeration of learnable parameters: conv w + b and
// batchnorm gamma + beta for every block in the channel plan.
std::int64_t count_oracle(int dims, int depth, std::int64_t base) {
  const std::int64_t k = dims == 3 ? 27 : 9;
  const auto width = [&](int level) { return base << level; };
  std::int64_t total = 0;
  const auto conv_bn = [&](std::int64_t in, std::int64_t out,
                           std::int64_t kernel) {
    total += out * in * kernel + out;  // conv w + b
    total += 2 * out;                  // bn gamma + beta
  };
  for (int l = 0; l < depth; ++l) {
    conv_bn(l == 0 ? 1 : width(l - 1), width(l), k);
    conv_bn(width(l), width(l), k);
  }
  conv_bn(width(depth - 1), width(depth), k);
  conv_bn(width(depth), width(depth), k);
  for (int l = 0; l < depth; ++l) conv_bn(width(l), width(l), 1);  // skips
  for (int l = depth - 1; l >= 0; --l) {
    conv_bn(width(l + 1) + width(l), width(l), k);
    conv_bn(width(l), width(l), k);
  }
  conv_bn(width(0), 1, 1);  // head
  return total;
}

// Zero the head conv and reset its batchnorm to identity stats so the
// network output equals the global shortcut exactly.
void zero_head(ModelParams& params) {
  for (double& v : params.at("head.conv.w").data()) v = 0.0;
  for (double& v : params.at("head.conv.b").data()) v = 0.0;
  for (double& v : params.at("head.bn.gamma").data()) v = 1.0;
  for (double& v : params.at("head.bn.beta").data()) v = 0.0;
  for (double& v : params.at("head.bn.running_mean").data()) v = 0.0;
  for (double& v : params.at("head.bn.running_var").data()) v = 1.0;
}

}  // namespace

TEST_CASE("count_params: the default 3D network has 5,909,459 parameters") {
  ModelSpec spec;  // dims 3, depth 4, base 16
  Rng rng(0);
  const ModelParams params = build(spec, rng);
  CHECK(count_params(params) == 5909459);
  CHECK(count_oracle(3, 4, 16) == 5909459);
}

TEST_CASE("count_params: the 2D plan lands near one third of the 3D count") {
  ModelSpec spec;
  spec.dims = 2;
  Rng rng(0);
  const ModelParams params = build(spec, rng);
  const std::int64_t n2d = count_params(params);
  CHECK(n2d == count_oracle(2, 4, 16));
  CHECK(n2d == 1987763);
  const double ratio = 5909459.0 / static_cast<double>(n2d);
  CHECK(ratio > 2.5);
  CHECK(ratio < 3.5);
}

TEST_CASE("count_params: tiny spec verified by hand enumeration") {
  ModelSpec spec;
  spec.depth = 1;
  spec.base_filters = 2;
  Rng rng(0);
  const ModelParams params = build(spec, rng);
  // enc0 174 + bottleneck 672 + skip 10 + dec0 444 + head 5.
  CHECK(count_params(params) == 1305);
  CHECK(count_oracle(3, 1, 2) == 1305);
}

TEST_CASE("count_params: the head batchnorm contributes the final 2") {
  ModelSpec spec;
  Rng rng(0);
  const ModelParams params = build(spec, rng);
  const std::int64_t without_head_bn =
      count_params(params) - params.at("head.bn.gamma").numel() -
      params.at("head.bn.beta").numel();
  CHECK(without_head_bn == 5909457);
}

TEST_CASE("count_params: single 3^3 conv with bias holds 28 values") {
  // 27 weights + 1 bias; checked through the tensor shapes the builder makes.
  ModelSpec spec;
  spec.depth = 1;
  spec.base_filters = 1;
  Rng rng(0);
  const ModelParams params = build(spec, rng);
  CHECK(params.at("enc0.conv1.w").numel() + params.at("enc0.conv1.b").numel() ==
        28);
}

TEST_CASE("forward: zero-head network is the identity in eval mode") {
  ModelSpec spec;
  spec.depth = 2;
  spec.base_filters = 2;
  Rng rng(21);
  ModelParams params = build(spec, rng);
  zero_head(params);
  Tensor x = random_tensor({2, 1, 8, 8, 8}, rng, 0.0, 1.0);
  NoGradGuard off;
  Tensor y = forward(spec, params, x, /*train=*/false);
  CHECK(y.data() == x.data());  // bit-exact residual passthrough
}

TEST_CASE("forward: shape preservation and divisibility errors") {
  ModelSpec spec;  // depth 4
  spec.base_filters = 2;
  Rng rng(22);
  ModelParams params = build(spec, rng);
  NoGradGuard off;
  Tensor x16 = random_tensor({1, 1, 16, 16, 16}, rng);
  CHECK(forward(spec, params, x16, false).dims() == x16.dims());
  Tensor x24 = random_tensor({1, 1, 24, 24, 24}, rng);
  CHECK_THROWS(forward(spec, params, x24, false));  // 24 % 16 != 0
}

TEST_CASE("forward: full-size 128^3 volume passes through the default net") {
  ModelSpec spec;
  Rng rng(23);
  ModelParams params = build(spec, rng);
  zero_head(params);  // make the expected output checkable
  Tensor x = random_tensor({1, 1, 128, 128, 128}, rng, 0.0, 1.0);
  set_num_threads(2);
  NoGradGuard off;
  Tensor y = forward(spec, params, x, false);
  set_num_threads(1);
  CHECK(y.dims() == x.dims());
  CHECK(y.data() == x.data());
}

TEST_CASE("forward: 2D spec consumes single slices") {
  ModelSpec spec;
  spec.dims = 2;
  spec.depth = 2;
  spec.base_filters = 2;
  Rng rng(24);
  ModelParams params = build(spec, rng);
  NoGradGuard off;
  Tensor slice = random_tensor({3, 1, 1, 16, 16}, rng);
  CHECK(forward(spec, params, slice, false).dims() == slice.dims());
  Tensor volume = random_tensor({1, 1, 4, 16, 16}, rng);
  CHECK_THROWS(forward(spec, params, volume, false));
}

TEST_CASE("forward: translation covariance in the interior") {
  ModelSpec spec;
  spec.depth = 2;
  spec.base_filters = 2;
  Rng rng(25);
  ModelParams params = build(spec, rng);
  const std::int64_t shift = 4;  // 2^depth
  const std::int64_t n = 24;
  Tensor x = random_tensor({1, 1, n, n, n}, rng, 0.0, 1.0);
  Tensor xs = Tensor::zeros({1, 1, n, n, n});
  for (std::int64_t z = shift; z < n; ++z)
    for (std::int64_t y = shift; y < n; ++y)
      for (std::int64_t xx = shift; xx < n; ++xx)
        xs.data()[static_cast<std::size_t>((z * n + y) * n + xx)] =
            x.data()[static_cast<std::size_t>(((z - shift) * n + (y - shift)) * n +
                                              (xx - shift))];
  NoGradGuard off;
  const Tensor y1 = forward(spec, params, x, false);
  const Tensor y2 = forward(spec, params, xs, false);
  const std::int64_t reach = receptive_field(spec).reach[0];
  for (std::int64_t z = reach + shift; z < n - reach; ++z)
    for (std::int64_t y = reach + shift; y < n - reach; ++y)
      for (std::int64_t xx = reach + shift; xx < n - reach; ++xx) {
        const double a = y2.data()[static_cast<std::size_t>((z * n + y) * n + xx)];
        const double b =
            y1.data()[static_cast<std::size_t>(((z - shift) * n + (y - shift)) * n +
                                               (xx - shift))];
        CHECK(a == doctest::Approx(b).epsilon(1e-5));
      }
}

TEST_CASE("receptive_field: composition basics") {
  // Single conv: extent 3. Two convs: extent 5. Exercised through a спес
  // with depth 1 by checking the published composition identities hold for
  // the layer windows the walker uses.
  ModelSpec one;
  one.depth = 1;
  one.base_filters = 1;
  const ReceptiveField rf = receptive_field(one);
  // depth-1 walk: dec convs (2), upsample, bottleneck convs (2), pool,
  // enc convs (2), residual union. Interval arithmetic gives [-10, 9].
  CHECK(rf.extent[0] == 20);
  CHECK(rf.reach[0] == 10);
  CHECK(rf.extent[1] == rf.extent[0]);
  CHECK(rf.extent[2] == rf.extent[0]);
  CHECK_FALSE(rf.stride_history.empty());
}

TEST_CASE("receptive_field: empirical dependency footprint matches exactly") {
  // Perturb every input position along one axis and record which ones move
  // the centered output voxel (eval mode, so batchnorm is pointwise).
  for (const int depth : {1, 2}) {
    CAPTURE(depth);
    ModelSpec spec;
    spec.depth = depth;
    spec.base_filters = 2;
    Rng rng(26);
    ModelParams params = build(spec, rng);
    const std::int64_t n = 64, yc = 2, xc = 2;
    const std::int64_t zc = n / 2;
    Tensor x = random_tensor({1, 1, n, 4, 4}, rng, 0.1, 0.9);
    NoGradGuard off;
    const Tensor base = forward(spec, params, x, false);
    const double base_val = base.data()[static_cast<std::size_t>(
        (zc * 4 + yc) * 4 + xc)];

    const ReceptiveField rf = receptive_field(spec);
    std::vector<std::int64_t> hits;
    for (std::int64_t z = 0; z < n; ++z) {
      const std::size_t idx = static_cast<std::size_t>((z * 4 + yc) * 4 + xc);
      const double keep = x.data()[idx];
      x.data()[idx] += 0.37;
      const Tensor out = forward(spec, params, x, false);
      x.data()[idx] = keep;
      const double v =
          out.data()[static_cast<std::size_t>((zc * 4 + yc) * 4 + xc)];
      if (std::abs(v - base_val) > 1e-12) hits.push_back(z);
    }
    REQUIRE(!hits.empty());
    const std::int64_t lo = hits.front() - zc;
    const std::int64_t hi = hits.back() - zc;
    CHECK(static_cast<std::int64_t>(hits.size()) == hi - lo + 1);  // contiguous
    CHECK(hi - lo + 1 == rf.extent[0]);
    CHECK(std::max(-lo, hi) == rf.reach[0]);
  }
}

TEST_CASE("receptive_field: default 3D analytic footprint recorded") {
  // The commonly quoted figure for this architecture is 140 voxels per axis,
  // which matches the encoder chain alone; composing the full graph
  // (decoder and skips included) gives 220 with a one-sided reach of 110.
  // The stitcher takes an explicit margin rather than trusting either value.
  const ReceptiveField rf = receptive_field(ModelSpec{});
  CHECK(rf.extent == std::array<std::int64_t, 3>{220, 220, 220});
  CHECK(rf.reach == std::array<std::int64_t, 3>{110, 110, 110});
  CHECK(rf.extent[0] != 140);

  ModelSpec flat;
  flat.dims = 2;
  const ReceptiveField rf2 = receptive_field(flat);
  CHECK(rf2.extent[0] == 1);  // no cross-slice coupling in the 2D baseline
  CHECK(rf2.extent[1] == 220);
}

TEST_CASE("checkpoint: round-trip is bit-exact and validates its manifest") {
  TempDir dir("ckpt");
  ModelSpec spec;
  spec.depth = 2;
  spec.base_filters = 3;
  Rng rng(27);
  ModelParams params = build(spec, rng);
  const std::string stem = (dir.path() / "model").string();
  save_checkpoint(params, spec, stem);

  auto [spec2, params2] = load_checkpoint(stem);
  CHECK(spec2.depth == 2);
  CHECK(spec2.base_filters == 3);
  REQUIRE(params2.order == params.order);
  for (const auto& name : params.order)
    CHECK(params2.at(name).data() == params.at(name).data());

  // A loaded checkpoint forward-propagates.
  NoGradGuard off;
  Tensor x = random_tensor({1, 1, 8, 8, 8}, rng);
  CHECK(forward(spec2, params2, x, false).dims() == x.dims());
}

TEST_CASE("checkpoint: truncated payloads and edited manifests fail to load") {
  TempDir dir("ckpt_bad");
  ModelSpec spec;
  spec.depth = 1;
  spec.base_filters = 1;
  Rng rng(28);
  ModelParams params = build(spec, rng);
  const std::string stem = (dir.path() / "model").string();

  SUBCASE("truncated payload") {
    save_checkpoint(params, spec, stem);
    const auto size = std::filesystem::file_size(stem + ".raw");
    std::filesystem::resize_file(stem + ".raw", size - 8);
    CHECK_THROWS(load_checkpoint(stem));
  }
  SUBCASE("shape edited to mismatch") {
    save_checkpoint(params, spec, stem);
    std::ifstream in(stem + ".json");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("[2,1,3,3,3]");
    if (pos != std::string::npos) text.replace(pos, 11, "[2,1,3,3,1]");
    std::ofstream out(stem + ".json", std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS(load_checkpoint(stem));
  }
  SUBCASE("format version mismatch") {
    save_checkpoint(params, spec, stem);
    std::ifstream in(stem + ".json");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("ctlab-checkpoint-1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 18, "ctlab-checkpoint-9");
    std::ofstream out(stem + ".json", std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS(load_checkpoint(stem));
  }
}
