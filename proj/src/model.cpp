#include "ctlab/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ctlab/nn_ops.hpp"
#include "json.hpp"

namespace ctlab {

void ModelParams::add(const std::string& name, Tensor t) {
  if (tensors.count(name)) throw std::logic_error("duplicate parameter " + name);
  order.push_back(name);
  tensors.emplace(name, std::move(t));
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::logic_error("missing parameter " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::logic_error("missing parameter " + name);
  return it->second;
}

bool is_learnable(const std::string& name) {
  return !name.ends_with(".running_mean") && !name.ends_with(".running_var");
}

namespace {

struct LayerPlan {
  std::string name;
  std::int64_t in_ch, out_ch;
  std::array<std::int64_t, 3> kernel;
};

// The shared architecture walk: encoder levels, bottleneck, skip blocks,
// decoder levels, head. Channel widths double per level from base_filters.
std::vector<LayerPlan> conv_layers(const ModelSpec& spec) {
  if (spec.dims != 2 && spec.dims != 3)
    throw std::invalid_argument("ModelSpec.dims must be 2 or 3");
  if (spec.depth < 1 || spec.base_filters < 1)
    throw std::invalid_argument("ModelSpec depth/base_filters must be >= 1");
  const std::int64_t kz = spec.dims == 3 ? 3 : 1;
  const std::array<std::int64_t, 3> k3{kz, 3, 3};
  const std::array<std::int64_t, 3> k1{1, 1, 1};
  const auto width = [&](int level) {
    return static_cast<std::int64_t>(spec.base_filters) << level;
  };

  std::vector<LayerPlan> layers;
  for (int l = 0; l < spec.depth; ++l) {
    const std::int64_t in = l == 0 ? 1 : width(l - 1);
    const std::string p = "enc" + std::to_string(l);
    layers.push_back({p + ".conv1", in, width(l), k3});
    layers.push_back({p + ".conv2", width(l), width(l), k3});
  }
  layers.push_back({"bott.conv1", width(spec.depth - 1), width(spec.depth), k3});
  layers.push_back({"bott.conv2", width(spec.depth), width(spec.depth), k3});
  for (int l = 0; l < spec.depth; ++l)
    layers.push_back(
        {"skip" + std::to_string(l) + ".conv", width(l), width(l), k1});
  for (int l = spec.depth - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    // concat sees the upsampled deeper level (2x this width) plus the skip.
    layers.push_back({p + ".conv1", width(l + 1) + width(l), width(l), k3});
    layers.push_back({p + ".conv2", width(l), width(l), k3});
  }
  layers.push_back({"head.conv", width(0), 1, k1});
  return layers;
}

std::string bn_of(const std::string& conv_name) {
  // enc0.conv1 -> enc0.bn1, skip0.conv -> skip0.bn, head.conv -> head.bn
  std::string s = conv_name;
  const auto pos = s.rfind(".conv");
  return s.substr(0, pos) + ".bn" + s.substr(pos + 5);
}

}  // namespace

ModelParams build(const ModelSpec& spec, Rng& rng) {
  ModelParams params;
  for (const LayerPlan& l : conv_layers(spec)) {
    const std::int64_t fan_in = l.in_ch * l.kernel[0] * l.kernel[1] * l.kernel[2];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(
        static_cast<std::size_t>(l.out_ch * fan_in));
    for (double& v : w) v = rng.normal() * std_dev;
    params.add(l.name + ".w",
               Tensor::from_data({l.out_ch, l.in_ch, l.kernel[0], l.kernel[1],
                                  l.kernel[2]},
                                 std::move(w), true));
    params.add(l.name + ".b", Tensor::zeros({l.out_ch}, true));
    const std::string bn = bn_of(l.name);
    params.add(bn + ".gamma", Tensor::full({l.out_ch}, 1.0, true));
    params.add(bn + ".beta", Tensor::zeros({l.out_ch}, true));
    params.add(bn + ".running_mean", Tensor::zeros({l.out_ch}, false));
    params.add(bn + ".running_var", Tensor::full({l.out_ch}, 1.0, false));
  }
  return params;
}

std::int64_t count_params(const ModelParams& params) {
  std::int64_t n = 0;
  for (const auto& name : params.order)
    if (is_learnable(name)) n += params.at(name).numel();
  return n;
}

std::array<std::int64_t, 3> spatial_divisor(const ModelSpec& spec) {
  const std::int64_t f = std::int64_t{1} << spec.depth;
  return {spec.dims == 3 ? f : 1, f, f};
}

Tensor forward(const ModelSpec& spec, ModelParams& params, const Tensor& x,
               bool train) {
  if (x.dims().size() != 5 || x.dims()[1] != 1)
    throw std::invalid_argument("forward: input must be (N, 1, D, H, W)");
  if (spec.dims == 2 && x.dims()[2] != 1)
    throw std::invalid_argument("forward: 2D model requires D == 1");
  const auto div = spatial_divisor(spec);
  for (int i = 0; i < 3; ++i)
    if (x.dims()[static_cast<std::size_t>(i + 2)] % div[static_cast<std::size_t>(i)] != 0)
      throw std::invalid_argument(
          "forward: spatial dims must be divisible by 2^depth");

  const std::array<int, 3> pool_k{spec.dims == 3 ? 2 : 1, 2, 2};
  const std::array<int, 3> up_s = pool_k;

  const auto block = [&](Tensor h, const std::string& conv_name) {
    h = conv3d(h, params.at(conv_name + ".w"), params.at(conv_name + ".b"));
    const std::string bn = bn_of(conv_name);
    h = batchnorm(h, params.at(bn + ".gamma"), params.at(bn + ".beta"),
                  params.at(bn + ".running_mean"), params.at(bn + ".running_var"),
                  train, spec.bn_momentum, spec.bn_eps);
    return leaky_relu(h, spec.leaky_slope);
  };

  std::vector<Tensor> feats;
  Tensor h = x;
  for (int l = 0; l < spec.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    h = block(block(h, p + ".conv1"), p + ".conv2");
    feats.push_back(h);
    h = maxpool(h, pool_k);
  }
  h = block(block(h, "bott.conv1"), "bott.conv2");
  for (int l = spec.depth - 1; l >= 0; --l) {
    h = upsample_linear(h, up_s);
    const Tensor skip =
        block(feats[static_cast<std::size_t>(l)], "skip" + std::to_string(l) + ".conv");
    h = concat_channels(h, skip);
    const std::string p = "dec" + std::to_string(l);
    h = block(block(h, p + ".conv1"), p + ".conv2");
  }
  h = conv3d(h, params.at("head.conv.w"), params.at("head.conv.b"));
  h = batchnorm(h, params.at("head.bn.gamma"), params.at("head.bn.beta"),
                params.at("head.bn.running_mean"), params.at("head.bn.running_var"),
                train, spec.bn_momentum, spec.bn_eps);
  if (spec.global_residual) h = add(h, x);
  return h;
}

namespace {

struct Iv {
  std::int64_t lo, hi;
};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -(((-a) + b - 1) / b);
}

Iv conv_back(Iv o, std::int64_t k) {
  const std::int64_t p = (k - 1) / 2;
  return {o.lo - p, o.hi + p};
}

Iv pool_back(Iv o, std::int64_t k) {
  return {o.lo * k, o.hi * k + (k - 1)};
}

// Half-pixel linear upsampling by s: output i draws on source indices
// floor((2i + 1 - s) / (2s)) and that + 1 (borders clamp; interior analysis).
Iv up_back(Iv o, std::int64_t s) {
  if (s == 1) return o;
  return {floor_div(2 * o.lo + 1 - s, 2 * s),
          floor_div(2 * o.hi + 1 - s, 2 * s) + 1};
}

Iv union_iv(Iv a, Iv b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

}  // namespace

ReceptiveField receptive_field(const ModelSpec& spec) {
  ReceptiveField rf{};
  const int L = spec.depth;
  for (int axis = 0; axis < 3; ++axis) {
    const bool active = axis > 0 || spec.dims == 3;
    const std::int64_t k = active ? 3 : 1;
    const std::int64_t p = active ? 2 : 1;

    Iv d{0, 0};
    std::vector<Iv> skip_demand(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      d = conv_back(conv_back(d, k), k);  // dec-l convs
      skip_demand[static_cast<std::size_t>(l)] = d;
      d = up_back(d, p);
    }
    d = conv_back(conv_back(d, k), k);  // bottleneck convs
    Iv dem = pool_back(d, p);           // onto enc feature (L-1)
    for (int l = L - 1; l >= 0; --l) {
      dem = union_iv(dem, skip_demand[static_cast<std::size_t>(l)]);
      dem = conv_back(conv_back(dem, k), k);  // enc-l convs
      if (l > 0) dem = pool_back(dem, p);
    }
    if (spec.global_residual) dem = union_iv(dem, Iv{0, 0});
    rf.extent[static_cast<std::size_t>(axis)] = dem.hi - dem.lo + 1;
    rf.reach[static_cast<std::size_t>(axis)] = std::max(-dem.lo, dem.hi);
  }
  std::int64_t stride = 1;
  rf.stride_history.emplace_back("input", stride);
  for (int l = 0; l < L; ++l) {
    rf.stride_history.emplace_back("enc" + std::to_string(l), stride);
    stride *= 2;
    rf.stride_history.emplace_back("pool" + std::to_string(l), stride);
  }
  rf.stride_history.emplace_back("bott", stride);
  for (int l = L - 1; l >= 0; --l) {
    stride /= 2;
    rf.stride_history.emplace_back("dec" + std::to_string(l), stride);
  }
  return rf;
}

namespace {
constexpr const char* kCheckpointFormat = "ctlab-checkpoint-1";
}

void save_checkpoint(const ModelParams& params, const ModelSpec& spec,
                     const std::string& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["dtype"] = "f64le";
  j["spec"] = {{"dims", spec.dims},
               {"depth", spec.depth},
               {"base_filters", spec.base_filters},
               {"global_residual", spec.global_residual},
               {"leaky_slope", spec.leaky_slope},
               {"bn_eps", spec.bn_eps},
               {"bn_momentum", spec.bn_momentum}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& name : params.order) {
    const Tensor& t = params.at(name);
    tensors.push_back({{"name", name}, {"shape", t.dims()}});
  }
  j["tensors"] = std::move(tensors);

  std::ofstream meta(path + ".json", std::ios::trunc);
  if (!meta) throw std::runtime_error("cannot write " + path + ".json");
  meta << j.dump(2) << "\n";

  std::ofstream raw(path + ".raw", std::ios::binary | std::ios::trunc);
  if (!raw) throw std::runtime_error("cannot write " + path + ".raw");
  for (const auto& name : params.order) {
    const auto& d = params.at(name).data();
    raw.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!raw) throw std::runtime_error("write failed: " + path + ".raw");
}

std::pair<ModelSpec, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot open " + path + ".json");
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " +
                             std::string(e.what()));
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw std::runtime_error("checkpoint format version mismatch");
  if (j.value("dtype", "") != "f64le")
    throw std::runtime_error("checkpoint dtype mismatch");

  ModelSpec spec;
  const auto& js = j.at("spec");
  spec.dims = js.at("dims").get<int>();
  spec.depth = js.at("depth").get<int>();
  spec.base_filters = js.at("base_filters").get<int>();
  spec.global_residual = js.at("global_residual").get<bool>();
  spec.leaky_slope = js.at("leaky_slope").get<double>();
  spec.bn_eps = js.at("bn_eps").get<double>();
  spec.bn_momentum = js.at("bn_momentum").get<double>();

  // The architecture defines the catalog; the manifest must agree with it.
  Rng dummy(0);
  ModelParams params = build(spec, dummy);
  const auto& tensors = j.at("tensors");
  if (tensors.size() != params.order.size())
    throw std::runtime_error("checkpoint tensor list does not match spec");
  std::int64_t total = 0;
  for (std::size_t i = 0; i < params.order.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    if (name != params.order[i])
      throw std::runtime_error("checkpoint tensor order mismatch at " + name);
    const auto shape = tensors[i].at("shape").get<std::vector<std::int64_t>>();
    if (shape != params.at(name).dims())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    total += params.at(name).numel();
  }

  std::ifstream raw(path + ".raw", std::ios::binary | std::ios::ate);
  if (!raw) throw std::runtime_error("cannot open " + path + ".raw");
  if (static_cast<std::int64_t>(raw.tellg()) !=
      total * static_cast<std::int64_t>(sizeof(double)))
    throw std::runtime_error("checkpoint payload truncated or oversized");
  raw.seekg(0);
  for (const auto& name : params.order) {
    auto& d = params.at(name).data();
    raw.read(reinterpret_cast<char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!raw) throw std::runtime_error("checkpoint payload read failed");
  return {spec, std::move(params)};
}

}  // namespace ctlab
