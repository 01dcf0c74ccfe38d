#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctlab/rng.hpp"
#include "ctlab/tensor.hpp"

namespace ctlab {

// Encoder/decoder denoiser description. `depth` counts encoder levels; one
// bottleneck level sits below the deepest. Channel width doubles per level
// starting at `base_filters`. Skip paths run through a 1x1x1 conv block that
// preserves the encoder level's channel count, and a global shortcut adds the
// network input to the head output.
struct ModelSpec {
  int dims = 3;  // 3 -> volumetric kernels, 2 -> single-slice (depth-1) kernels
  int depth = 4;
  int base_filters = 16;
  bool global_residual = true;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

// Named parameter store in a fixed architecture order. Running statistics
// (".running_mean"/".running_var") live here too but are not learnable.
struct ModelParams {
  std::vector<std::string> order;
  std::unordered_map<std::string, Tensor> tensors;

  void add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

bool is_learnable(const std::string& name);

// Builds and initializes all parameters: conv weights ~ N(0, sqrt(2/fan_in)),
// biases 0, gamma 1, beta 0, running stats (0, 1).
ModelParams build(const ModelSpec& spec, Rng& rng);

// Sum of learnable element counts (running stats excluded).
std::int64_t count_params(const ModelParams& params);

// Forward pass. Input is (N, 1, D, H, W); 2D specs require D == 1. Spatial
// dims handled by the pooling chain must be divisible by 2^depth.
Tensor forward(const ModelSpec& spec, ModelParams& params, const Tensor& x,
               bool train);

// Per-axis pooling factor the input must be divisible by.
std::array<std::int64_t, 3> spatial_divisor(const ModelSpec& spec);

// Dependency footprint of one output voxel, from composing every layer's
// index window along the actual network graph (skip branches included).
struct ReceptiveField {
  std::array<std::int64_t, 3> extent;     // hi - lo + 1 per axis
  std::array<std::int64_t, 3> reach;      // max(-lo, hi): one-sided margin
  std::vector<std::pair<std::string, std::int64_t>> stride_history;
};

ReceptiveField receptive_field(const ModelSpec& spec);

// Versioned container: `<stem>.json` manifest (spec, tensor names/shapes,
// format version) + `<stem>.raw` f64 little-endian payload in manifest order.
void save_checkpoint(const ModelParams& params, const ModelSpec& spec,
                     const std::string& path);
std::pair<ModelSpec, ModelParams> load_checkpoint(const std::string& path);

}  // namespace ctlab
