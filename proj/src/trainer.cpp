#include "ctlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ctlab/nn_ops.hpp"
#include "ctlab/stitcher.hpp"

namespace ctlab {

void adam_step(ModelParams& params, AdamState& st, const TrainConfig& cfg) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (const auto& name : params.order) {
    if (!is_learnable(name)) continue;
    Tensor& p = params.at(name);
    if (!p.has_grad())
      throw std::invalid_argument("adam_step: missing gradient for " + name);
    auto& mom = st.moments[name];
    const std::size_t n = p.data().size();
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    if (mom.m.size() != n)
      throw std::invalid_argument("adam_step: state shape mismatch for " + name);
    const std::vector<double>& g = p.grad();
    for (std::size_t i = 0; i < n; ++i) {
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

std::vector<std::int64_t> shuffled_indices(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(
        rng.uniform() * static_cast<double>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(std::min(j, i))]);
  }
  return idx;
}

std::int64_t steps_per_epoch(std::int64_t n_samples, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  return (n_samples + batch_size - 1) / batch_size;
}

namespace {

// Bounded read-through cache so slice-wise (2D) epochs do not reload the same
// volumes from disk thousands of times.
class VolumeCache {
 public:
  explicit VolumeCache(std::int64_t budget_bytes)
      : budget_(budget_bytes), used_(0) {}

  const Volume3& get(const std::string& stem) {
    auto it = cache_.find(stem);
    if (it != cache_.end()) return it->second;
    Volume3 v = load_volume(stem);
    const std::int64_t bytes = v.size() * 4;
    if (used_ + bytes > budget_) {
      scratch_ = std::move(v);
      return scratch_;
    }
    used_ += bytes;
    return cache_.emplace(stem, std::move(v)).first->second;
  }

 private:
  std::int64_t budget_, used_;
  std::unordered_map<std::string, Volume3> cache_;
  Volume3 scratch_;
};

struct SampleRef {
  std::size_t pair = 0;
  std::int64_t slice = -1;  // -1: whole volume (3D)
};

std::vector<SampleRef> enumerate_samples(const std::vector<SamplePair>& pairs,
                                         bool slice_wise) {
  std::vector<SampleRef> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!slice_wise) {
      out.push_back({p, -1});
    } else {
      const Shape3 s = volume_shape(pairs[p].input);
      for (std::int64_t z = 0; z < s[0]; ++z) out.push_back({p, z});
    }
  }
  return out;
}

// Stacks samples along N. 3D: (B, 1, D, H, W); 2D slices: (B, 1, 1, H, W).
Tensor batch_tensor(const std::vector<SampleRef>& refs,
                    const std::vector<SamplePair>& pairs, VolumeCache& cache,
                    bool input_side) {
  const SampleRef& first = refs.front();
  const std::string& stem0 =
      input_side ? pairs[first.pair].input : pairs[first.pair].target;
  const Shape3 shape = volume_shape(stem0);
  const std::int64_t d = first.slice < 0 ? shape[0] : 1;
  const std::int64_t h = shape[1], w = shape[2];
  const std::int64_t b = static_cast<std::int64_t>(refs.size());
  std::vector<double> data(static_cast<std::size_t>(b * d * h * w));
  for (std::int64_t i = 0; i < b; ++i) {
    const SampleRef& r = refs[static_cast<std::size_t>(i)];
    const std::string& stem =
        input_side ? pairs[r.pair].input : pairs[r.pair].target;
    const Volume3& v = cache.get(stem);
    if (v.shape[1] != h || v.shape[2] != w ||
        (r.slice < 0 && v.shape[0] != d))
      throw std::runtime_error("inconsistent volume shapes in dataset: " + stem);
    const std::int64_t z0 = r.slice < 0 ? 0 : r.slice;
    const float* src = &v.data[static_cast<std::size_t>(z0 * h * w)];
    double* dst = data.data() + i * d * h * w;
    for (std::int64_t k = 0; k < d * h * w; ++k)
      dst[k] = static_cast<double>(src[k]);
  }
  return Tensor::from_data({b, 1, d, h, w}, std::move(data));
}

double dataset_l1(const ModelSpec& spec, ModelParams& params,
                  const std::vector<SamplePair>& pairs, VolumeCache& cache,
                  int batch_size) {
  const std::vector<SampleRef> samples =
      enumerate_samples(pairs, spec.dims == 2);
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < samples.size();) {
    std::vector<SampleRef> batch;
    for (; i < samples.size() &&
           batch.size() < static_cast<std::size_t>(batch_size);
         ++i)
      batch.push_back(samples[i]);
    NoGradGuard no_grad;
    const Tensor x = batch_tensor(batch, pairs, cache, true);
    const Tensor t = batch_tensor(batch, pairs, cache, false);
    const Tensor y = forward(spec, params, x, /*train=*/false);
    const Tensor loss = l1_loss(y, t);
    acc += loss.item() * static_cast<double>(x.numel());
    count += x.numel();
  }
  return count > 0 ? acc / static_cast<double>(count)
                   : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TrainResult train(const ModelSpec& spec, const PairedDataset& data,
                  const TrainConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (data.train.empty()) throw std::invalid_argument("train: empty dataset");
  fs::create_directories(out_dir);

  Rng root(cfg.seed);
  Rng init_rng = root.child(0xbead);
  ModelParams params = build(spec, init_rng);
  AdamState adam;
  VolumeCache cache(std::int64_t{2} * 1024 * 1024 * 1024);

  const std::vector<SampleRef> samples =
      enumerate_samples(data.train, spec.dims == 2);
  const std::int64_t n = static_cast<std::int64_t>(samples.size());

  std::ofstream log_file(fs::path(out_dir) / "train_log.tsv",
                         std::ios::trunc);
  if (!log_file)
    throw std::runtime_error("cannot write train log under " + out_dir);

  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = root.child(0x5eed000 + static_cast<std::uint64_t>(epoch));
    const std::vector<std::int64_t> perm = shuffled_indices(n, shuffle_rng);

    double train_acc = 0.0;
    std::int64_t train_count = 0;
    bool nan_hit = false;
    for (std::int64_t s = 0; s < n && !nan_hit; s += cfg.batch_size) {
      std::vector<SampleRef> batch;
      for (std::int64_t i = s; i < std::min(n, s + cfg.batch_size); ++i)
        batch.push_back(samples[static_cast<std::size_t>(
            perm[static_cast<std::size_t>(i)])]);
      const Tensor x = batch_tensor(batch, data.train, cache, true);
      const Tensor t = batch_tensor(batch, data.train, cache, false);
      const Tensor y = forward(spec, params, x, /*train=*/true);
      const Tensor loss = l1_loss(y, t);
      if (!std::isfinite(loss.item())) {
        nan_hit = true;
        break;
      }
      backward(loss);
      adam_step(params, adam, cfg);
      for (const auto& name : params.order) params.at(name).zero_grad();
      train_acc += loss.item() * static_cast<double>(x.numel());
      train_count += x.numel();
    }
    if (nan_hit) {
      result.nan_abort = true;
      break;
    }
    const double train_l1 = train_acc / static_cast<double>(train_count);

    double val_l1 = std::numeric_limits<double>::quiet_NaN();
    if (!data.val.empty())
      val_l1 = dataset_l1(spec, params, data.val, cache, cfg.batch_size);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    result.log.push_back({epoch, train_l1, val_l1, wall});
    char line[160];
    std::snprintf(line, sizeof(line), "%d\t%.17g\t%.17g\t%.3f\n", epoch,
                  train_l1, val_l1, wall);
    log_file << line;
    log_file.flush();

    const double select_on = data.val.empty() ? train_l1 : val_l1;
    if (select_on < result.best_val) {
      result.best_val = select_on;
      result.best_epoch = epoch;
      since_best = 0;
      result.best_checkpoint = (fs::path(out_dir) / "best").string();
      save_checkpoint(params, spec, result.best_checkpoint);
    } else {
      ++since_best;
    }
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "epoch_%04d", epoch);
      save_checkpoint(params, spec, (fs::path(out_dir) / stem).string());
    }
    if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience)
      break;
  }

  save_checkpoint(params, spec, (fs::path(out_dir) / "last").string());
  return result;
}

std::vector<VolumeEval> evaluate_pairs(const ModelSpec* spec,
                                       ModelParams* params,
                                       const std::vector<SamplePair>& pairs,
                                       const EvalSettings& settings) {
  std::vector<VolumeEval> out;
  for (const SamplePair& p : pairs) {
    const Volume3 input = load_volume(p.input);
    const Volume3 gt = load_volume(p.target);
    Volume3 recon;
    if (spec != nullptr && params != nullptr) {
      const StitchPlan plan =
          plan_stitch(input.shape, settings.stitch_block, settings.stitch_margin,
                      spatial_divisor(*spec));
      recon = stitched_forward(*spec, *params, input, plan);
    } else {
      recon = input;
    }
    // Non-positive data_range selects the per-volume ground-truth maximum.
    double range = settings.data_range;
    if (!(range > 0.0)) {
      float m = 0.0f;
      for (float v : gt.data) m = std::max(m, v);
      range = m > 0.0f ? static_cast<double>(m) : 1.0;
    }
    VolumeEval ve;
    ve.name = std::filesystem::path(p.input).filename().string();
    ve.report = report_volume(recon, gt, range, settings.ssim,
                              settings.threads);
    out.push_back(std::move(ve));
  }
  return out;
}

}  // namespace ctlab
