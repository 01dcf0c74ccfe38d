#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctlab/dataset.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/model.hpp"
#include "ctlab/rng.hpp"

namespace ctlab {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;     // 0: only best/last
  int early_stop_patience = 0;  // 0: disabled; otherwise epochs without a
                                // new best validation loss before stopping
};

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::unordered_map<std::string, Moments> moments;
  std::int64_t t = 0;
};

// One Adam update from the gradients currently held by the learnable
// parameters: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, bias-corrected,
// p <- p - lr * m_hat / (sqrt(v_hat) + eps). Gradients are left untouched.
void adam_step(ModelParams& params, AdamState& st, const TrainConfig& cfg);

// Seeded epoch shuffling; every sample index appears exactly once.
std::vector<std::int64_t> shuffled_indices(std::int64_t n, Rng& rng);

std::int64_t steps_per_epoch(std::int64_t n_samples, int batch_size);

struct EpochLog {
  int epoch = 0;
  double train_l1 = 0.0;
  double val_l1 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val = 0.0;
  bool nan_abort = false;
  std::string best_checkpoint;  // stem; empty if never saved
};

// Minimizes mean L1 between network output and ground truth with Adam over
// shuffled seeded batches. 3D specs consume whole volumes; 2D specs consume
// individual slices of the same volumes. Validation L1 runs each epoch in
// eval mode; the best-validation checkpoint is kept at <out_dir>/best and
// the final state at <out_dir>/last. Appends
// "epoch<TAB>train_l1<TAB>val_l1<TAB>wall_seconds" lines to
// <out_dir>/train_log.tsv. A non-finite training loss aborts, retaining the
// previous checkpoints, with nan_abort set.
TrainResult train(const ModelSpec& spec, const PairedDataset& data,
                  const TrainConfig& cfg, const std::string& out_dir);

struct EvalSettings {
  double data_range = 1.0;
  SsimOpts ssim;
  Shape3 stitch_block{128, 128, 128};
  Shape3 stitch_margin{70, 0, 0};
  int threads = 1;
};

struct VolumeEval {
  std::string name;
  MetricReport report;
};

// Metric reports for each pair. With a model, inputs run through stitched
// eval-mode inference; with spec == nullptr the inputs are scored as-is
// (the FBP passthrough column).
std::vector<VolumeEval> evaluate_pairs(const ModelSpec* spec,
                                       ModelParams* params,
                                       const std::vector<SamplePair>& pairs,
                                       const EvalSettings& settings);

}  // namespace ctlab
