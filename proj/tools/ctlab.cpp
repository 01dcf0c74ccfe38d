#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ctlab/config.hpp"
#include "ctlab/dataset.hpp"
#include "ctlab/fbp.hpp"
#include "ctlab/parallel.hpp"
#include "ctlab/phantom.hpp"
#include "ctlab/projector.hpp"
#include "ctlab/report.hpp"
#include "ctlab/stitcher.hpp"
#include "ctlab/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ctlab;

namespace {

constexpr const char* kVersion = "ctlab 1.0.0";

// Exit codes: 0 success, 2 configuration error, 3 data/processing error,
// 4 numeric failure (non-finite loss).
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

struct CommonOpts {
  std::string config_path;
  int threads = 0;  // 0: hardware concurrency
};

ExperimentConfig resolve_config(const CommonOpts& common) {
  ExperimentConfig cfg = common.config_path.empty()
                             ? parse_config_text(paper_synthetic_preset())
                             : load_config(common.config_path);
  if (const char* root = std::getenv("CTLAB_DATA_ROOT"); root && *root)
    cfg.data_root = root;
  return cfg;
}

int effective_threads(const CommonOpts& common) {
  if (common.threads > 0) return common.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void write_provenance(const std::string& out_dir, const ExperimentConfig& cfg,
                      int argc, char** argv, int threads) {
  nlohmann::json j;
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += " ";
    cmd += argv[i];
  }
  j["command"] = cmd;
  j["version"] = kVersion;
  j["threads"] = threads;
  j["config"] = render_config(cfg);
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "provenance.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write provenance under " + out_dir);
  out << j.dump(2) << "\n";
}

int cmd_gen(const CommonOpts& common, const ExperimentConfig& cfg,
            const std::string& out_dir, int argc, char** argv) {
  const int threads = effective_threads(common);
  write_provenance(out_dir, cfg, argc, argv, threads);
  generate_dataset(cfg.phantom, out_dir, cfg.split, threads);
  const int total = cfg.split.n_train + cfg.split.n_val + cfg.split.n_test;
  std::printf("wrote %d volumes (%d/%d/%d) under %s\n", total,
              cfg.split.n_train, cfg.split.n_val, cfg.split.n_test,
              out_dir.c_str());
  return kOk;
}

int cmd_simulate(const CommonOpts& common, const ExperimentConfig& cfg,
                 const std::string& in_dir, const std::string& out_dir,
                 bool keep_sinograms, int argc, char** argv) {
  const int threads = effective_threads(common);
  write_provenance(out_dir, cfg, argc, argv, threads);

  std::ifstream mf(fs::path(in_dir) / "manifest.json");
  if (!mf)
    throw std::runtime_error("no manifest.json under " + in_dir +
                             " (run `ctlab gen` first)");
  nlohmann::json manifest;
  mf >> manifest;

  const ProjectionGeometry geom = cfg.geometry();
  const Rng noise_root(cfg.noise.seed);
  PairedDataset pairs;
  std::uint64_t index = 0;
  for (const auto& [stem, meta] : manifest.items()) {
    const std::string gt_path = (fs::path(in_dir) / stem).string();
    const Volume3 gt = load_volume(gt_path);
    SinogramStack sino = radon_volume(gt, geom, threads);
    NoiseSpec ns = cfg.noise;
    ns.seed = noise_root.child(index).seed();
    sino = add_awgn(sino, ns);
    const Volume3 fbp = fbp_volume(sino, cfg.filter, gt.shape[1], threads);

    const std::string out_stem = (fs::path(out_dir) / stem).string();
    fs::create_directories(fs::path(out_stem).parent_path());
    save_volume(fbp, out_stem);
    if (keep_sinograms) save_sinogram(sino, out_stem + "_sino");

    const std::string split = meta.at("split").get<std::string>();
    SamplePair p{out_stem, gt_path};
    if (split == "train")
      pairs.train.push_back(p);
    else if (split == "val")
      pairs.val.push_back(p);
    else
      pairs.test.push_back(p);
    ++index;
  }
  save_pairs(pairs, (fs::path(out_dir) / "pairs.json").string());
  std::printf("simulated %llu volumes into %s (views=%d detectors=%d)\n",
              static_cast<unsigned long long>(index), out_dir.c_str(),
              cfg.views, cfg.detectors);
  return kOk;
}

int cmd_train(const CommonOpts& common, ExperimentConfig cfg,
              const std::string& data_dir, std::string out_dir,
              const std::string& model_kind, int argc, char** argv) {
  const int threads = effective_threads(common);
  set_num_threads(threads);

  if (model_kind == "2d")
    cfg.model.dims = 2;
  else if (model_kind == "3d")
    cfg.model.dims = 3;
  else
    throw std::invalid_argument("--model must be 2d or 3d for training");
  TrainConfig tc = cfg.train;
  if (cfg.model.dims == 2) tc.batch_size = cfg.batch_size_2d;
  if (out_dir.empty())
    out_dir = cfg.data_root + "/run_" + (cfg.model.dims == 3 ? "3d" : "2d");

  write_provenance(out_dir, cfg, argc, argv, threads);
  const PairedDataset data =
      load_pairs((fs::path(data_dir) / "pairs.json").string());

  const TrainResult result = train(cfg.model, data, tc, out_dir);
  if (result.nan_abort) {
    std::fprintf(stderr,
                 "training aborted: non-finite loss (last good checkpoint "
                 "retained under %s)\n",
                 out_dir.c_str());
    return kNumericError;
  }
  std::printf("trained %zu epochs; best val L1 %.6g at epoch %d; checkpoints "
              "under %s\n",
              result.log.size(), result.best_val, result.best_epoch,
              out_dir.c_str());
  return kOk;
}

int cmd_eval(const CommonOpts& common, const ExperimentConfig& cfg,
             const std::string& data_dir, const std::string& checkpoint,
             const std::string& split, std::string label, std::string out_dir,
             double data_range, bool ssim_global, bool ssim_paper_constants,
             int argc, char** argv) {
  const int threads = effective_threads(common);
  set_num_threads(threads);

  const PairedDataset data =
      load_pairs((fs::path(data_dir) / "pairs.json").string());
  const std::vector<SamplePair>* pairs = &data.test;
  if (split == "train")
    pairs = &data.train;
  else if (split == "val")
    pairs = &data.val;
  else if (split != "test")
    throw std::invalid_argument("--split must be train, val or test");
  if (pairs->empty()) throw std::runtime_error("no pairs in split " + split);

  EvalSettings settings;
  settings.data_range = data_range;
  settings.ssim.global_stats = ssim_global;
  settings.ssim.constants = ssim_paper_constants ? SsimConstants::AsPrinted
                                                 : SsimConstants::Standard;
  settings.stitch_block = cfg.stitch_block;
  settings.stitch_margin = cfg.stitch_margin;
  settings.threads = threads;

  std::vector<VolumeEval> evals;
  if (checkpoint.empty()) {
    if (label.empty()) label = "FBP";
    evals = evaluate_pairs(nullptr, nullptr, *pairs, settings);
  } else {
    auto [spec, params] = load_checkpoint(checkpoint);
    if (label.empty()) label = spec.dims == 3 ? "3D model" : "2D model";
    evals = evaluate_pairs(&spec, &params, *pairs, settings);
  }

  const ReportData report = summarize(label, evals);
  if (out_dir.empty()) out_dir = cfg.data_root + "/eval_" + label;
  write_provenance(out_dir, cfg, argc, argv, threads);
  write_report_json(report, (fs::path(out_dir) / "report.json").string());
  write_report_tsv(report, (fs::path(out_dir) / "report.tsv").string());
  std::printf("%s", render_tables({report}).c_str());
  std::printf("report written under %s\n", out_dir.c_str());
  return kOk;
}

int cmd_reconstruct(const CommonOpts& common, const ExperimentConfig& cfg,
                    const std::string& checkpoint, const std::string& in_stem,
                    const std::string& out_stem, int argc, char** argv) {
  const int threads = effective_threads(common);
  set_num_threads(threads);

  auto [spec, params] = load_checkpoint(checkpoint);
  const Volume3 input = load_volume(in_stem);
  const ReceptiveField rf = receptive_field(spec);
  std::printf("analytic receptive field per axis: %lld %lld %lld "
              "(one-sided reach %lld %lld %lld); stitch margin %lld %lld %lld\n",
              static_cast<long long>(rf.extent[0]),
              static_cast<long long>(rf.extent[1]),
              static_cast<long long>(rf.extent[2]),
              static_cast<long long>(rf.reach[0]),
              static_cast<long long>(rf.reach[1]),
              static_cast<long long>(rf.reach[2]),
              static_cast<long long>(cfg.stitch_margin[0]),
              static_cast<long long>(cfg.stitch_margin[1]),
              static_cast<long long>(cfg.stitch_margin[2]));

  const StitchPlan plan = plan_stitch(input.shape, cfg.stitch_block,
                                      cfg.stitch_margin, spatial_divisor(spec));
  const Volume3 out = stitched_forward(spec, params, input, plan);
  fs::create_directories(fs::path(out_stem).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out_stem).parent_path());
  save_volume(out, out_stem);
  {
    nlohmann::json j;
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
      if (i) cmd += " ";
      cmd += argv[i];
    }
    j["command"] = cmd;
    j["version"] = kVersion;
    j["threads"] = threads;
    j["config"] = render_config(cfg);
    std::ofstream prov(out_stem + ".provenance.json", std::ios::trunc);
    prov << j.dump(2) << "\n";
  }
  std::printf("reconstructed %s -> %s (%zu blocks)\n", in_stem.c_str(),
              out_stem.c_str(), plan.windows.size());
  return kOk;
}

int cmd_report(const std::vector<std::string>& files,
               const std::string& out_path) {
  std::vector<ReportData> reports;
  for (const auto& f : files) reports.push_back(read_report_json(f));
  const std::string rendered = render_tables(reports);
  std::printf("%s", rendered.c_str());
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << rendered;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-dose CT reconstruction laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  CommonOpts common;
  app.add_option("--config", common.config_path,
                 "experiment config file (defaults to the shipped synthetic "
                 "preset)");
  app.add_option("--threads", common.threads,
                 "worker threads (default: hardware; 1 = bit-reproducible)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic phantom dataset");
  std::string gen_out;
  int gen_n_train = -1, gen_n_val = -1, gen_n_test = -1;
  std::int64_t gen_seed = -1;
  gen->add_option("--out", gen_out, "output dataset directory");
  gen->add_option("--n-train", gen_n_train, "training volume count");
  gen->add_option("--n-val", gen_n_val, "validation volume count");
  gen->add_option("--n-test", gen_n_test, "test volume count");
  gen->add_option("--seed", gen_seed, "phantom seed override");

  // simulate
  auto* sim = app.add_subcommand(
      "simulate", "project, degrade and FBP-reconstruct a dataset");
  std::string sim_in, sim_out, sim_noise, sim_filter;
  int sim_views = -1, sim_detectors = -1;
  double sim_freq_scale = -1.0;
  bool sim_keep = false;
  sim->add_option("--in", sim_in, "dataset directory (from `gen`)");
  sim->add_option("--out", sim_out, "output directory for FBP pairs");
  sim->add_option("--views", sim_views, "projection angle count");
  sim->add_option("--detectors", sim_detectors, "detector count");
  sim->add_option("--noise", sim_noise, "SNR in dB, or `none`");
  sim->add_option("--filter", sim_filter, "ramp | hann | hamming");
  sim->add_option("--freq-scale", sim_freq_scale, "filter frequency scaling");
  sim->add_flag("--keep-sinograms", sim_keep, "also persist noisy sinograms");

  // train
  auto* tr = app.add_subcommand("train", "train a denoiser on FBP pairs");
  std::string tr_data, tr_out, tr_model = "3d";
  int tr_epochs = -1, tr_batch = -1, tr_patience = -1;
  std::int64_t tr_seed = -1;
  tr->add_option("--data", tr_data, "directory with pairs.json");
  tr->add_option("--out", tr_out, "run output directory");
  tr->add_option("--model", tr_model, "3d | 2d");
  tr->add_option("--epochs", tr_epochs, "max epochs override");
  tr->add_option("--batch", tr_batch, "batch size override");
  tr->add_option("--patience", tr_patience, "early-stop patience override");
  tr->add_option("--seed", tr_seed, "training seed override");

  // eval
  auto* ev = app.add_subcommand("eval", "score a split with PSNR/SSIM/RMSE");
  std::string ev_data, ev_ckpt, ev_split = "test", ev_label, ev_out,
              ev_range = "1.0";
  bool ev_ssim_global = false, ev_ssim_paper = false;
  ev->add_option("--data", ev_data, "directory with pairs.json");
  ev->add_option("--checkpoint", ev_ckpt,
                 "checkpoint stem; omit for the FBP passthrough column");
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--label", ev_label, "column label in reports");
  ev->add_option("--out", ev_out, "report output directory");
  ev->add_option("--data-range", ev_range,
                 "PSNR/SSIM data range, or `gt` for per-volume ground-truth max");
  ev->add_flag("--ssim-global", ev_ssim_global,
               "single global SSIM window instead of sliding");
  ev->add_flag("--ssim-printed-constants", ev_ssim_paper,
               "use the published unsquared constants (2.55/7.65 at L=255)");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct",
                                 "denoise one volume with stitched inference");
  std::string rec_ckpt, rec_in, rec_out;
  std::string rec_block, rec_margin;
  rec->add_option("--checkpoint", rec_ckpt, "checkpoint stem")->required();
  rec->add_option("--in", rec_in, "input volume stem")->required();
  rec->add_option("--out", rec_out, "output volume stem")->required();
  rec->add_option("--block", rec_block, "block size `z,y,x`");
  rec->add_option("--margin", rec_margin, "context margin `z,y,x`");

  // report
  auto* rep = app.add_subcommand("report", "render metric tables from reports");
  std::vector<std::string> rep_files;
  std::string rep_out;
  rep->add_option("files", rep_files, "report.json files")->required();
  rep->add_option("--out", rep_out, "also write the rendered table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  ExperimentConfig cfg;
  try {
    cfg = resolve_config(common);
    // Command-line overrides fold into the effective config so provenance
    // records exactly what ran.
    if (*gen) {
      if (gen_n_train >= 0) cfg.split.n_train = gen_n_train;
      if (gen_n_val >= 0) cfg.split.n_val = gen_n_val;
      if (gen_n_test >= 0) cfg.split.n_test = gen_n_test;
      if (gen_seed >= 0) cfg.phantom.seed = static_cast<std::uint64_t>(gen_seed);
    }
    if (*sim) {
      if (sim_views > 0) cfg.views = sim_views;
      if (sim_detectors > 0) cfg.detectors = sim_detectors;
      if (!sim_noise.empty()) {
        if (sim_noise == "none") {
          cfg.noise.none = true;
        } else {
          cfg.noise.none = false;
          cfg.noise.snr_db = std::stod(sim_noise);
        }
      }
      if (!sim_filter.empty()) cfg.filter.kind = filter_kind_from_string(sim_filter);
      if (sim_freq_scale > 0.0) cfg.filter.frequency_scaling = sim_freq_scale;
    }
    if (*tr) {
      if (tr_epochs >= 0) cfg.train.max_epochs = tr_epochs;
      if (tr_batch > 0) {
        cfg.train.batch_size = tr_batch;
        cfg.batch_size_2d = tr_batch;
      }
      if (tr_patience >= 0) cfg.train.early_stop_patience = tr_patience;
      if (tr_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(tr_seed);
    }
    if (*rec) {
      const auto parse_triple = [](const std::string& s) {
        long long z = 0, y = 0, x = 0;
        if (std::sscanf(s.c_str(), "%lld,%lld,%lld", &z, &y, &x) != 3)
          throw std::invalid_argument("expected `z,y,x`: " + s);
        return Shape3{z, y, x};
      };
      if (!rec_block.empty()) cfg.stitch_block = parse_triple(rec_block);
      if (!rec_margin.empty()) cfg.stitch_margin = parse_triple(rec_margin);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }

  try {
    if (*gen) {
      const std::string out = gen_out.empty() ? cfg.dataset_dir() : gen_out;
      return cmd_gen(common, cfg, out, argc, argv);
    }
    if (*sim) {
      const std::string in = sim_in.empty() ? cfg.dataset_dir() : sim_in;
      const std::string out = sim_out.empty() ? cfg.sim_dir() : sim_out;
      return cmd_simulate(common, cfg, in, out, sim_keep, argc, argv);
    }
    if (*tr) {
      const std::string data = tr_data.empty() ? cfg.sim_dir() : tr_data;
      return cmd_train(common, cfg, data, tr_out, tr_model, argc, argv);
    }
    if (*ev) {
      const std::string data = ev_data.empty() ? cfg.sim_dir() : ev_data;
      const double range = ev_range == "gt" ? 0.0 : std::stod(ev_range);
      return cmd_eval(common, cfg, data, ev_ckpt, ev_split, ev_label, ev_out,
                      range, ev_ssim_global, ev_ssim_paper, argc, argv);
    }
    if (*rec)
      return cmd_reconstruct(common, cfg, rec_ckpt, rec_in, rec_out, argc, argv);
    if (*rep) return cmd_report(rep_files, rep_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  }
  return kOk;
}
