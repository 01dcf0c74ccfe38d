#pragma once

#include <string>

#include "ctlab/fbp.hpp"
#include "ctlab/model.hpp"
#include "ctlab/phantom.hpp"
#include "ctlab/projector.hpp"
#include "ctlab/trainer.hpp"

namespace ctlab {

// Full experiment description. Defaults reproduce the shipped synthetic
// preset: 128^3 volumes, 60 views x 182 detectors, 35 dB AWGN, Hann 0.8,
// depth-4 / 16-filter 3D model, L1 + Adam(0.001, 0.9/0.999).
struct ExperimentConfig {
  PhantomConfig phantom;
  DatasetSplit split;
  int views = 60;
  int detectors = 182;
  double detector_spacing = 1.0;
  NoiseSpec noise;
  FilterSpec filter;
  ModelSpec model;
  TrainConfig train;
  int batch_size_2d = 3;  // the slice-wise baseline batches differently
  Shape3 stitch_block{128, 128, 128};
  Shape3 stitch_margin{70, 0, 0};
  std::string data_root = "data";

  ProjectionGeometry geometry() const {
    return make_parallel_geometry(views, detectors, detector_spacing);
  }
  std::string dataset_dir() const { return data_root + "/phantoms"; }
  std::string sim_dir() const { return data_root + "/sim"; }
};

// INI-style text: [section] headers, key = value lines, '#'/';' comments.
// Unknown sections or keys are rejected.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical rendering of every key; parse(render(c)) == c.
std::string render_config(const ExperimentConfig& c);

// The shipped preset (all defaults).
const char* paper_synthetic_preset();

}  // namespace ctlab
