#pragma once

#include <string>
#include <vector>

#include "ctlab/volume.hpp"

namespace ctlab {

// One (degraded input, ground truth) volume pair, stored as container stems.
struct SamplePair {
  std::string input;
  std::string target;
};

struct PairedDataset {
  std::vector<SamplePair> train, val, test;
};

void save_pairs(const PairedDataset& d, const std::string& path);
PairedDataset load_pairs(const std::string& path);

// Shape from the sidecar alone (no payload read).
Shape3 volume_shape(const std::string& stem);

}  // namespace ctlab
