#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ctlab/model.hpp"
#include "ctlab/volume.hpp"

namespace ctlab {

// One processing block: the input window is forwarded, and only the paste
// window (input shrunk by the margin except at volume boundaries) is copied
// into the output.
struct StitchWindow {
  Shape3 in_lo, in_hi;      // half-open input window
  Shape3 paste_lo, paste_hi;  // half-open paste window
};

struct StitchPlan {
  Shape3 shape{};
  std::vector<StitchWindow> windows;
};

// Greedy cover with stride = block - 2 * margin per axis; boundary blocks
// clamp to the volume and keep their full one-sided context. Paste windows
// partition the volume exactly. `alignment` snaps input-window starts and
// sizes to a multiple (the model's pooling factor) so that blockwise pooling
// grids coincide with the whole-volume ones; axes with alignment > 1 require
// the volume extent to be a multiple of it.
StitchPlan plan_stitch(const Shape3& shape, const Shape3& block,
                       const Shape3& margin, const Shape3& alignment = {1, 1, 1});

// Forward each input window in eval mode and paste the interior regions.
// With margin >= the model's one-sided receptive-field reach (and pooling
// alignment), this equals the whole-volume forward bit-exactly.
Volume3 stitched_forward(const ModelSpec& spec, ModelParams& params,
                         const Volume3& v, const StitchPlan& plan);

// Whole-volume eval-mode forward (single-block convenience path).
Volume3 forward_volume(const ModelSpec& spec, ModelParams& params,
                       const Volume3& v);

}  // namespace ctlab
