#pragma once

namespace ctlab {

// Process-wide worker cap for the compute kernels. All parallel loops write
// disjoint outputs under static schedules, so results do not depend on this
// value; serial mode (1) is additionally bit-reproducible by construction.
int num_threads();
void set_num_threads(int n);

}  // namespace ctlab
