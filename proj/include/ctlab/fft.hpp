#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace ctlab {

// In-place radix-2 Cooley-Tukey transform; size must be a power of two.
// The inverse applies the 1/n scale. Deterministic and thread-safe (no
// plans, no global state), which the bit-reproducibility contract relies on.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

std::int64_t next_pow2(std::int64_t n);

}  // namespace ctlab
