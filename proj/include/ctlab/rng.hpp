#pragma once

#include <cstdint>
#include <random>

namespace ctlab {

// Deterministic random stream. The engine (std::mt19937_64) is fully specified
// by the standard; the distribution transforms are coded here because the
// <random> distribution objects are implementation-defined and would break the
// fixed-seed reproducibility contract across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller. No caching of the second variate, so the
  // stream position is a pure function of the number of calls made.
  double normal();

  // Exact Poisson sample by accumulating exponential inter-arrival times.
  // Stable for any mean (works in log space), O(mean) uniforms per draw.
  int poisson(double mean);

  // Independent substream derived from (seed, stream). Used to give each
  // volume/slice its own stream so parallel and serial runs agree bit-exactly.
  Rng child(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ctlab
