#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace ota {

// Stream identifiers for hierarchical seeding: derive_seed(seed, stream, index).
// Values are part of the reproducibility contract; do not renumber.
enum class Stream : std::uint64_t {
  Synth = 1,
  Split = 2,
  Init = 3,
  Shuffle = 4,
  Channel = 5,
  Noise = 6,
  EvalInput = 7,
  CraftInput = 8,
  CraftChannel = 9,
  GainEstimate = 10,
  Substitute = 11,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

// mt19937_64 with platform-independent real/normal draws (the std
// distributions are implementation-defined, which would break golden files).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0)
      : engine_(derive_seed(seed, stream, index)) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                    // [0, 1), 53-bit
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);  // uniform on [0, n)
  double normal();                     // N(0, 1), Box-Muller
  std::complex<double> complex_normal(double variance = 1.0);  // CN(0, variance)

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ota
