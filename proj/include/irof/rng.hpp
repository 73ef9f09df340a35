#pragma once

#include <cstdint>
#include <random>

#include "irof/interval.hpp"

namespace irof {

/// Signals drawn during a trial; each gets its own stream so that adding or skipping draws in one never
/// shifts another, and paired trials with different controllers see identical noise.
enum class Stream : std::uint32_t
{
  kProcess = 1,
  kMeasurement = 2,
  kInitialState = 3,
  kGroundTruth = 4,
  kTest = 5,
};

/// Uniform generator for one (seed, stream) pair. Output depends only on the pair and the draw count.
class StreamRng
{
public:
  StreamRng(std::uint64_t seed, Stream stream);

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

private:
  std::mt19937_64 engine_;
};

/// Elementwise uniform sample in [lo, hi]; a zero-width component returns its bound exactly.
Vec sample_noise(const IntervalVector & box, StreamRng & rng);

}  // namespace irof
