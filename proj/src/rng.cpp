#include "irof/rng.hpp"

#include <algorithm>

namespace irof {

StreamRng::StreamRng(std::uint64_t seed, Stream stream)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  engine_.seed(seq);
}

double StreamRng::uniform()
{
  // uniform_real_distribution is implementation-defined; this keeps outputs identical across toolchains.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

Vec sample_noise(const IntervalVector & box, StreamRng & rng)
{
  Vec out(box.size());
  for (Eigen::Index i = 0; i < box.size(); ++i) {
    const double t = rng.uniform();
    out[i] = std::min(box.hi()[i], box.lo()[i] + t * (box.hi()[i] - box.lo()[i]));
  }
  return out;
}

}  // namespace irof
