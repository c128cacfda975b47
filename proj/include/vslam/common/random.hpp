#pragma once

#include <cstdint>
#include <vector>

namespace vslam {

// xoshiro256** seeded through splitmix64. Every consumer derives its own
// stream from (seed, stream id) so results do not depend on call order
// across modules or threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t Next();

  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t UniformInt(std::uint64_t n);
  double Normal();
  double Normal(double mean, double stddev);

  // k distinct indices drawn from [0, n), k <= n.
  std::vector<int> SampleDistinct(int n, int k);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable mixing of several integers into a stream id.
std::uint64_t StreamId(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace vslam
