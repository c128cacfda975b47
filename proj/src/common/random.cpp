#include "vslam/common/random.hpp"

#include <cmath>

namespace vslam {
namespace {

std::uint64_t SplitMix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (stream * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull);
  for (auto& s : s_) s = SplitMix64(state);
}

std::uint64_t Rng::Next() {
  const std::uint64_t result = Rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = Rotl(s_[3], 45);
  return result;
}

double Rng::Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

double Rng::Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

std::uint64_t Rng::UniformInt(std::uint64_t n) {
  if (n == 0) return 0;
  const unsigned __int128 m = static_cast<unsigned __int128>(Next()) * n;
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * Uniform() - 1.0;
    v = 2.0 * Uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::Normal(double mean, double stddev) { return mean + stddev * Normal(); }

std::vector<int> Rng::SampleDistinct(int n, int k) {
  std::vector<int> out;
  out.reserve(k);
  while (static_cast<int>(out.size()) < k) {
    const int c = static_cast<int>(UniformInt(static_cast<std::uint64_t>(n)));
    bool dup = false;
    for (int o : out) dup |= (o == c);
    if (!dup) out.push_back(c);
  }
  return out;
}

std::uint64_t StreamId(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t state = a * 0x9E3779B97F4A7C15ull;
  std::uint64_t h = SplitMix64(state);
  state ^= b + 0x632BE59BD9B4E019ull;
  h ^= SplitMix64(state);
  state ^= c + 0x85157AF5ull;
  h ^= SplitMix64(state);
  return h;
}

}  // namespace vslam
