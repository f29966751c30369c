#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cmpg {

// xoshiro256** with splitmix64 seeding. Self-contained so that streams are
// reproducible bit-for-bit across platforms and serializable into
// checkpoints (std::normal_distribution is implementation-defined).
class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ull) {}

  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  // Independent deterministic stream derived from (master seed, stream id).
  static Rng stream(uint64_t master, uint64_t stream_id) {
    uint64_t x = master;
    uint64_t a = splitmix64(x);
    uint64_t b = splitmix64(x);
    return Rng(a ^ (stream_id * 0xbf58476d1ce4e5b9ull + b));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  // Standard normal via Box-Muller (no cached second value, keeps the
  // stream position a pure function of the number of calls).
  double normal() {
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> state_;
};

}  // namespace cmpg
