#pragma once

#include <cmath>
#include <cstdint>

namespace fieldmc {

// Stream identity. A sample's randomness is addressed by (level tag, index)
// with round fixed to zero, so re-planning or re-batching in later rounds can
// never change which numbers a given sample sees.
struct seed_key {
  std::uint64_t run;
  std::uint64_t round;
  std::uint64_t level;
  std::uint64_t index;
  std::uint64_t stage;
};

namespace stage {
inline constexpr std::uint64_t cell_noise = 0xC311;
inline constexpr std::uint64_t node_noise = 0x40DE;
inline constexpr std::uint64_t virtual_noise = 0x51A7;
}  // namespace stage

namespace detail {
inline std::uint64_t avalanche(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: the key is hashed into a start state and each draw
// advances a Weyl sequence through a strong finalizer. Streams under distinct
// keys are independent for all practical purposes and cheap to construct, so
// every sample owns its own stream.
class keyed_stream {
 public:
  explicit keyed_stream(const seed_key& k) {
    std::uint64_t h = 0x243F6A8885A308D3ull;
    for (std::uint64_t f : {k.run, k.round, k.level, k.index, k.stage})
      h = detail::avalanche(h ^ f);
    state_ = h;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::avalanche(state_);
  }

  // strictly inside (0,1): the half-step keeps log() and log1p() safe
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace fieldmc
