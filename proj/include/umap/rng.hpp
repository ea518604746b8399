#pragma once

#include <cstdint>

namespace umap {

// SplitMix64 finalizer. Used both as the generator's output function and to
// derive independent substream seeds from (seed, subsystem id).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Well-known subsystem ids for substream derivation.
enum class Substream : std::uint64_t {
  Spawn = 1,
  Scenario = 2,
  Policy = 3,
  Episode = 4,
};

// SplitMix64 (Steele, Lea, Flood 2014): a counter-based 64-bit generator.
// The whole state is one integer, so WorldState stays a plain comparable value
// and the output sequence is identical on every platform.
class Rng {
 public:
  constexpr Rng() = default;
  constexpr explicit Rng(std::uint64_t seed) : state_(seed) {}

  static constexpr Rng substream(std::uint64_t seed, std::uint64_t subsystem) {
    return Rng(mix64(seed ^ mix64(subsystem + 0x9e3779b97f4a7c15ULL)));
  }
  static constexpr Rng substream(std::uint64_t seed, Substream s) {
    return substream(seed, static_cast<std::uint64_t>(s));
  }

  constexpr std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  constexpr double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Lemire's multiply-shift; the tiny bias is irrelevant here.
  constexpr std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  constexpr std::uint64_t state() const { return state_; }
  constexpr bool operator==(const Rng&) const = default;

 private:
  std::uint64_t state_ = 0;
};

}  // namespace umap
