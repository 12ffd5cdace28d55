#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace imedbot {

// Seeded 64-bit generator used for every random decision in the library.
//
// State advance and output follow SplitMix64:
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// Bounded integers use Lemire's multiply-shift with rejection, doubles take
// the top 53 bits. The stream is a pure function of the seed on every
// platform, which is what makes training and splitting reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return finalize(state_);
  }

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  // Fisher-Yates, walking from the back.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // SplitMix64 output function (a bijective avalanche mixer).
  static constexpr std::uint64_t finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Derives a child seed from a parent seed and two coordinates, e.g.
// (master_seed, setting_index, fold). Each word is folded in with a distinct
// odd constant and passed through the SplitMix64 finalizer, so neighbouring
// coordinates give unrelated streams and the result never depends on the
// order in which work happens to be scheduled.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) noexcept {
  std::uint64_t h = Rng::finalize(a ^ 0x9E3779B97F4A7C15ULL);
  h = Rng::finalize(h ^ (b + 0xC2B2AE3D27D4EB4FULL));
  h = Rng::finalize(h ^ (c + 0x165667B19E3779F9ULL));
  return h;
}

}  // namespace imedbot
