#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dac {

/// SplitMix64 finalizer. Bijective 64-bit avalanche mixer.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives the seed of cell (a, b) from a master seed. Pure: any cell can be
/// regenerated in isolation, independently of scheduling order.
[[nodiscard]] std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                                           std::uint64_t b = 0) noexcept;

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3").
[[nodiscard]] std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                                         std::array<std::uint32_t, 2> key) noexcept;

/*!
 * Counter-based random stream.
 *
 * The key is the 64-bit stream seed and the counter advances by one Philox
 * block per two 64-bit outputs, so a stream is fully determined by its seed.
 * Child streams are derived with substream_seed(), never by drawing from the
 * parent, which keeps parallel work reproducible for any worker count.
 *
 * Satisfies std::uniform_random_bit_generator.
 */
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0) noexcept;

  [[nodiscard]] static constexpr result_type min() noexcept { return 0; }
  [[nodiscard]] static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;
  /// Standard exponential.
  double exponential() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  [[nodiscard]] Stream child(std::uint64_t a, std::uint64_t b = 0) const noexcept {
    return Stream(substream_seed(seed_, a, b));
  }

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dac
