#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>

namespace twostep {

/// Byte-stream randomness source. Implementations are safe for concurrent
/// use from multiple threads.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint8_t next_byte();
  /// Lowercase hex of n_bytes fresh bytes (2 * n_bytes characters).
  std::string hex(std::size_t n_bytes);
  /// Unbiased decimal digits: stream bytes >= 250 are discarded, the rest
  /// map to byte % 10.
  std::string decimal_digits(std::size_t count);
  /// Uniform draw from [0, bound). bound must be nonzero.
  std::uint64_t below(std::uint64_t bound);
};

/// The operating system CSPRNG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Deterministic stream for tests and vector dumps: the concatenation of
/// SHA256(LE64(seed) || LE64(counter)) blocks for counter = 0, 1, 2, ...
class CounterDrbg final : public RandomSource {
 public:
  explicit CounterDrbg(std::uint64_t seed);
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::mutex mutex_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint8_t, 32> block_{};
  std::size_t pos_ = 32;  // forces a refill on first use
};

}  // namespace twostep
