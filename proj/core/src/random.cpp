#include "twostep/random.hpp"

#include <openssl/rand.h>

#include <cstdio>
#include <stdexcept>

#include "twostep/crypto.hpp"

namespace twostep {

std::uint8_t RandomSource::next_byte() {
  std::uint8_t b = 0;
  fill({&b, 1});
  return b;
}

std::string RandomSource::hex(std::size_t n_bytes) {
  std::vector<std::uint8_t> buf(n_bytes);
  fill(buf);
  std::string out;
  out.reserve(2 * n_bytes);
  static constexpr char kHex[] = "0123456789abcdef";
  for (std::uint8_t b : buf) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0f]);
  }
  return out;
}

std::string RandomSource::decimal_digits(std::size_t count) {
  std::string out;
  out.reserve(count);
  while (out.size() < count) {
    const std::uint8_t b = next_byte();
    if (b < 250) out.push_back(static_cast<char>('0' + b % 10));
  }
  return out;
}

std::uint64_t RandomSource::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("below: bound must be nonzero");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  for (;;) {
    std::uint8_t buf[8];
    fill(buf);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
    if (v < limit) return v % bound;
  }
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

CounterDrbg::CounterDrbg(std::uint64_t seed) : seed_(seed) {}

void CounterDrbg::fill(std::span<std::uint8_t> out) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (std::uint8_t& b : out) {
    if (pos_ == block_.size()) {
      std::array<std::uint8_t, 16> input{};
      for (int i = 0; i < 8; ++i) {
        input[i] = static_cast<std::uint8_t>(seed_ >> (8 * i));
        input[8 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
      }
      block_ = sha256(input);
      ++counter_;
      pos_ = 0;
    }
    b = block_[pos_++];
  }
}

}  // namespace twostep
