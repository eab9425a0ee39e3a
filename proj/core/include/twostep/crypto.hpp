#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace twostep {

class RandomSource;

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> data);
Sha256Digest sha256(std::string_view text);

/// PBKDF2-HMAC-SHA256 with a 32-byte output.
std::array<std::uint8_t, 32> pbkdf2_hmac_sha256(
    std::string_view password, std::span<const std::uint8_t> salt,
    int iterations);

inline constexpr std::size_t kAeadNonceSize = 12;
inline constexpr std::size_t kAeadTagSize = 16;

/// An AES-256-GCM sealed box. Any bit flip in nonce, body, or tag makes
/// aead_open fail.
struct AeadBox {
  std::array<std::uint8_t, kAeadNonceSize> nonce{};
  std::vector<std::uint8_t> body;
  std::array<std::uint8_t, kAeadTagSize> tag{};
};

AeadBox aead_seal(std::span<const std::uint8_t, 32> key,
                  std::span<const std::uint8_t, kAeadNonceSize> nonce,
                  std::span<const std::uint8_t> plaintext);

/// Seals with a fresh random nonce.
AeadBox aead_seal(std::span<const std::uint8_t, 32> key,
                  std::span<const std::uint8_t> plaintext, RandomSource& rng);

std::optional<std::vector<std::uint8_t>> aead_open(
    std::span<const std::uint8_t, 32> key, const AeadBox& box);

/// Compares in time independent of content. Length mismatch returns false.
bool constant_time_equal(std::string_view a, std::string_view b);
bool constant_time_equal(std::span<const std::uint8_t> a,
                         std::span<const std::uint8_t> b);

/// Best-effort zeroization that the optimizer may not elide.
void secure_wipe(void* data, std::size_t size);

}  // namespace twostep
