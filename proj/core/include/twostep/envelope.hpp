#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "twostep/crypto.hpp"
#include "twostep/result.hpp"

namespace twostep {

class RandomSource;

/// Per-user 256-bit key shared by client and server at registration.
struct SymmetricKey {
  std::array<std::uint8_t, 32> bytes{};

  static SymmetricKey generate(RandomSource& rng);
  std::string to_base64() const;
  static std::optional<SymmetricKey> from_base64(std::string_view text);
};

/// The client -> server identification message. The nonce is drawn fresh
/// per message and doubles as the AEAD nonce, so it is never reused under
/// the same key.
struct IdentityMessage {
  std::string imei;
  std::string imsi;
  std::string username;
  std::array<std::uint8_t, kAeadNonceSize> nonce{};
  std::int64_t issued_at = 0;  // client clock, seconds since epoch

  static IdentityMessage make(std::string imei, std::string imsi,
                              std::string username, std::int64_t issued_at,
                              RandomSource& rng);
};

using Ciphertext = AeadBox;

enum class DecryptError { AuthFailure, StaleMessage };

const char* to_string(DecryptError e);

/// Canonical fixed-order JSON bytes of the message (the AEAD plaintext).
std::string canonical_identity_json(const IdentityMessage& msg);

Ciphertext encrypt_identity(const IdentityMessage& msg,
                            const SymmetricKey& key);

/// Returns the message iff authentication passes and
/// |now - issued_at| <= skew_seconds.
Result<IdentityMessage, DecryptError> decrypt_identity(
    const Ciphertext& ct, const SymmetricKey& key, std::int64_t now,
    std::int64_t skew_seconds);

/// Wire form "base64(nonce).base64(body||tag)".
std::string ciphertext_to_wire(const Ciphertext& ct);
std::optional<Ciphertext> ciphertext_from_wire(std::string_view wire);

}  // namespace twostep
