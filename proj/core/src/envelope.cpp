#include "twostep/envelope.hpp"

#include <algorithm>
#include <span>
#include <utility>

#include <nlohmann/json.hpp>

#include "twostep/base64.hpp"
#include "twostep/random.hpp"

namespace twostep {

SymmetricKey SymmetricKey::generate(RandomSource& rng) {
  SymmetricKey key;
  rng.fill(key.bytes);
  return key;
}

std::string SymmetricKey::to_base64() const {
  return base64_encode(bytes, /*pad=*/true);
}

std::optional<SymmetricKey> SymmetricKey::from_base64(std::string_view text) {
  auto raw = base64_decode(text);
  if (!raw || raw->size() != 32) {
    return std::nullopt;
  }
  SymmetricKey key;
  std::copy(raw->begin(), raw->end(), key.bytes.begin());
  secure_wipe(raw->data(), raw->size());
  return key;
}

IdentityMessage IdentityMessage::make(std::string imei, std::string imsi,
                                      std::string username,
                                      std::int64_t issued_at,
                                      RandomSource& rng) {
  IdentityMessage msg;
  msg.imei = std::move(imei);
  msg.imsi = std::move(imsi);
  msg.username = std::move(username);
  msg.issued_at = issued_at;
  rng.fill(msg.nonce);
  return msg;
}

const char* to_string(DecryptError e) {
  switch (e) {
    case DecryptError::AuthFailure:
      return "auth-failure";
    case DecryptError::StaleMessage:
      return "stale-message";
  }
  return "unknown";
}

std::string canonical_identity_json(const IdentityMessage& msg) {
  nlohmann::ordered_json j;
  j["imei"] = msg.imei;
  j["imsi"] = msg.imsi;
  j["username"] = msg.username;
  j["nonce"] = base64_encode(msg.nonce, /*pad=*/true);
  j["issued_at"] = msg.issued_at;
  return j.dump();
}

Ciphertext encrypt_identity(const IdentityMessage& msg,
                            const SymmetricKey& key) {
  std::string plaintext = canonical_identity_json(msg);
  std::span<const std::uint8_t> bytes(
      reinterpret_cast<const std::uint8_t*>(plaintext.data()),
      plaintext.size());
  Ciphertext ct = aead_seal(key.bytes, msg.nonce, bytes);
  secure_wipe(plaintext.data(), plaintext.size());
  return ct;
}

Result<IdentityMessage, DecryptError> decrypt_identity(
    const Ciphertext& ct, const SymmetricKey& key, std::int64_t now,
    std::int64_t skew_seconds) {
  auto plaintext = aead_open(key.bytes, ct);
  if (!plaintext) {
    return DecryptError::AuthFailure;
  }

  nlohmann::json j =
      nlohmann::json::parse(plaintext->begin(), plaintext->end(),
                            /*cb=*/nullptr, /*allow_exceptions=*/false);
  secure_wipe(plaintext->data(), plaintext->size());
  if (j.is_discarded() || !j.is_object()) {
    return DecryptError::AuthFailure;
  }
  if (!j.contains("imei") || !j["imei"].is_string() ||      //
      !j.contains("imsi") || !j["imsi"].is_string() ||      //
      !j.contains("username") || !j["username"].is_string() ||
      !j.contains("nonce") || !j["nonce"].is_string() ||
      !j.contains("issued_at") || !j["issued_at"].is_number_integer()) {
    return DecryptError::AuthFailure;
  }

  IdentityMessage msg;
  msg.imei = j["imei"].get<std::string>();
  msg.imsi = j["imsi"].get<std::string>();
  msg.username = j["username"].get<std::string>();
  msg.issued_at = j["issued_at"].get<std::int64_t>();

  // The nonce inside the sealed payload must match the transport nonce;
  // a mismatch means the envelope was reassembled.
  auto nonce_raw = base64_decode(j["nonce"].get<std::string>());
  if (!nonce_raw || nonce_raw->size() != kAeadNonceSize ||
      !constant_time_equal(*nonce_raw, ct.nonce)) {
    return DecryptError::AuthFailure;
  }
  std::copy(nonce_raw->begin(), nonce_raw->end(), msg.nonce.begin());

  std::int64_t delta = now - msg.issued_at;
  if (delta < 0) {
    delta = -delta;
  }
  if (delta > skew_seconds) {
    return DecryptError::StaleMessage;
  }
  return msg;
}

std::string ciphertext_to_wire(const Ciphertext& ct) {
  std::vector<std::uint8_t> sealed;
  sealed.reserve(ct.body.size() + ct.tag.size());
  sealed.insert(sealed.end(), ct.body.begin(), ct.body.end());
  sealed.insert(sealed.end(), ct.tag.begin(), ct.tag.end());
  return base64_encode(ct.nonce, /*pad=*/true) + "." +
         base64_encode(sealed, /*pad=*/true);
}

std::optional<Ciphertext> ciphertext_from_wire(std::string_view wire) {
  auto dot = wire.find('.');
  if (dot == std::string_view::npos || wire.find('.', dot + 1) != std::string_view::npos) {
    return std::nullopt;
  }
  auto nonce_raw = base64_decode(wire.substr(0, dot));
  auto sealed = base64_decode(wire.substr(dot + 1));
  if (!nonce_raw || nonce_raw->size() != kAeadNonceSize || !sealed ||
      sealed->size() < kAeadTagSize) {
    return std::nullopt;
  }
  Ciphertext ct;
  std::copy(nonce_raw->begin(), nonce_raw->end(), ct.nonce.begin());
  ct.body.assign(sealed->begin(), sealed->end() - kAeadTagSize);
  std::copy(sealed->end() - kAeadTagSize, sealed->end(), ct.tag.begin());
  return ct;
}

}  // namespace twostep
