#include "twostep/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

#include "twostep/random.hpp"

namespace twostep {

namespace {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

[[noreturn]] void fail(const char* what) {
  throw std::runtime_error(std::string("openssl: ") + what);
}

}  // namespace

Sha256Digest sha256(std::span<const std::uint8_t> data) {
  Sha256Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size()) {
    fail("EVP_Digest(sha256)");
  }
  return out;
}

Sha256Digest sha256(std::string_view text) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::array<std::uint8_t, 32> pbkdf2_hmac_sha256(
    std::string_view password, std::span<const std::uint8_t> salt,
    int iterations) {
  std::array<std::uint8_t, 32> out{};
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                        salt.data(), static_cast<int>(salt.size()), iterations,
                        EVP_sha256(), static_cast<int>(out.size()),
                        out.data()) != 1) {
    fail("PKCS5_PBKDF2_HMAC");
  }
  return out;
}

AeadBox aead_seal(std::span<const std::uint8_t, 32> key,
                  std::span<const std::uint8_t, kAeadNonceSize> nonce,
                  std::span<const std::uint8_t> plaintext) {
  AeadBox box;
  std::copy(nonce.begin(), nonce.end(), box.nonce.begin());
  box.body.resize(plaintext.size());

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail("EVP_CIPHER_CTX_new");
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr,
                         nullptr) != 1)
    fail("EncryptInit(aes-256-gcm)");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kAeadNonceSize,
                          nullptr) != 1)
    fail("set ivlen");
  if (EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                         box.nonce.data()) != 1)
    fail("EncryptInit(key/iv)");
  int len = 0;
  if (!plaintext.empty()) {
    if (EVP_EncryptUpdate(ctx.get(), box.body.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
      fail("EncryptUpdate");
  }
  int fin = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), box.body.data() + len, &fin) != 1)
    fail("EncryptFinal");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kAeadTagSize,
                          box.tag.data()) != 1)
    fail("get tag");
  return box;
}

AeadBox aead_seal(std::span<const std::uint8_t, 32> key,
                  std::span<const std::uint8_t> plaintext, RandomSource& rng) {
  std::array<std::uint8_t, kAeadNonceSize> nonce{};
  rng.fill(nonce);
  return aead_seal(key, nonce, plaintext);
}

std::optional<std::vector<std::uint8_t>> aead_open(
    std::span<const std::uint8_t, 32> key, const AeadBox& box) {
  std::vector<std::uint8_t> out(box.body.size());

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) fail("EVP_CIPHER_CTX_new");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr,
                         nullptr) != 1)
    fail("DecryptInit(aes-256-gcm)");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kAeadNonceSize,
                          nullptr) != 1)
    fail("set ivlen");
  if (EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(),
                         box.nonce.data()) != 1)
    fail("DecryptInit(key/iv)");
  int len = 0;
  if (!box.body.empty()) {
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, box.body.data(),
                          static_cast<int>(box.body.size())) != 1)
      return std::nullopt;
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kAeadTagSize,
                          const_cast<std::uint8_t*>(box.tag.data())) != 1)
    fail("set tag");
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &fin) != 1) {
    secure_wipe(out.data(), out.size());
    return std::nullopt;
  }
  return out;
}

bool constant_time_equal(std::span<const std::uint8_t> a,
                         std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  return constant_time_equal(
      std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(a.data()), a.size()),
      std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(b.data()), b.size()));
}

void secure_wipe(void* data, std::size_t size) {
  if (data != nullptr && size > 0) OPENSSL_cleanse(data, size);
}

}  // namespace twostep
