#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twostep/crypto.hpp"

namespace twostep {

class RandomSource;

/// Salted iterated password hash (PBKDF2-HMAC-SHA256). Only the derived
/// digest is ever persisted, never the password itself.
struct PasswordHash {
  std::array<std::uint8_t, 16> salt{};
  int iterations = 0;
  std::array<std::uint8_t, 32> digest{};
};

inline constexpr int kMinHashIterations = 10000;

/// Throws std::invalid_argument if iterations < 10,000 or the salt is not
/// exactly 16 bytes.
std::array<std::uint8_t, 32> hash_password(std::string_view password,
                                           std::span<const std::uint8_t> salt,
                                           int iterations);

/// Hashes under a fresh random 16-byte salt.
PasswordHash new_password_hash(std::string_view password, int iterations,
                               RandomSource& rng);

bool check_password(std::string_view password, const PasswordHash& hash);

/// A registered identity. Secrets live here only in derived or wrapped
/// form: the password as a salted hash, the symmetric key and PIN sealed
/// under the server master key.
struct UserRecord {
  std::string first;
  std::string last;
  std::string username;
  PasswordHash password_hash;
  AeadBox key_wrapped;
  std::string mobile;
  std::string imei;
  std::string imsi;
  AeadBox pin_wrapped;
  std::int64_t created_at = 0;
};

enum class PutStatus { Ok, DuplicateUsername };

/// User registry. Implementations serialize mutations; readers observe
/// committed snapshots.
class UserStore {
 public:
  virtual ~UserStore() = default;
  virtual PutStatus put_user(const UserRecord& record) = 0;
  virtual std::optional<UserRecord> get_user(const std::string& username) = 0;
  virtual std::size_t user_count() = 0;
};

class MemoryStore : public UserStore {
 public:
  PutStatus put_user(const UserRecord& record) override;
  std::optional<UserRecord> get_user(const std::string& username) override;
  std::size_t user_count() override;

 private:
  std::mutex mutex_;
  std::map<std::string, UserRecord> users_;
};

/// JSON-file-backed registry. Writes go to a temporary file that is
/// fsynced and atomically renamed over the store, so an interrupted write
/// leaves either the old or the new contents, never a torn file.
class FileStore : public UserStore {
 public:
  /// Loads the file if present; a missing file is an empty store.
  /// Throws std::runtime_error when the file exists but cannot be parsed.
  explicit FileStore(std::string path);

  PutStatus put_user(const UserRecord& record) override;
  std::optional<UserRecord> get_user(const std::string& username) override;
  std::size_t user_count() override;

  const std::string& path() const { return path_; }

 private:
  void persist_locked();

  std::mutex mutex_;
  std::string path_;
  std::map<std::string, UserRecord> users_;
};

}  // namespace twostep
