#include "twostep/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <system_error>
#include <utility>

#include <nlohmann/json.hpp>

#include "twostep/base64.hpp"
#include "twostep/random.hpp"

namespace twostep {

namespace {

std::string box_to_base64(const AeadBox& box) {
  std::vector<std::uint8_t> raw;
  raw.reserve(box.nonce.size() + box.body.size() + box.tag.size());
  raw.insert(raw.end(), box.nonce.begin(), box.nonce.end());
  raw.insert(raw.end(), box.body.begin(), box.body.end());
  raw.insert(raw.end(), box.tag.begin(), box.tag.end());
  return base64_encode(raw, /*pad=*/true);
}

std::optional<AeadBox> box_from_base64(const std::string& text) {
  auto raw = base64_decode(text);
  if (!raw || raw->size() < kAeadNonceSize + kAeadTagSize) {
    return std::nullopt;
  }
  AeadBox box;
  auto it = raw->begin();
  std::copy(it, it + kAeadNonceSize, box.nonce.begin());
  it += kAeadNonceSize;
  box.body.assign(it, raw->end() - kAeadTagSize);
  std::copy(raw->end() - kAeadTagSize, raw->end(), box.tag.begin());
  return box;
}

nlohmann::ordered_json user_to_json(const UserRecord& u) {
  nlohmann::ordered_json j;
  j["first"] = u.first;
  j["last"] = u.last;
  j["username"] = u.username;
  j["salt"] = base64_encode(u.password_hash.salt, /*pad=*/true);
  j["iterations"] = u.password_hash.iterations;
  j["digest"] = base64_encode(u.password_hash.digest, /*pad=*/true);
  j["key_wrapped"] = box_to_base64(u.key_wrapped);
  j["mobile"] = u.mobile;
  j["imei"] = u.imei;
  j["imsi"] = u.imsi;
  j["pin_wrapped"] = box_to_base64(u.pin_wrapped);
  j["created_at"] = u.created_at;
  return j;
}

UserRecord user_from_json(const nlohmann::json& j) {
  auto need_string = [&j](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw std::runtime_error(std::string("store: missing field ") + key);
    }
    return j[key].get<std::string>();
  };
  auto need_int = [&j](const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
      throw std::runtime_error(std::string("store: missing field ") + key);
    }
    return j[key].get<std::int64_t>();
  };

  UserRecord u;
  u.first = need_string("first");
  u.last = need_string("last");
  u.username = need_string("username");
  u.mobile = need_string("mobile");
  u.imei = need_string("imei");
  u.imsi = need_string("imsi");
  u.created_at = need_int("created_at");
  u.password_hash.iterations = static_cast<int>(need_int("iterations"));

  auto salt = base64_decode(need_string("salt"));
  auto digest = base64_decode(need_string("digest"));
  if (!salt || salt->size() != u.password_hash.salt.size() ||  //
      !digest || digest->size() != u.password_hash.digest.size()) {
    throw std::runtime_error("store: bad password hash encoding");
  }
  std::copy(salt->begin(), salt->end(), u.password_hash.salt.begin());
  std::copy(digest->begin(), digest->end(), u.password_hash.digest.begin());

  auto key_box = box_from_base64(need_string("key_wrapped"));
  auto pin_box = box_from_base64(need_string("pin_wrapped"));
  if (!key_box || !pin_box) {
    throw std::runtime_error("store: bad wrapped secret encoding");
  }
  u.key_wrapped = std::move(*key_box);
  u.pin_wrapped = std::move(*pin_box);
  return u;
}

}  // namespace

std::array<std::uint8_t, 32> hash_password(std::string_view password,
                                           std::span<const std::uint8_t> salt,
                                           int iterations) {
  if (iterations < kMinHashIterations) {
    throw std::invalid_argument("password hash iterations below 10000");
  }
  if (salt.size() != 16) {
    throw std::invalid_argument("password salt must be 16 bytes");
  }
  return pbkdf2_hmac_sha256(password, salt, iterations);
}

PasswordHash new_password_hash(std::string_view password, int iterations,
                               RandomSource& rng) {
  PasswordHash hash;
  rng.fill(hash.salt);
  hash.iterations = iterations;
  hash.digest = hash_password(password, hash.salt, iterations);
  return hash;
}

bool check_password(std::string_view password, const PasswordHash& hash) {
  auto derived = hash_password(password, hash.salt, hash.iterations);
  bool ok = constant_time_equal(derived, hash.digest);
  secure_wipe(derived.data(), derived.size());
  return ok;
}

PutStatus MemoryStore::put_user(const UserRecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = users_.emplace(record.username, record);
  return inserted ? PutStatus::Ok : PutStatus::DuplicateUsername;
}

std::optional<UserRecord> MemoryStore::get_user(const std::string& username) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = users_.find(username);
  if (it == users_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::size_t MemoryStore::user_count() {
  std::lock_guard<std::mutex> lock(mutex_);
  return users_.size();
}

FileStore::FileStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) {
    return;  // first run: store starts empty, created on first put
  }
  nlohmann::json doc = nlohmann::json::parse(in, nullptr,
                                             /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw std::runtime_error("store: cannot parse " + path_);
  }
  if (!doc.contains("version") || doc["version"] != 1) {
    throw std::runtime_error("store: unsupported version in " + path_);
  }
  if (!doc.contains("users") || !doc["users"].is_array()) {
    throw std::runtime_error("store: missing users array in " + path_);
  }
  for (const auto& entry : doc["users"]) {
    UserRecord u = user_from_json(entry);
    std::string username = u.username;
    if (!users_.emplace(std::move(username), std::move(u)).second) {
      throw std::runtime_error("store: duplicate username in " + path_);
    }
  }
}

PutStatus FileStore::put_user(const UserRecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = users_.emplace(record.username, record);
  if (!inserted) {
    return PutStatus::DuplicateUsername;
  }
  try {
    persist_locked();
  } catch (...) {
    users_.erase(it);  // keep memory and disk in step
    throw;
  }
  return PutStatus::Ok;
}

std::optional<UserRecord> FileStore::get_user(const std::string& username) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = users_.find(username);
  if (it == users_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::size_t FileStore::user_count() {
  std::lock_guard<std::mutex> lock(mutex_);
  return users_.size();
}

void FileStore::persist_locked() {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  auto& arr = doc["users"] = nlohmann::ordered_json::array();
  for (const auto& [username, user] : users_) {
    arr.push_back(user_to_json(user));
  }
  std::string payload = doc.dump(2);
  payload.push_back('\n');

  std::string tmp_path = path_ + ".tmp";
  int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) {
    throw std::system_error(errno, std::generic_category(),
                            "cannot open " + tmp_path);
  }
  const char* data = payload.data();
  std::size_t remaining = payload.size();
  while (remaining > 0) {
    ssize_t n = ::write(fd, data, remaining);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      int err = errno;
      ::close(fd);
      ::unlink(tmp_path.c_str());
      throw std::system_error(err, std::generic_category(),
                              "cannot write " + tmp_path);
    }
    data += n;
    remaining -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    int err = errno;
    ::unlink(tmp_path.c_str());
    throw std::system_error(err, std::generic_category(),
                            "cannot sync " + tmp_path);
  }
  if (::rename(tmp_path.c_str(), path_.c_str()) != 0) {
    int err = errno;
    ::unlink(tmp_path.c_str());
    throw std::system_error(err, std::generic_category(),
                            "cannot replace " + path_);
  }
}

}  // namespace twostep
