#include "twostep/config.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "twostep/base64.hpp"
#include "twostep/envelope.hpp"
#include "twostep/otp.hpp"
#include "twostep/random.hpp"

namespace twostep {

namespace {

// Maps a byte offset from the JSON parser to 1-based line/column.
std::pair<std::size_t, std::size_t> line_of_offset(const std::string& text,
                                                   std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void fail_key(const std::string& path, const std::string& key,
                           const char* what) {
  throw ConfigError(path + ": key \"" + key + "\" " + what);
}

std::int64_t get_int(const nlohmann::json& j, const std::string& path,
                     const std::string& key) {
  if (!j.is_number_integer()) {
    fail_key(path, key, "must be an integer");
  }
  return j.get<std::int64_t>();
}

int get_int32(const nlohmann::json& j, const std::string& path,
              const std::string& key) {
  std::int64_t v = get_int(j, path, key);
  if (v < INT32_MIN || v > INT32_MAX) {
    fail_key(path, key, "is out of range");
  }
  return static_cast<int>(v);
}

std::string get_string(const nlohmann::json& j, const std::string& path,
                       const std::string& key) {
  if (!j.is_string()) {
    fail_key(path, key, "must be a string");
  }
  return j.get<std::string>();
}

std::int64_t parse_env_int(const char* name, const char* value) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value, &end, 10);
  if (errno != 0 || end == value || *end != '\0') {
    throw ConfigError(std::string(name) + ": expected an integer, got \"" +
                      value + "\"");
  }
  return v;
}

}  // namespace

Config load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(path + ": cannot open config file");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(path + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError(path + ": top-level value must be an object");
  }

  Config cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "listen_address") {
      cfg.listen_address = get_string(value, path, key);
    } else if (key == "listen_port") {
      cfg.listen_port = get_int32(value, path, key);
    } else if (key == "provider_base_url") {
      cfg.provider_base_url = get_string(value, path, key);
    } else if (key == "store_path") {
      cfg.store_path = get_string(value, path, key);
    } else if (key == "outbox_path") {
      cfg.outbox_path = get_string(value, path, key);
    } else if (key == "master_key_path") {
      cfg.master_key_path = get_string(value, path, key);
    } else if (key == "token_length") {
      cfg.token_length = get_int32(value, path, key);
    } else if (key == "token_validity_seconds") {
      cfg.token_validity_seconds = get_int(value, path, key);
    } else if (key == "token_max_attempts") {
      cfg.token_max_attempts = get_int32(value, path, key);
    } else if (key == "issue_limit") {
      cfg.issue_limit = get_int32(value, path, key);
    } else if (key == "issue_window_seconds") {
      cfg.issue_window_seconds = get_int(value, path, key);
    } else if (key == "otp_length") {
      cfg.otp_length = get_int32(value, path, key);
    } else if (key == "window") {
      cfg.window = get_string(value, path, key);
    } else if (key == "tz_offset_minutes") {
      cfg.tz_offset_minutes = get_int32(value, path, key);
    } else if (key == "challenge_ttl_seconds") {
      cfg.challenge_ttl_seconds = get_int(value, path, key);
    } else if (key == "envelope_skew_seconds") {
      cfg.envelope_skew_seconds = get_int(value, path, key);
    } else if (key == "otp_max_attempts") {
      cfg.otp_max_attempts = get_int32(value, path, key);
    } else if (key == "pin_min_length") {
      cfg.pin_min_length = get_int32(value, path, key);
    } else if (key == "hash_iterations") {
      cfg.hash_iterations = get_int32(value, path, key);
    } else {
      throw ConfigError(path + ": unknown key \"" + key + "\"");
    }
  }
  return cfg;
}

void apply_env_overrides(Config& cfg) {
  auto str = [](const char* name, std::string& out) {
    if (const char* v = std::getenv(name)) {
      out = v;
    }
  };
  auto i32 = [](const char* name, int& out) {
    if (const char* v = std::getenv(name)) {
      out = static_cast<int>(parse_env_int(name, v));
    }
  };
  auto i64 = [](const char* name, std::int64_t& out) {
    if (const char* v = std::getenv(name)) {
      out = parse_env_int(name, v);
    }
  };

  str("TWOSTEP_LISTEN_ADDRESS", cfg.listen_address);
  i32("TWOSTEP_LISTEN_PORT", cfg.listen_port);
  str("TWOSTEP_PROVIDER_URL", cfg.provider_base_url);
  str("TWOSTEP_STORE_PATH", cfg.store_path);
  str("TWOSTEP_OUTBOX_PATH", cfg.outbox_path);
  str("TWOSTEP_MASTER_KEY_PATH", cfg.master_key_path);
  i32("TWOSTEP_TOKEN_LENGTH", cfg.token_length);
  i64("TWOSTEP_TOKEN_VALIDITY_SECONDS", cfg.token_validity_seconds);
  i32("TWOSTEP_TOKEN_MAX_ATTEMPTS", cfg.token_max_attempts);
  i32("TWOSTEP_ISSUE_LIMIT", cfg.issue_limit);
  i64("TWOSTEP_ISSUE_WINDOW_SECONDS", cfg.issue_window_seconds);
  i32("TWOSTEP_OTP_LENGTH", cfg.otp_length);
  str("TWOSTEP_WINDOW", cfg.window);
  i32("TWOSTEP_TZ_OFFSET_MINUTES", cfg.tz_offset_minutes);
  i64("TWOSTEP_CHALLENGE_TTL_SECONDS", cfg.challenge_ttl_seconds);
  i64("TWOSTEP_ENVELOPE_SKEW_SECONDS", cfg.envelope_skew_seconds);
  i32("TWOSTEP_OTP_MAX_ATTEMPTS", cfg.otp_max_attempts);
  i32("TWOSTEP_PIN_MIN_LENGTH", cfg.pin_min_length);
  i32("TWOSTEP_HASH_ITERATIONS", cfg.hash_iterations);
}

AuthConfig make_auth_config(const Config& cfg) {
  auto window = otp_window_from_string(cfg.window);
  if (!window) {
    throw ConfigError("window must be \"per-minute\" or \"per-ten-minutes\"");
  }
  if (cfg.otp_length < static_cast<int>(kMinOtpLength) ||
      cfg.otp_length > static_cast<int>(kMaxOtpLength)) {
    throw ConfigError("otp_length must be in 4..28");
  }
  if (cfg.pin_min_length < 4) {
    throw ConfigError("pin_min_length must be at least 4");
  }
  if (cfg.hash_iterations < kMinHashIterations) {
    throw ConfigError("hash_iterations must be at least 10000");
  }
  if (cfg.challenge_ttl_seconds <= 0 || cfg.envelope_skew_seconds <= 0) {
    throw ConfigError("challenge_ttl_seconds and envelope_skew_seconds must "
                      "be positive");
  }
  if (cfg.otp_max_attempts < 1) {
    throw ConfigError("otp_max_attempts must be at least 1");
  }
  if (cfg.tz_offset_minutes < -18 * 60 || cfg.tz_offset_minutes > 18 * 60) {
    throw ConfigError("tz_offset_minutes must be within +-1080");
  }

  AuthConfig out;
  out.pin_policy.min_length = static_cast<std::size_t>(cfg.pin_min_length);
  out.otp_policy.otp_length = static_cast<std::size_t>(cfg.otp_length);
  out.otp_policy.window = *window;
  out.tz_offset_minutes = cfg.tz_offset_minutes;
  out.challenge_ttl_seconds = cfg.challenge_ttl_seconds;
  out.envelope_skew_seconds = cfg.envelope_skew_seconds;
  out.otp_max_attempts = cfg.otp_max_attempts;
  out.hash_iterations = cfg.hash_iterations;
  return out;
}

ProviderConfig make_provider_config(const Config& cfg) {
  if (cfg.token_length < 4 || cfg.token_length > 10) {
    throw ConfigError("token_length must be in 4..10");
  }
  if (cfg.token_validity_seconds <= 0) {
    throw ConfigError("token_validity_seconds must be positive");
  }
  if (cfg.token_max_attempts < 1) {
    throw ConfigError("token_max_attempts must be at least 1");
  }
  if (cfg.issue_limit < 1 || cfg.issue_window_seconds <= 0) {
    throw ConfigError("issue_limit and issue_window_seconds must be positive");
  }

  ProviderConfig out;
  out.token_length = cfg.token_length;
  out.validity_seconds = cfg.token_validity_seconds;
  out.max_attempts = cfg.token_max_attempts;
  out.issue_limit = cfg.issue_limit;
  out.issue_window_seconds = cfg.issue_window_seconds;
  return out;
}

SymmetricKey load_or_create_master_key(const std::string& path,
                                       RandomSource& rng) {
  std::ifstream in(path, std::ios::binary);
  if (in) {
    std::string line;
    std::getline(in, line);
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' ||
                             line.back() == ' ')) {
      line.pop_back();
    }
    auto key = SymmetricKey::from_base64(line);
    secure_wipe(line.data(), line.size());
    if (!key) {
      throw ConfigError(path + ": expected base64 of exactly 32 key bytes");
    }
    return *key;
  }

  SymmetricKey key = SymmetricKey::generate(rng);
  std::string encoded = key.to_base64();
  encoded.push_back('\n');
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0600);
  if (fd < 0) {
    throw ConfigError(path + ": cannot create master key file: " +
                      std::generic_category().message(errno));
  }
  const char* data = encoded.data();
  std::size_t remaining = encoded.size();
  while (remaining > 0) {
    ssize_t n = ::write(fd, data, remaining);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      int err = errno;
      ::close(fd);
      ::unlink(path.c_str());
      throw ConfigError(path + ": cannot write master key file: " +
                        std::generic_category().message(err));
    }
    data += n;
    remaining -= static_cast<std::size_t>(n);
  }
  bool synced = ::fsync(fd) == 0;
  bool closed = ::close(fd) == 0;
  secure_wipe(encoded.data(), encoded.size());
  if (!synced || !closed) {
    ::unlink(path.c_str());
    throw ConfigError(path + ": cannot sync master key file");
  }
  return key;
}

}  // namespace twostep
