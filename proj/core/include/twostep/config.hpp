#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "twostep/auth_service.hpp"
#include "twostep/provider.hpp"

namespace twostep {

class RandomSource;

/// Runtime settings for the server and CLI, loadable from a JSON file with
/// TWOSTEP_* environment overrides on top.
struct Config {
  std::string listen_address = "127.0.0.1";
  int listen_port = 8080;
  // Base URL of an external provider service; empty runs the provider
  // in-process.
  std::string provider_base_url;
  std::string store_path = "twostep-store.json";
  std::string outbox_path = "twostep-outbox.jsonl";
  std::string master_key_path = "twostep-master.key";

  int token_length = 6;
  std::int64_t token_validity_seconds = 600;
  int token_max_attempts = 5;
  int issue_limit = 5;
  std::int64_t issue_window_seconds = 600;

  int otp_length = 8;
  std::string window = "per-ten-minutes";  // or "per-minute"
  int tz_offset_minutes = 0;
  std::int64_t challenge_ttl_seconds = 600;
  std::int64_t envelope_skew_seconds = 120;
  int otp_max_attempts = 5;

  int pin_min_length = 8;
  int hash_iterations = 10000;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the JSON config file. Unknown keys, type mismatches, and syntax
/// errors raise ConfigError with file/line diagnostics.
Config load_config_file(const std::string& path);

/// Applies TWOSTEP_* environment variables over `cfg` (see README for the
/// full list). Malformed numeric values raise ConfigError.
void apply_env_overrides(Config& cfg);

/// Validated views over the raw Config; both throw ConfigError.
AuthConfig make_auth_config(const Config& cfg);
ProviderConfig make_provider_config(const Config& cfg);

/// Reads the base64 master key file, or creates it (0600) with fresh random
/// bytes when absent. Throws ConfigError on unreadable or malformed files.
SymmetricKey load_or_create_master_key(const std::string& path,
                                       RandomSource& rng);

}  // namespace twostep
