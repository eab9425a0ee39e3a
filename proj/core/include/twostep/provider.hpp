#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "twostep/result.hpp"

namespace twostep {

class RandomSource;

/// Knobs for token issuance and verification.
struct ProviderConfig {
  int token_length = 6;             // decimal digits, 4..=10
  std::int64_t validity_seconds = 600;
  int max_attempts = 5;             // failed verifies before forced expiry
  int issue_limit = 5;              // per mobile ...
  std::int64_t issue_window_seconds = 600;  // ... per this window
};

enum class TokenState { Pending, Consumed, Expired };
const char* to_string(TokenState s);

enum class TokenVerdict { Valid, Invalid, Expired, Consumed, Unknown };
const char* to_string(TokenVerdict v);
std::optional<TokenVerdict> token_verdict_from_string(std::string_view text);

/// One simulated SMS.
struct SmsRecord {
  std::string mobile;
  std::string body;
  std::int64_t sent_at = 0;
};

/// Pluggable SMS delivery. Implementations must be safe to call from
/// concurrent request handlers.
class SmsTransport {
 public:
  virtual ~SmsTransport() = default;
  virtual void send(const SmsRecord& sms) = 0;
};

/// In-memory transport for tests.
class MemoryOutbox : public SmsTransport {
 public:
  void send(const SmsRecord& sms) override;
  std::vector<SmsRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<SmsRecord> records_;
};

/// Append-only JSON-lines file transport.
class FileOutbox : public SmsTransport {
 public:
  explicit FileOutbox(std::string path);
  void send(const SmsRecord& sms) override;
  const std::string& path() const { return path_; }

 private:
  std::mutex mutex_;
  std::string path_;
};

struct OutboxFile {
  std::vector<SmsRecord> records;
  std::vector<std::size_t> malformed_lines;  // 1-based line numbers
};

/// Reads a JSON-lines outbox file; malformed lines are reported, not fatal.
/// A missing file reads as empty.
OutboxFile read_outbox_file(const std::string& path);

/// True iff mobile is '+' followed by 7..15 decimal digits.
bool valid_mobile(std::string_view mobile);

struct Issued {
  std::string txid;  // 32 lowercase hex chars
};

enum class IssueError { BadMobile, Throttled };
const char* to_string(IssueError e);

using IssueResult = Result<Issued, IssueError>;

/// Externally visible record state; never carries the token value.
struct TokenStatus {
  TokenState state = TokenState::Pending;
  int failed_attempts = 0;
  std::string mobile;
  std::int64_t issued_at = 0;
  std::int64_t expires_at = 0;
};

/// The simulated service provider: issues single-use tokens over SMS and
/// validates (txid, token) pairs.
class Provider {
 public:
  Provider(ProviderConfig cfg, RandomSource& rng, SmsTransport& sms);

  /// Issues a fresh token to the mobile. On success the token itself goes
  /// only to the SMS transport; the caller sees the transaction id alone.
  IssueResult issue_token(const std::string& mobile, std::int64_t now);

  TokenVerdict verify_token(const std::string& txid, const std::string& token,
                            std::int64_t now);

  /// Expires every pending record past its deadline; returns the count.
  std::size_t sweep_expired(std::int64_t now);

  /// Inspection hook for tests and operators; excludes the token value.
  std::optional<TokenStatus> token_state(const std::string& txid) const;

  const ProviderConfig& config() const { return cfg_; }

 private:
  struct TokenRecord {
    std::string mobile;
    std::string token;
    std::int64_t issued_at = 0;
    std::int64_t expires_at = 0;
    TokenState state = TokenState::Pending;
    int failed_attempts = 0;
  };

  ProviderConfig cfg_;
  RandomSource& rng_;
  SmsTransport& sms_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, TokenRecord> records_;
  std::unordered_map<std::string, std::deque<std::int64_t>> issue_times_;
};

}  // namespace twostep
