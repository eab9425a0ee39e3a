#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "twostep/envelope.hpp"
#include "twostep/otp.hpp"
#include "twostep/provider.hpp"
#include "twostep/result.hpp"
#include "twostep/store.hpp"

namespace twostep {

class AuditLog;
class Clock;

struct AuthConfig {
  PinPolicy pin_policy;
  OtpPolicy otp_policy;
  int tz_offset_minutes = 0;
  std::int64_t challenge_ttl_seconds = 600;  // matches token validity
  std::int64_t envelope_skew_seconds = 120;
  int otp_max_attempts = 5;  // connection-less failures per user per window
  int hash_iterations = kMinHashIterations;
};

enum class DenyReason { BadPassword, BadIdentity, BadToken, Expired, Throttled };
const char* to_string(DenyReason r);

/// The externally visible grant/deny outcome. The reason is present iff
/// denied and is for audit trails; API layers surface only "denied".
struct AuthDecision {
  bool granted = false;
  std::optional<DenyReason> reason;

  static AuthDecision grant() { return AuthDecision{true, std::nullopt}; }
  static AuthDecision deny(DenyReason r) { return AuthDecision{false, r}; }
};

enum class ChallengeState { AwaitingToken, Granted, Denied, Expired };
const char* to_string(ChallengeState s);

enum class RegisterErrorKind {
  DuplicateUsername,
  WeakPassword,
  MalformedIdentifier
};

struct RegisterError {
  RegisterErrorKind kind;
  std::vector<PinViolation> violations;  // set for WeakPassword
  std::string detail;                    // offending field for Malformed*
};

/// Registration summary. `key` is handed out exactly once, here; it is
/// never retrievable again in plaintext.
struct Registration {
  std::string username;
  std::string mobile;
  SymmetricKey key;
};

struct BeginOk {
  std::string challenge_id;  // 32 hex chars
  std::string txid;
};

/// Provider could not be reached; the caller may retry.
struct UpstreamUnavailable {};

using BeginResult = std::variant<BeginOk, AuthDecision, UpstreamUnavailable>;

/// Token issuance/verification as seen by the auth server. Implementations
/// return std::nullopt when the provider cannot be reached.
class ProviderApi {
 public:
  virtual ~ProviderApi() = default;
  virtual std::optional<IssueResult> issue(const std::string& mobile,
                                           std::int64_t now) = 0;
  virtual std::optional<TokenVerdict> verify(const std::string& txid,
                                             const std::string& token,
                                             std::int64_t now) = 0;
};

/// Direct in-process binding to a Provider instance.
class InProcessProvider final : public ProviderApi {
 public:
  explicit InProcessProvider(Provider& provider) : provider_(provider) {}
  std::optional<IssueResult> issue(const std::string& mobile,
                                   std::int64_t now) override;
  std::optional<TokenVerdict> verify(const std::string& txid,
                                     const std::string& token,
                                     std::int64_t now) override;

 private:
  Provider& provider_;
};

/// The corporate-side authentication service: registration, password-first
/// two-step login orchestrated through the provider, and the connection-less
/// locally-derived-OTP path.
///
/// Thread safety: all entry points may be called from concurrent request
/// handlers. Shared state is mutated only under locks; token verification
/// for one challenge is serialized so a challenge grants at most once.
class AuthService {
 public:
  AuthService(AuthConfig cfg, UserStore& store, ProviderApi& provider,
              const SymmetricKey& master_key, RandomSource& rng, Clock& clock,
              AuditLog& audit);

  /// Creates the user with a salted password hash and a fresh symmetric
  /// key. The password doubles as the OTP PIN and must satisfy the PIN
  /// policy; it is persisted only hashed and master-key-wrapped.
  Result<Registration, RegisterError> register_user(
      const std::string& first, const std::string& last,
      const std::string& username, const std::string& password,
      const std::string& mobile, const std::string& imei,
      const std::string& imsi);

  /// Password check, then envelope decryption and factor comparison, then
  /// provider token issuance — in that order, short-circuiting on failure.
  BeginResult begin_login(const std::string& username,
                          const std::string& password,
                          const Ciphertext& envelope);

  /// Forwards (txid, token) to the provider while the challenge is alive.
  AuthDecision complete_login(const std::string& challenge_id,
                              const std::string& token);

  /// Server-side OTP derivation for the current and previous window; each
  /// OTP value is accepted at most once per user and window.
  AuthDecision connectionless_verify(const std::string& username,
                                     const std::string& otp);

  /// Inspection hook for tests; absent for unknown ids.
  std::optional<ChallengeState> challenge_state(
      const std::string& challenge_id) const;

  const AuthConfig& config() const { return cfg_; }

 private:
  struct Challenge {
    std::string username;
    std::string txid;
    std::int64_t created_at = 0;
    ChallengeState state = ChallengeState::AwaitingToken;
    std::mutex mutex;  // serializes verification for this challenge
  };

  std::optional<SymmetricKey> unwrap_key(const AeadBox& box) const;
  AuthDecision otp_failure(const std::string& username, std::int64_t window,
                           DenyReason reason);

  AuthConfig cfg_;
  UserStore& store_;
  ProviderApi& provider_;
  SymmetricKey master_key_;
  RandomSource& rng_;
  Clock& clock_;
  AuditLog& audit_;

  mutable std::mutex challenges_mutex_;
  // Challenges accumulate for the process lifetime; desk-scale runs stay
  // small and shared_ptr keeps racing verifiers safe.
  std::unordered_map<std::string, std::shared_ptr<Challenge>> challenges_;
  std::unordered_map<std::string, std::string> active_by_user_;

  mutable std::mutex otp_mutex_;
  std::unordered_map<std::string, std::int64_t> consumed_otps_;  // key -> expiry
  struct WindowFailures {
    std::int64_t window = 0;
    int count = 0;
  };
  std::unordered_map<std::string, WindowFailures> otp_failures_;
};

}  // namespace twostep
