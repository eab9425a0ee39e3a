#include "twostep/auth_service.hpp"

#include <algorithm>
#include <span>
#include <stdexcept>
#include <utility>

#include "twostep/audit.hpp"
#include "twostep/clock.hpp"
#include "twostep/random.hpp"

namespace twostep {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b) != 0 && ((a < 0) != (b < 0))) {
    --q;
  }
  return q;
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0F]);
  }
  return out;
}

std::span<const std::uint8_t> as_bytes(std::string_view text) {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

}  // namespace

const char* to_string(DenyReason r) {
  switch (r) {
    case DenyReason::BadPassword:
      return "bad-password";
    case DenyReason::BadIdentity:
      return "bad-identity";
    case DenyReason::BadToken:
      return "bad-token";
    case DenyReason::Expired:
      return "expired";
    case DenyReason::Throttled:
      return "throttled";
  }
  return "unknown";
}

const char* to_string(ChallengeState s) {
  switch (s) {
    case ChallengeState::AwaitingToken:
      return "awaiting_token";
    case ChallengeState::Granted:
      return "granted";
    case ChallengeState::Denied:
      return "denied";
    case ChallengeState::Expired:
      return "expired";
  }
  return "unknown";
}

std::optional<IssueResult> InProcessProvider::issue(const std::string& mobile,
                                                    std::int64_t now) {
  return provider_.issue_token(mobile, now);
}

std::optional<TokenVerdict> InProcessProvider::verify(const std::string& txid,
                                                      const std::string& token,
                                                      std::int64_t now) {
  return provider_.verify_token(txid, token, now);
}

AuthService::AuthService(AuthConfig cfg, UserStore& store,
                         ProviderApi& provider, const SymmetricKey& master_key,
                         RandomSource& rng, Clock& clock, AuditLog& audit)
    : cfg_(cfg),
      store_(store),
      provider_(provider),
      master_key_(master_key),
      rng_(rng),
      clock_(clock),
      audit_(audit) {}

Result<Registration, RegisterError> AuthService::register_user(
    const std::string& first, const std::string& last,
    const std::string& username, const std::string& password,
    const std::string& mobile, const std::string& imei,
    const std::string& imsi) {
  auto violations = validate_pin(password, cfg_.pin_policy);
  if (!violations.empty()) {
    audit_.log("register", {{"username", username}, {"result", "weak-password"}});
    return RegisterError{RegisterErrorKind::WeakPassword,
                         std::move(violations), ""};
  }
  const char* bad_field = nullptr;
  if (!valid_username(username)) {
    bad_field = "username";
  } else if (!valid_imei(imei)) {
    bad_field = "imei";
  } else if (!valid_imsi(imsi)) {
    bad_field = "imsi";
  } else if (!valid_mobile(mobile)) {
    bad_field = "mobile";
  }
  if (bad_field != nullptr) {
    audit_.log("register", {{"username", username},
                            {"result", "malformed"},
                            {"field", bad_field}});
    return RegisterError{RegisterErrorKind::MalformedIdentifier, {}, bad_field};
  }

  UserRecord record;
  record.first = first;
  record.last = last;
  record.username = username;
  record.password_hash =
      new_password_hash(password, cfg_.hash_iterations, rng_);
  SymmetricKey key = SymmetricKey::generate(rng_);
  record.key_wrapped = aead_seal(master_key_.bytes, key.bytes, rng_);
  record.pin_wrapped = aead_seal(master_key_.bytes, as_bytes(password), rng_);
  record.mobile = mobile;
  record.imei = imei;
  record.imsi = imsi;
  record.created_at = clock_.now();

  if (store_.put_user(record) == PutStatus::DuplicateUsername) {
    secure_wipe(key.bytes.data(), key.bytes.size());
    audit_.log("register", {{"username", username}, {"result", "duplicate"}});
    return RegisterError{RegisterErrorKind::DuplicateUsername, {}, ""};
  }
  audit_.log("register", {{"username", username}, {"result", "ok"}});
  return Registration{username, mobile, key};
}

std::optional<SymmetricKey> AuthService::unwrap_key(const AeadBox& box) const {
  auto raw = aead_open(master_key_.bytes, box);
  if (!raw || raw->size() != 32) {
    return std::nullopt;
  }
  SymmetricKey key;
  std::copy(raw->begin(), raw->end(), key.bytes.begin());
  secure_wipe(raw->data(), raw->size());
  return key;
}

BeginResult AuthService::begin_login(const std::string& username,
                                     const std::string& password,
                                     const Ciphertext& envelope) {
  const std::int64_t now = clock_.now();

  auto user = store_.get_user(username);
  if (!user) {
    // Burn a hash anyway so unknown and known usernames take similar time.
    static const PasswordHash kDummy = [] {
      PasswordHash h;
      h.iterations = kMinHashIterations;
      return h;
    }();
    check_password(password, kDummy);
    audit_.log("login-begin",
               {{"username", username}, {"result", "bad-password"}});
    return AuthDecision::deny(DenyReason::BadPassword);
  }

  if (!check_password(password, user->password_hash)) {
    audit_.log("login-begin",
               {{"username", username}, {"result", "bad-password"}});
    return AuthDecision::deny(DenyReason::BadPassword);
  }

  auto key = unwrap_key(user->key_wrapped);
  if (!key) {
    audit_.log("login-begin", {{"username", username},
                               {"result", "bad-identity"},
                               {"detail", "keystore-unwrap-failed"}});
    return AuthDecision::deny(DenyReason::BadIdentity);
  }
  auto opened =
      decrypt_identity(envelope, *key, now, cfg_.envelope_skew_seconds);
  secure_wipe(key->bytes.data(), key->bytes.size());
  if (!opened) {
    audit_.log("login-begin",
               {{"username", username},
                {"result", "bad-identity"},
                {"detail", opened.error() == DecryptError::StaleMessage
                               ? "stale-envelope"
                               : "envelope-auth-failed"}});
    return AuthDecision::deny(DenyReason::BadIdentity);
  }
  const IdentityMessage& msg = opened.value();
  bool factors_match = constant_time_equal(msg.imei, user->imei) &&
                       constant_time_equal(msg.imsi, user->imsi) &&
                       constant_time_equal(msg.username, user->username) &&
                       constant_time_equal(msg.username, username);
  if (!factors_match) {
    audit_.log("login-begin", {{"username", username},
                               {"result", "bad-identity"},
                               {"detail", "factor-mismatch"}});
    return AuthDecision::deny(DenyReason::BadIdentity);
  }

  auto issued = provider_.issue(user->mobile, now);
  if (!issued) {
    audit_.log("login-begin",
               {{"username", username}, {"result", "provider-unreachable"}});
    return UpstreamUnavailable{};
  }
  if (!issued->ok()) {
    bool throttled = issued->error() == IssueError::Throttled;
    audit_.log("login-begin",
               {{"username", username},
                {"result", throttled ? "throttled" : "bad-identity"},
                {"detail", to_string(issued->error())}});
    return AuthDecision::deny(throttled ? DenyReason::Throttled
                                        : DenyReason::BadIdentity);
  }

  auto challenge = std::make_shared<Challenge>();
  challenge->username = username;
  challenge->txid = issued->value().txid;
  challenge->created_at = now;
  std::string challenge_id = rng_.hex(16);

  {
    std::lock_guard<std::mutex> lock(challenges_mutex_);
    auto active = active_by_user_.find(username);
    if (active != active_by_user_.end()) {
      auto prior = challenges_.find(active->second);
      if (prior != challenges_.end()) {
        std::lock_guard<std::mutex> prior_lock(prior->second->mutex);
        if (prior->second->state == ChallengeState::AwaitingToken) {
          prior->second->state = ChallengeState::Expired;
        }
      }
    }
    while (challenges_.count(challenge_id) != 0) {
      challenge_id = rng_.hex(16);
    }
    challenges_.emplace(challenge_id, challenge);
    active_by_user_[username] = challenge_id;
  }

  audit_.log("login-begin", {{"username", username},
                             {"result", "challenge-issued"},
                             {"challenge_id", challenge_id},
                             {"txid", challenge->txid}});
  return BeginOk{challenge_id, challenge->txid};
}

AuthDecision AuthService::complete_login(const std::string& challenge_id,
                                         const std::string& token) {
  const std::int64_t now = clock_.now();

  std::shared_ptr<Challenge> challenge;
  {
    std::lock_guard<std::mutex> lock(challenges_mutex_);
    auto it = challenges_.find(challenge_id);
    if (it != challenges_.end()) {
      challenge = it->second;
    }
  }
  if (!challenge) {
    audit_.log("login-complete",
               {{"challenge_id", challenge_id}, {"result", "unknown"}});
    return AuthDecision::deny(DenyReason::Expired);
  }

  // One verifier at a time per challenge: the winner flips the state to
  // granted before anyone else reaches the provider.
  std::lock_guard<std::mutex> lock(challenge->mutex);
  if (challenge->state != ChallengeState::AwaitingToken) {
    audit_.log("login-complete", {{"challenge_id", challenge_id},
                                  {"result", "not-active"},
                                  {"state", to_string(challenge->state)}});
    return AuthDecision::deny(DenyReason::Expired);
  }
  if (now - challenge->created_at >= cfg_.challenge_ttl_seconds) {
    challenge->state = ChallengeState::Expired;
    audit_.log("login-complete",
               {{"challenge_id", challenge_id}, {"result", "expired"}});
    return AuthDecision::deny(DenyReason::Expired);
  }

  auto verdict = provider_.verify(challenge->txid, token, now);
  if (!verdict) {
    audit_.log("login-complete", {{"challenge_id", challenge_id},
                                  {"result", "provider-unreachable"}});
    return AuthDecision::deny(DenyReason::BadToken);
  }
  switch (*verdict) {
    case TokenVerdict::Valid:
      challenge->state = ChallengeState::Granted;
      audit_.log("login-complete", {{"challenge_id", challenge_id},
                                    {"username", challenge->username},
                                    {"result", "granted"}});
      return AuthDecision::grant();
    case TokenVerdict::Invalid:
      audit_.log("login-complete", {{"challenge_id", challenge_id},
                                    {"result", "bad-token"}});
      return AuthDecision::deny(DenyReason::BadToken);
    case TokenVerdict::Consumed:
    case TokenVerdict::Expired:
      challenge->state = ChallengeState::Expired;
      audit_.log("login-complete", {{"challenge_id", challenge_id},
                                    {"result", to_string(*verdict)}});
      return AuthDecision::deny(DenyReason::BadToken);
    case TokenVerdict::Unknown:
      audit_.log("login-complete", {{"challenge_id", challenge_id},
                                    {"result", "token-unknown"}});
      return AuthDecision::deny(DenyReason::BadToken);
  }
  return AuthDecision::deny(DenyReason::BadToken);
}

AuthDecision AuthService::otp_failure(const std::string& username,
                                      std::int64_t window, DenyReason reason) {
  {
    std::lock_guard<std::mutex> lock(otp_mutex_);
    auto& failures = otp_failures_[username];
    if (failures.window != window) {
      failures.window = window;
      failures.count = 0;
    }
    ++failures.count;
  }
  audit_.log("otp-verify",
             {{"username", username}, {"result", to_string(reason)}});
  return AuthDecision::deny(reason);
}

AuthDecision AuthService::connectionless_verify(const std::string& username,
                                                const std::string& otp) {
  const std::int64_t now = clock_.now();
  const std::int64_t wsec = window_seconds(cfg_.otp_policy.window);
  const std::int64_t window =
      floor_div(now + std::int64_t{cfg_.tz_offset_minutes} * 60, wsec);

  auto user = store_.get_user(username);
  if (!user) {
    audit_.log("otp-verify",
               {{"username", username}, {"result", "unknown-user"}});
    return AuthDecision::deny(DenyReason::BadToken);
  }

  {
    std::lock_guard<std::mutex> lock(otp_mutex_);
    // Drop consumption entries whose window can no longer be accepted.
    for (auto it = consumed_otps_.begin(); it != consumed_otps_.end();) {
      it = it->second <= now ? consumed_otps_.erase(it) : std::next(it);
    }
    auto failures = otp_failures_.find(username);
    if (failures != otp_failures_.end() &&
        failures->second.window == window &&
        failures->second.count >= cfg_.otp_max_attempts) {
      audit_.log("otp-verify",
                 {{"username", username}, {"result", "throttled"}});
      return AuthDecision::deny(DenyReason::Throttled);
    }
  }

  auto pin_raw = aead_open(master_key_.bytes, user->pin_wrapped);
  if (!pin_raw) {
    audit_.log("otp-verify", {{"username", username},
                              {"result", "keystore-unwrap-failed"}});
    return AuthDecision::deny(DenyReason::BadToken);
  }
  std::string pin(pin_raw->begin(), pin_raw->end());
  secure_wipe(pin_raw->data(), pin_raw->size());

  FactorSet factors;
  try {
    factors = FactorSet::create(user->imei, user->imsi, user->username, pin,
                                cfg_.pin_policy);
  } catch (const std::invalid_argument&) {
    // Stored factors predate a stricter policy; treat as a plain mismatch.
    secure_wipe(pin.data(), pin.size());
    audit_.log("otp-verify",
               {{"username", username}, {"result", "factor-policy-mismatch"}});
    return AuthDecision::deny(DenyReason::BadToken);
  }
  secure_wipe(pin.data(), pin.size());

  std::string expect_now =
      derive_otp_at(factors, now, cfg_.tz_offset_minutes, cfg_.otp_policy);
  std::string expect_prev = derive_otp_at(factors, now - wsec,
                                          cfg_.tz_offset_minutes,
                                          cfg_.otp_policy);
  secure_wipe(factors.pin.data(), factors.pin.size());

  bool match_now = constant_time_equal(otp, expect_now);
  bool match_prev = constant_time_equal(otp, expect_prev);
  secure_wipe(expect_now.data(), expect_now.size());
  secure_wipe(expect_prev.data(), expect_prev.size());

  if (!match_now && !match_prev) {
    return otp_failure(username, window, DenyReason::BadToken);
  }

  const std::int64_t matched_window = match_now ? window : window - 1;
  auto digest = sha256(otp);
  std::string consumption_key = username + "|" +
                                std::to_string(matched_window) + "|" +
                                to_hex(digest);
  bool already_spent = false;
  {
    std::lock_guard<std::mutex> lock(otp_mutex_);
    already_spent =
        !consumed_otps_.emplace(consumption_key, now + 2 * wsec).second;
  }
  if (already_spent) {
    // Correct but already spent: still a failed attempt.
    return otp_failure(username, window, DenyReason::BadToken);
  }
  audit_.log("otp-verify", {{"username", username}, {"result", "granted"}});
  return AuthDecision::grant();
}

std::optional<ChallengeState> AuthService::challenge_state(
    const std::string& challenge_id) const {
  std::shared_ptr<Challenge> challenge;
  {
    std::lock_guard<std::mutex> lock(challenges_mutex_);
    auto it = challenges_.find(challenge_id);
    if (it == challenges_.end()) {
      return std::nullopt;
    }
    challenge = it->second;
  }
  std::lock_guard<std::mutex> lock(challenge->mutex);
  return challenge->state;
}

}  // namespace twostep
