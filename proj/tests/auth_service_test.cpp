#include "twostep/auth_service.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>

#include "twostep/audit.hpp"
#include "twostep/clock.hpp"
#include "twostep/crypto.hpp"
#include "twostep/random.hpp"

using namespace twostep;

namespace {

constexpr std::int64_t kNow = 1700000000;
constexpr char kImei[] = "111111111111111";
constexpr char kImsi[] = "001010123456789";
constexpr char kMobile[] = "+15550100";
constexpr char kPassword[] = "Ab3$efgh";

SymmetricKey test_master_key() {
  SymmetricKey k;
  for (std::size_t i = 0; i < k.bytes.size(); ++i) {
    k.bytes[i] = static_cast<std::uint8_t>(i * 7 + 3);
  }
  return k;
}

bool is_hex(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

// Forwards to the real provider while counting calls, so tests can assert
// that failed password or envelope checks never reach the provider.
class CountingProvider final : public ProviderApi {
 public:
  explicit CountingProvider(ProviderApi& inner) : inner_(inner) {}

  std::optional<IssueResult> issue(const std::string& mobile,
                                   std::int64_t now) override {
    ++issue_calls;
    if (unreachable) {
      return std::nullopt;
    }
    return inner_.issue(mobile, now);
  }

  std::optional<TokenVerdict> verify(const std::string& txid,
                                     const std::string& token,
                                     std::int64_t now) override {
    ++verify_calls;
    if (unreachable) {
      return std::nullopt;
    }
    return inner_.verify(txid, token, now);
  }

  std::atomic<int> issue_calls{0};
  std::atomic<int> verify_calls{0};
  bool unreachable = false;

 private:
  ProviderApi& inner_;
};

struct Fixture {
  AuthConfig cfg;
  MemoryStore store;
  MemoryOutbox outbox;
  CounterDrbg rng{99};
  ManualClock clock{kNow};
  Provider provider{ProviderConfig{}, rng, outbox};
  InProcessProvider in_process{provider};
  CountingProvider api{in_process};
  SymmetricKey master_key = test_master_key();
  std::vector<std::string> audit_lines;
  AuditLog audit{
      [this](const std::string& line) { audit_lines.push_back(line); }};
  AuthService auth{cfg, store, api, master_key, rng, clock, audit};

  Registration register_alice() {
    auto r = auth.register_user("Alice", "Doe", "alice", kPassword, kMobile,
                                kImei, kImsi);
    REQUIRE(r.ok());
    return r.value();
  }

  Ciphertext envelope(const SymmetricKey& key, std::string username = "alice",
                      std::string imei = kImei, std::string imsi = kImsi,
                      std::optional<std::int64_t> issued_at = std::nullopt) {
    IdentityMessage msg =
        IdentityMessage::make(std::move(imei), std::move(imsi),
                              std::move(username),
                              issued_at.value_or(clock.now()), rng);
    return encrypt_identity(msg, key);
  }

  BeginOk begin_ok(const Registration& reg) {
    auto result = auth.begin_login("alice", kPassword, envelope(reg.key));
    REQUIRE(std::holds_alternative<BeginOk>(result));
    return std::get<BeginOk>(result);
  }

  std::string last_sms_token() {
    auto records = outbox.records();
    REQUIRE(!records.empty());
    const std::string& body = records.back().body;
    return body.substr(body.find_last_of(' ') + 1);
  }
};

std::string wrong_token(const std::string& token) {
  return token == "000000" ? "000001" : "000000";
}

}  // namespace

TEST_CASE("registration hands out the key once and stores only wrapped forms") {
  Fixture f;
  Registration reg = f.register_alice();
  CHECK(reg.username == "alice");
  CHECK(reg.mobile == kMobile);
  CHECK(std::any_of(reg.key.bytes.begin(), reg.key.bytes.end(),
                    [](std::uint8_t b) { return b != 0; }));

  auto rec = f.store.get_user("alice");
  REQUIRE(rec.has_value());
  CHECK(check_password(kPassword, rec->password_hash));
  CHECK_FALSE(check_password("Ab3$efgi", rec->password_hash));
  CHECK(rec->created_at == kNow);

  // The wrapped boxes open under the master key to exactly the handed-out
  // key and the registration password.
  auto key_raw = aead_open(f.master_key.bytes, rec->key_wrapped);
  REQUIRE(key_raw.has_value());
  CHECK(std::equal(key_raw->begin(), key_raw->end(), reg.key.bytes.begin(),
                   reg.key.bytes.end()));
  auto pin_raw = aead_open(f.master_key.bytes, rec->pin_wrapped);
  REQUIRE(pin_raw.has_value());
  CHECK(std::string(pin_raw->begin(), pin_raw->end()) == kPassword);
}

TEST_CASE("duplicate usernames are rejected") {
  Fixture f;
  f.register_alice();
  auto again = f.auth.register_user("Alicia", "Poe", "alice", kPassword,
                                    "+15550199", kImei, kImsi);
  REQUIRE_FALSE(again.ok());
  CHECK(again.error().kind == RegisterErrorKind::DuplicateUsername);
  CHECK(f.store.user_count() == 1);
}

TEST_CASE("weak passwords report every violated rule") {
  Fixture f;
  auto r = f.auth.register_user("Alice", "Doe", "alice", "1234", kMobile,
                                kImei, kImsi);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().kind == RegisterErrorKind::WeakPassword);
  CHECK(r.error().violations.size() == 4);  // short, no upper/lower/symbol
  CHECK(f.store.user_count() == 0);
}

TEST_CASE("malformed identifiers name the offending field") {
  Fixture f;
  auto imei = f.auth.register_user("A", "B", "alice", kPassword, kMobile,
                                   "12345678901234", kImsi);
  REQUIRE_FALSE(imei.ok());
  CHECK(imei.error().kind == RegisterErrorKind::MalformedIdentifier);
  CHECK(imei.error().detail == "imei");

  auto imsi = f.auth.register_user("A", "B", "alice", kPassword, kMobile,
                                   kImei, "12345");
  REQUIRE_FALSE(imsi.ok());
  CHECK(imsi.error().detail == "imsi");

  auto mobile = f.auth.register_user("A", "B", "alice", kPassword, "15550100",
                                     kImei, kImsi);
  REQUIRE_FALSE(mobile.ok());
  CHECK(mobile.error().detail == "mobile");

  auto username = f.auth.register_user("A", "B", "al|ce", kPassword, kMobile,
                                       kImei, kImsi);
  REQUIRE_FALSE(username.ok());
  CHECK(username.error().detail == "username");
  CHECK(f.store.user_count() == 0);
}

TEST_CASE("begin_login issues a token through the provider") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk ok = f.begin_ok(reg);

  CHECK(ok.challenge_id.size() == 32);
  CHECK(is_hex(ok.challenge_id));
  CHECK(ok.txid.size() == 32);
  CHECK(is_hex(ok.txid));
  CHECK(f.api.issue_calls == 1);

  auto records = f.outbox.records();
  REQUIRE(records.size() == 1);
  CHECK(records[0].mobile == kMobile);

  auto status = f.provider.token_state(ok.txid);
  REQUIRE(status.has_value());
  CHECK(status->state == TokenState::Pending);
  CHECK(f.auth.challenge_state(ok.challenge_id) ==
        ChallengeState::AwaitingToken);
}

TEST_CASE("a wrong password never reaches the provider") {
  Fixture f;
  Registration reg = f.register_alice();
  auto result = f.auth.begin_login("alice", "Ab3$efgi", f.envelope(reg.key));
  REQUIRE(std::holds_alternative<AuthDecision>(result));
  auto decision = std::get<AuthDecision>(result);
  CHECK_FALSE(decision.granted);
  CHECK(decision.reason == DenyReason::BadPassword);
  CHECK(f.api.issue_calls == 0);
  CHECK(f.outbox.size() == 0);
}

TEST_CASE("unknown usernames deny like wrong passwords") {
  Fixture f;
  Registration reg = f.register_alice();
  auto result = f.auth.begin_login("mallory", kPassword, f.envelope(reg.key));
  REQUIRE(std::holds_alternative<AuthDecision>(result));
  CHECK(std::get<AuthDecision>(result).reason == DenyReason::BadPassword);
  CHECK(f.api.issue_calls == 0);
}

TEST_CASE("an envelope sealed under the wrong key is rejected") {
  Fixture f;
  f.register_alice();
  SymmetricKey other = SymmetricKey::generate(f.rng);
  auto result = f.auth.begin_login("alice", kPassword, f.envelope(other));
  REQUIRE(std::holds_alternative<AuthDecision>(result));
  CHECK(std::get<AuthDecision>(result).reason == DenyReason::BadIdentity);
  CHECK(f.api.issue_calls == 0);
}

TEST_CASE("envelope freshness is enforced at the configured skew") {
  Fixture f;
  Registration reg = f.register_alice();

  auto stale = f.auth.begin_login(
      "alice", kPassword,
      f.envelope(reg.key, "alice", kImei, kImsi, kNow - 121));
  REQUIRE(std::holds_alternative<AuthDecision>(stale));
  CHECK(std::get<AuthDecision>(stale).reason == DenyReason::BadIdentity);

  auto boundary = f.auth.begin_login(
      "alice", kPassword,
      f.envelope(reg.key, "alice", kImei, kImsi, kNow - 120));
  CHECK(std::holds_alternative<BeginOk>(boundary));
}

TEST_CASE("mismatched identity factors are rejected") {
  Fixture f;
  Registration reg = f.register_alice();

  auto wrong_imei = f.auth.begin_login(
      "alice", kPassword, f.envelope(reg.key, "alice", "222222222222222"));
  REQUIRE(std::holds_alternative<AuthDecision>(wrong_imei));
  CHECK(std::get<AuthDecision>(wrong_imei).reason == DenyReason::BadIdentity);

  auto wrong_name =
      f.auth.begin_login("alice", kPassword, f.envelope(reg.key, "bob"));
  REQUIRE(std::holds_alternative<AuthDecision>(wrong_name));
  CHECK(std::get<AuthDecision>(wrong_name).reason == DenyReason::BadIdentity);
  CHECK(f.api.issue_calls == 0);
}

TEST_CASE("provider outage surfaces as upstream-unavailable") {
  Fixture f;
  Registration reg = f.register_alice();
  f.api.unreachable = true;
  auto result = f.auth.begin_login("alice", kPassword, f.envelope(reg.key));
  CHECK(std::holds_alternative<UpstreamUnavailable>(result));
  CHECK(f.api.issue_calls == 1);
}

TEST_CASE("issuance throttling propagates as a throttled denial") {
  Fixture f;
  Registration reg = f.register_alice();
  for (int i = 0; i < 5; ++i) {
    f.begin_ok(reg);
  }
  auto sixth = f.auth.begin_login("alice", kPassword, f.envelope(reg.key));
  REQUIRE(std::holds_alternative<AuthDecision>(sixth));
  CHECK(std::get<AuthDecision>(sixth).reason == DenyReason::Throttled);
  CHECK(f.outbox.size() == 5);
}

TEST_CASE("a new begin supersedes the user's pending challenge") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk first = f.begin_ok(reg);
  std::string first_token = f.last_sms_token();
  BeginOk second = f.begin_ok(reg);

  CHECK(f.auth.challenge_state(first.challenge_id) == ChallengeState::Expired);
  CHECK(f.auth.challenge_state(second.challenge_id) ==
        ChallengeState::AwaitingToken);

  auto on_first = f.auth.complete_login(first.challenge_id, first_token);
  CHECK_FALSE(on_first.granted);
  CHECK(on_first.reason == DenyReason::Expired);
}

TEST_CASE("complete_login grants exactly once for the right token") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk ok = f.begin_ok(reg);
  std::string token = f.last_sms_token();

  auto first = f.auth.complete_login(ok.challenge_id, token);
  CHECK(first.granted);
  CHECK(f.auth.challenge_state(ok.challenge_id) == ChallengeState::Granted);

  auto replay = f.auth.complete_login(ok.challenge_id, token);
  CHECK_FALSE(replay.granted);
  CHECK(replay.reason == DenyReason::Expired);
  // The replay is turned away before the provider is consulted again.
  CHECK(f.api.verify_calls == 1);
}

TEST_CASE("unknown challenge ids are denied") {
  Fixture f;
  auto decision =
      f.auth.complete_login("00000000000000000000000000000000", "000000");
  CHECK_FALSE(decision.granted);
  CHECK(decision.reason == DenyReason::Expired);
  CHECK(f.api.verify_calls == 0);
}

TEST_CASE("a challenge is refused once its ttl has elapsed") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk ok = f.begin_ok(reg);
  std::string token = f.last_sms_token();

  f.clock.advance(600);
  auto late = f.auth.complete_login(ok.challenge_id, token);
  CHECK_FALSE(late.granted);
  CHECK(late.reason == DenyReason::Expired);
  CHECK(f.auth.challenge_state(ok.challenge_id) == ChallengeState::Expired);

  // One second under the ttl still grants.
  BeginOk fresh = f.begin_ok(reg);
  std::string fresh_token = f.last_sms_token();
  f.clock.advance(599);
  CHECK(f.auth.complete_login(fresh.challenge_id, fresh_token).granted);
}

TEST_CASE("wrong tokens leave the challenge pending until the cap burns it") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk ok = f.begin_ok(reg);
  std::string token = f.last_sms_token();
  std::string bad = wrong_token(token);

  for (int i = 0; i < 4; ++i) {
    auto decision = f.auth.complete_login(ok.challenge_id, bad);
    CHECK_FALSE(decision.granted);
    CHECK(decision.reason == DenyReason::BadToken);
    CHECK(f.auth.challenge_state(ok.challenge_id) ==
          ChallengeState::AwaitingToken);
  }

  // The fifth failure burns the token at the provider.
  auto fifth = f.auth.complete_login(ok.challenge_id, bad);
  CHECK_FALSE(fifth.granted);
  CHECK(fifth.reason == DenyReason::BadToken);
  auto status = f.provider.token_state(ok.txid);
  REQUIRE(status.has_value());
  CHECK(status->state == TokenState::Expired);

  // Even the correct token cannot recover a burned challenge.
  auto after = f.auth.complete_login(ok.challenge_id, token);
  CHECK_FALSE(after.granted);
  CHECK(after.reason == DenyReason::BadToken);
  CHECK(f.auth.challenge_state(ok.challenge_id) == ChallengeState::Expired);
}

TEST_CASE("connectionless verification accepts current and previous window") {
  Fixture f;
  f.register_alice();
  FactorSet factors = FactorSet::create(kImei, kImsi, "alice", kPassword);
  const std::int64_t wsec = window_seconds(f.cfg.otp_policy.window);

  std::string now_otp = derive_otp_at(factors, kNow, 0, f.cfg.otp_policy);
  CHECK(f.auth.connectionless_verify("alice", now_otp).granted);

  auto replay = f.auth.connectionless_verify("alice", now_otp);
  CHECK_FALSE(replay.granted);
  CHECK(replay.reason == DenyReason::BadToken);

  std::string prev_otp =
      derive_otp_at(factors, kNow - wsec, 0, f.cfg.otp_policy);
  REQUIRE(prev_otp != now_otp);
  CHECK(f.auth.connectionless_verify("alice", prev_otp).granted);
  CHECK_FALSE(f.auth.connectionless_verify("alice", prev_otp).granted);

  std::string next_otp =
      derive_otp_at(factors, kNow + wsec, 0, f.cfg.otp_policy);
  CHECK_FALSE(f.auth.connectionless_verify("alice", next_otp).granted);

  std::string stale_otp =
      derive_otp_at(factors, kNow - 2 * wsec, 0, f.cfg.otp_policy);
  CHECK_FALSE(f.auth.connectionless_verify("alice", stale_otp).granted);
}

TEST_CASE("otp failures throttle the user within a window") {
  Fixture f;
  f.register_alice();
  FactorSet factors = FactorSet::create(kImei, kImsi, "alice", kPassword);

  for (int i = 0; i < 5; ++i) {
    auto decision = f.auth.connectionless_verify("alice", "AAAAAAAA");
    CHECK_FALSE(decision.granted);
    CHECK(decision.reason == DenyReason::BadToken);
  }

  // Even the correct value is refused while throttled.
  std::string otp = derive_otp_at(factors, kNow, 0, f.cfg.otp_policy);
  auto throttled = f.auth.connectionless_verify("alice", otp);
  CHECK_FALSE(throttled.granted);
  CHECK(throttled.reason == DenyReason::Throttled);

  // The next window starts a fresh failure budget.
  f.clock.advance(window_seconds(f.cfg.otp_policy.window));
  std::string fresh =
      derive_otp_at(factors, f.clock.now(), 0, f.cfg.otp_policy);
  CHECK(f.auth.connectionless_verify("alice", fresh).granted);
}

TEST_CASE("otp throttling is per user") {
  Fixture f;
  f.register_alice();
  auto bob = f.auth.register_user("Bob", "Roe", "bob", kPassword, "+15550101",
                                  "222222222222222", "001010123456780");
  REQUIRE(bob.ok());

  for (int i = 0; i < 5; ++i) {
    f.auth.connectionless_verify("alice", "AAAAAAAA");
  }
  FactorSet factors = FactorSet::create("222222222222222", "001010123456780",
                                        "bob", kPassword);
  std::string otp = derive_otp_at(factors, kNow, 0, f.cfg.otp_policy);
  CHECK(f.auth.connectionless_verify("bob", otp).granted);
}

TEST_CASE("connectionless verification denies unknown users") {
  Fixture f;
  auto decision = f.auth.connectionless_verify("nobody", "AAAAAAAA");
  CHECK_FALSE(decision.granted);
  CHECK(decision.reason == DenyReason::BadToken);
}

TEST_CASE("concurrent completes of one challenge grant exactly once") {
  Fixture f;
  Registration reg = f.register_alice();
  BeginOk ok = f.begin_ok(reg);
  std::string token = f.last_sms_token();

  std::atomic<int> granted{0};
  std::vector<std::thread> threads;
  threads.reserve(8);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      if (f.auth.complete_login(ok.challenge_id, token).granted) {
        ++granted;
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  CHECK(granted == 1);
  CHECK(f.auth.challenge_state(ok.challenge_id) == ChallengeState::Granted);
}

TEST_CASE("audit lines carry outcomes but never secrets") {
  Fixture f;
  Registration reg = f.register_alice();
  std::string key_b64 = reg.key.to_base64();

  BeginOk ok = f.begin_ok(reg);
  std::string token = f.last_sms_token();
  CHECK(f.auth.complete_login(ok.challenge_id, token).granted);

  FactorSet factors = FactorSet::create(kImei, kImsi, "alice", kPassword);
  std::string otp = derive_otp_at(factors, kNow, 0, f.cfg.otp_policy);
  CHECK(f.auth.connectionless_verify("alice", otp).granted);

  std::string joined;
  for (const auto& line : f.audit_lines) {
    joined += line;
    joined += '\n';
  }
  CHECK(joined.find(kPassword) == std::string::npos);
  CHECK(joined.find(token) == std::string::npos);
  CHECK(joined.find(otp) == std::string::npos);
  CHECK(joined.find(key_b64) == std::string::npos);
  CHECK(joined.find("granted") != std::string::npos);
}
