#include "twostep/http_api.hpp"

#include <string>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "twostep/audit.hpp"
#include "twostep/clock.hpp"
#include "twostep/envelope.hpp"
#include "twostep/random.hpp"

using namespace twostep;
using nlohmann::json;

namespace {

constexpr std::int64_t kNow = 1700000000;
constexpr char kImei[] = "111111111111111";
constexpr char kImsi[] = "001010123456789";
constexpr char kMobile[] = "+15550100";
constexpr char kPassword[] = "Ab3$efgh";

SymmetricKey test_master_key() {
  SymmetricKey k;
  for (std::size_t i = 0; i < k.bytes.size(); ++i) {
    k.bytes[i] = static_cast<std::uint8_t>(i * 5 + 1);
  }
  return k;
}

// A full service stack listening on a loopback port, with a manual clock
// so expiry can be driven from the test body.
struct ServerFixture {
  AuthConfig cfg;
  MemoryStore store;
  MemoryOutbox outbox;
  CounterDrbg rng{2024};
  ManualClock clock{kNow};
  Provider provider{ProviderConfig{}, rng, outbox};
  InProcessProvider api{provider};
  SymmetricKey master_key = test_master_key();
  AuditLog audit{[](const std::string&) {}};
  AuthService auth{cfg, store, api, master_key, rng, clock, audit};

  httplib::Server server;
  int port = 0;
  std::thread thread;

  ServerFixture() {
    mount_auth_api(server, auth);
    mount_provider_api(server, provider, clock);
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~ServerFixture() {
    server.stop();
    thread.join();
  }

  httplib::Client client() {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5, 0);
    c.set_read_timeout(5, 0);
    return c;
  }

  json post(const std::string& path, const json& body, int expect_status) {
    auto res = client().Post(path, body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == expect_status);
    return json::parse(res->body);
  }

  json register_alice() {
    return post("/register",
                {{"first", "Alice"},
                 {"last", "Doe"},
                 {"username", "alice"},
                 {"password", kPassword},
                 {"mobile", kMobile},
                 {"imei", kImei},
                 {"imsi", kImsi}},
                201);
  }

  std::string envelope_wire(const std::string& key_b64) {
    auto key = SymmetricKey::from_base64(key_b64);
    REQUIRE(key.has_value());
    IdentityMessage msg =
        IdentityMessage::make(kImei, kImsi, "alice", clock.now(), rng);
    return ciphertext_to_wire(encrypt_identity(msg, *key));
  }

  std::string last_sms_token() {
    auto records = outbox.records();
    REQUIRE(!records.empty());
    const std::string& body = records.back().body;
    return body.substr(body.find_last_of(' ') + 1);
  }
};

}  // namespace

TEST_CASE("healthz answers ok") {
  ServerFixture f;
  auto res = f.client().Get("/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "ok");
}

TEST_CASE("registration over http returns the key exactly once") {
  ServerFixture f;
  json created = f.register_alice();
  CHECK(created["username"] == "alice");
  CHECK(created["mobile"] == kMobile);
  std::string key_b64 = created["key_b64"].get<std::string>();
  CHECK(key_b64.size() == 44);
  CHECK(SymmetricKey::from_base64(key_b64).has_value());

  json dup = f.post("/register",
                    {{"first", "Alicia"},
                     {"last", "Poe"},
                     {"username", "alice"},
                     {"password", kPassword},
                     {"mobile", kMobile},
                     {"imei", kImei},
                     {"imsi", kImsi}},
                    409);
  CHECK(dup["error"] == "duplicate-username");
}

TEST_CASE("registration rejects weak or malformed input with detail") {
  ServerFixture f;
  json weak = f.post("/register",
                     {{"first", "A"},
                      {"last", "B"},
                      {"username", "alice"},
                      {"password", "1234"},
                      {"mobile", kMobile},
                      {"imei", kImei},
                      {"imsi", kImsi}},
                     422);
  CHECK(weak["error"] == "weak-password");
  CHECK(weak["violations"].size() == 4);

  json malformed = f.post("/register",
                          {{"first", "A"},
                           {"last", "B"},
                           {"username", "alice"},
                           {"password", kPassword},
                           {"mobile", kMobile},
                           {"imei", "123"},
                           {"imsi", kImsi}},
                          422);
  CHECK(malformed["error"] == "malformed-identifier");
  CHECK(malformed["field"] == "imei");
}

TEST_CASE("request bodies are validated before any work") {
  ServerFixture f;
  auto c = f.client();

  auto not_json = c.Post("/register", "not json", "application/json");
  REQUIRE(not_json);
  CHECK(not_json->status == 400);

  auto missing = c.Post("/register", R"({"first": "A"})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 400);

  auto wrong_type = c.Post("/login/begin",
                           R"({"username": 1, "password": "x", "envelope": "y"})",
                           "application/json");
  REQUIRE(wrong_type);
  CHECK(wrong_type->status == 400);

  auto bad_envelope = f.post("/login/begin",
                             {{"username", "alice"},
                              {"password", kPassword},
                              {"envelope", "no-dot-here"}},
                             400);
  CHECK(bad_envelope["error"] == "bad-request");
}

TEST_CASE("the full two-step login flow works over http") {
  ServerFixture f;
  json created = f.register_alice();
  std::string wire = f.envelope_wire(created["key_b64"].get<std::string>());

  json begun = f.post("/login/begin",
                      {{"username", "alice"},
                       {"password", kPassword},
                       {"envelope", wire}},
                      200);
  std::string challenge_id = begun["challenge_id"].get<std::string>();
  CHECK(challenge_id.size() == 32);
  CHECK(begun["txid"].get<std::string>().size() == 32);

  std::string token = f.last_sms_token();
  json granted = f.post("/login/complete",
                        {{"challenge_id", challenge_id}, {"token", token}},
                        200);
  CHECK(granted["outcome"] == "granted");

  // The same challenge cannot be completed twice.
  json replay = f.post("/login/complete",
                       {{"challenge_id", challenge_id}, {"token", token}},
                       401);
  CHECK(replay["outcome"] == "denied");
}

TEST_CASE("denied logins reveal only a generic reason") {
  ServerFixture f;
  json created = f.register_alice();
  std::string wire = f.envelope_wire(created["key_b64"].get<std::string>());

  json wrong_pw = f.post("/login/begin",
                         {{"username", "alice"},
                          {"password", "Ab3$efgi"},
                          {"envelope", wire}},
                         401);
  CHECK(wrong_pw == json({{"reason", "denied"}}));

  json wrong_user = f.post("/login/begin",
                           {{"username", "bob"},
                            {"password", kPassword},
                            {"envelope", wire}},
                           401);
  CHECK(wrong_user == json({{"reason", "denied"}}));

  json bad_token_challenge = f.post("/login/begin",
                                    {{"username", "alice"},
                                     {"password", kPassword},
                                     {"envelope", wire}},
                                    200);
  json denied = f.post(
      "/login/complete",
      {{"challenge_id", bad_token_challenge["challenge_id"].get<std::string>()},
       {"token", "000000"}},
      401);
  CHECK(denied == json({{"outcome", "denied"}}));
}

TEST_CASE("the connectionless otp endpoint grants then refuses replay") {
  ServerFixture f;
  f.register_alice();
  FactorSet factors = FactorSet::create(kImei, kImsi, "alice", kPassword);
  std::string otp = derive_otp_at(factors, kNow, 0, f.cfg.otp_policy);

  json granted =
      f.post("/login/otp", {{"username", "alice"}, {"otp", otp}}, 200);
  CHECK(granted["outcome"] == "granted");

  json replay =
      f.post("/login/otp", {{"username", "alice"}, {"otp", otp}}, 401);
  CHECK(replay["outcome"] == "denied");
}

TEST_CASE("provider endpoints issue and verify tokens") {
  ServerFixture f;
  json issued = f.post("/provider/issue", {{"mobile", "+15550177"}}, 200);
  std::string txid = issued["txid"].get<std::string>();
  CHECK(txid.size() == 32);
  std::string token = f.last_sms_token();

  json bad = f.post("/provider/issue", {{"mobile", "no-plus"}}, 400);
  CHECK(bad["error"] == "bad-mobile");

  // A wrong guess is reported but the token survives.
  std::string wrong_guess = token == "000000" ? "000001" : "000000";
  json wrong = f.post("/provider/verify",
                      {{"txid", txid}, {"token", wrong_guess}}, 200);
  CHECK(wrong["result"] == "invalid");

  json valid =
      f.post("/provider/verify", {{"txid", txid}, {"token", token}}, 200);
  CHECK(valid["result"] == "valid");

  json consumed =
      f.post("/provider/verify", {{"txid", txid}, {"token", token}}, 200);
  CHECK(consumed["result"] == "consumed");

  json unknown = f.post("/provider/verify",
                        {{"txid", std::string(32, 'f')}, {"token", "123456"}},
                        200);
  CHECK(unknown["result"] == "unknown");
}

TEST_CASE("provider issuance throttles per mobile over http") {
  ServerFixture f;
  for (int i = 0; i < 5; ++i) {
    f.post("/provider/issue", {{"mobile", "+15550178"}}, 200);
  }
  json throttled = f.post("/provider/issue", {{"mobile", "+15550178"}}, 429);
  CHECK(throttled["error"] == "throttled");
}

TEST_CASE("the http provider client speaks the provider wire protocol") {
  ServerFixture f;
  HttpProviderClient client("http://127.0.0.1:" + std::to_string(f.port));

  auto bad = client.issue("no-plus", kNow);
  REQUIRE(bad.has_value());
  REQUIRE_FALSE(bad->ok());
  CHECK(bad->error() == IssueError::BadMobile);

  auto issued = client.issue("+15550179", kNow);
  REQUIRE(issued.has_value());
  REQUIRE(issued->ok());
  std::string txid = issued->value().txid;
  std::string token = f.last_sms_token();

  auto verdict = client.verify(txid, token, kNow);
  CHECK(verdict == TokenVerdict::Valid);
  CHECK(client.verify(txid, token, kNow) == TokenVerdict::Consumed);

  for (int i = 0; i < 4; ++i) {
    auto more = client.issue("+15550179", kNow);
    REQUIRE(more.has_value());
    REQUIRE(more->ok());
  }
  auto throttled = client.issue("+15550179", kNow);
  REQUIRE(throttled.has_value());
  REQUIRE_FALSE(throttled->ok());
  CHECK(throttled->error() == IssueError::Throttled);
}

TEST_CASE("an unreachable provider reads as nullopt and maps to 503") {
  // Nothing listens on the target port: the client reports the outage...
  HttpProviderClient dead("http://127.0.0.1:9", 1);
  CHECK_FALSE(dead.issue("+15550100", kNow).has_value());
  CHECK_FALSE(dead.verify(std::string(32, 'a'), "123456", kNow).has_value());

  // ...and the login endpoint turns it into a 503 so clients may retry.
  MemoryStore store;
  CounterDrbg rng{7};
  ManualClock clock{kNow};
  SymmetricKey master_key = test_master_key();
  AuditLog audit{[](const std::string&) {}};
  AuthConfig cfg;
  AuthService auth{cfg, store, dead, master_key, rng, clock, audit};

  auto reg = auth.register_user("Alice", "Doe", "alice", kPassword, kMobile,
                                kImei, kImsi);
  REQUIRE(reg.ok());

  httplib::Server server;
  mount_auth_api(server, auth);
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  IdentityMessage msg =
      IdentityMessage::make(kImei, kImsi, "alice", clock.now(), rng);
  std::string wire = ciphertext_to_wire(encrypt_identity(msg, reg.value().key));

  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(10, 0);
  json body{{"username", "alice"}, {"password", kPassword}, {"envelope", wire}};
  auto res = c.Post("/login/begin", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 503);
  CHECK(json::parse(res->body)["error"] == "upstream-unavailable");

  server.stop();
  thread.join();
}
