#include "twostep/http_api.hpp"

#include <optional>
#include <utility>
#include <variant>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "twostep/clock.hpp"

namespace twostep {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void reply_bad_request(httplib::Response& res) {
  reply(res, 400, {{"error", "bad-request"}});
}

/// Parses the body as a JSON object whose `fields` are all strings.
/// Returns nullopt (and a 400 reply) otherwise.
std::optional<nlohmann::json> parse_object(
    const httplib::Request& req, httplib::Response& res,
    std::initializer_list<const char*> fields) {
  nlohmann::json body = nlohmann::json::parse(req.body, nullptr,
                                              /*allow_exceptions=*/false);
  if (body.is_discarded() || !body.is_object()) {
    reply_bad_request(res);
    return std::nullopt;
  }
  for (const char* field : fields) {
    if (!body.contains(field) || !body[field].is_string()) {
      reply_bad_request(res);
      return std::nullopt;
    }
  }
  return body;
}

void reply_decision(httplib::Response& res, const AuthDecision& decision) {
  if (decision.granted) {
    reply(res, 200, {{"outcome", "granted"}});
  } else {
    reply(res, 401, {{"outcome", "denied"}});
  }
}

}  // namespace

void mount_auth_api(httplib::Server& server, AuthService& auth) {
  server.Get("/healthz",
             [](const httplib::Request&, httplib::Response& res) {
               reply(res, 200, {{"status", "ok"}});
             });

  server.Post("/register", [&auth](const httplib::Request& req,
                                   httplib::Response& res) {
    auto body = parse_object(req, res,
                             {"first", "last", "username", "password",
                              "mobile", "imei", "imsi"});
    if (!body) {
      return;
    }
    auto result = auth.register_user(
        (*body)["first"].get<std::string>(), (*body)["last"].get<std::string>(),
        (*body)["username"].get<std::string>(),
        (*body)["password"].get<std::string>(),
        (*body)["mobile"].get<std::string>(),
        (*body)["imei"].get<std::string>(),
        (*body)["imsi"].get<std::string>());
    if (result.ok()) {
      Registration& reg = result.value();
      reply(res, 201, {{"username", reg.username},
                       {"mobile", reg.mobile},
                       {"key_b64", reg.key.to_base64()}});
      secure_wipe(reg.key.bytes.data(), reg.key.bytes.size());
      return;
    }
    const RegisterError& err = result.error();
    switch (err.kind) {
      case RegisterErrorKind::DuplicateUsername:
        reply(res, 409, {{"error", "duplicate-username"}});
        return;
      case RegisterErrorKind::WeakPassword: {
        nlohmann::ordered_json violations = nlohmann::json::array();
        for (PinViolation v : err.violations) {
          violations.push_back(to_string(v));
        }
        reply(res, 422,
              {{"error", "weak-password"}, {"violations", violations}});
        return;
      }
      case RegisterErrorKind::MalformedIdentifier:
        reply(res, 422,
              {{"error", "malformed-identifier"}, {"field", err.detail}});
        return;
    }
    reply_bad_request(res);
  });

  server.Post("/login/begin", [&auth](const httplib::Request& req,
                                      httplib::Response& res) {
    auto body = parse_object(req, res, {"username", "password", "envelope"});
    if (!body) {
      return;
    }
    auto envelope =
        ciphertext_from_wire((*body)["envelope"].get<std::string>());
    if (!envelope) {
      reply_bad_request(res);
      return;
    }
    BeginResult result =
        auth.begin_login((*body)["username"].get<std::string>(),
                         (*body)["password"].get<std::string>(), *envelope);
    if (auto* ok = std::get_if<BeginOk>(&result)) {
      reply(res, 200,
            {{"challenge_id", ok->challenge_id}, {"txid", ok->txid}});
    } else if (std::holds_alternative<UpstreamUnavailable>(result)) {
      reply(res, 503, {{"error", "upstream-unavailable"}});
    } else {
      // All denial reasons look the same from outside.
      reply(res, 401, {{"reason", "denied"}});
    }
  });

  server.Post("/login/complete", [&auth](const httplib::Request& req,
                                         httplib::Response& res) {
    auto body = parse_object(req, res, {"challenge_id", "token"});
    if (!body) {
      return;
    }
    reply_decision(
        res, auth.complete_login((*body)["challenge_id"].get<std::string>(),
                            (*body)["token"].get<std::string>()));
  });

  server.Post("/login/otp", [&auth](const httplib::Request& req,
                                    httplib::Response& res) {
    auto body = parse_object(req, res, {"username", "otp"});
    if (!body) {
      return;
    }
    reply_decision(
        res, auth.connectionless_verify((*body)["username"].get<std::string>(),
                                   (*body)["otp"].get<std::string>()));
  });
}

void mount_provider_api(httplib::Server& server, Provider& provider,
                        const Clock& clock) {
  server.Post("/provider/issue", [&provider, &clock](
                                     const httplib::Request& req,
                                     httplib::Response& res) {
    auto body = parse_object(req, res, {"mobile"});
    if (!body) {
      return;
    }
    IssueResult result =
        provider.issue_token((*body)["mobile"].get<std::string>(), clock.now());
    if (result.ok()) {
      reply(res, 200, {{"txid", result.value().txid}});
    } else if (result.error() == IssueError::Throttled) {
      reply(res, 429, {{"error", "throttled"}});
    } else {
      reply(res, 400, {{"error", "bad-mobile"}});
    }
  });

  server.Post("/provider/verify", [&provider, &clock](
                                      const httplib::Request& req,
                                      httplib::Response& res) {
    auto body = parse_object(req, res, {"txid", "token"});
    if (!body) {
      return;
    }
    TokenVerdict verdict =
        provider.verify_token((*body)["txid"].get<std::string>(),
                              (*body)["token"].get<std::string>(), clock.now());
    reply(res, 200, {{"result", to_string(verdict)}});
  });
}

HttpProviderClient::HttpProviderClient(std::string base_url,
                                       int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

std::optional<IssueResult> HttpProviderClient::issue(const std::string& mobile,
                                                     std::int64_t /*now*/) {
  // The remote provider applies its own clock.
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_write_timeout(timeout_seconds_, 0);

  nlohmann::ordered_json body{{"mobile", mobile}};
  auto res = client.Post("/provider/issue", body.dump(), "application/json");
  if (!res) {
    return std::nullopt;
  }
  if (res->status == 429) {
    return IssueResult(IssueError::Throttled);
  }
  if (res->status == 400) {
    return IssueResult(IssueError::BadMobile);
  }
  if (res->status != 200) {
    return std::nullopt;
  }
  nlohmann::json j = nlohmann::json::parse(res->body, nullptr,
                                           /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.contains("txid") || !j["txid"].is_string()) {
    return std::nullopt;
  }
  return IssueResult(Issued{j["txid"].get<std::string>()});
}

std::optional<TokenVerdict> HttpProviderClient::verify(
    const std::string& txid, const std::string& token, std::int64_t /*now*/) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_write_timeout(timeout_seconds_, 0);

  nlohmann::ordered_json body{{"txid", txid}, {"token", token}};
  auto res = client.Post("/provider/verify", body.dump(), "application/json");
  if (!res || res->status != 200) {
    return std::nullopt;
  }
  nlohmann::json j = nlohmann::json::parse(res->body, nullptr,
                                           /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.contains("result") || !j["result"].is_string()) {
    return std::nullopt;
  }
  return token_verdict_from_string(j["result"].get<std::string>());
}

}  // namespace twostep
