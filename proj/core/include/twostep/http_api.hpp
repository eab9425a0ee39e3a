#pragma once

#include <string>

#include "twostep/auth_service.hpp"
#include "twostep/provider.hpp"

namespace httplib {
class Server;
}

namespace twostep {

class Clock;

/// Mounts POST /register, /login/begin, /login/complete, /login/otp and
/// GET /healthz onto `server`. Handlers run on httplib's worker threads;
/// `auth` must outlive the server.
void mount_auth_api(httplib::Server& server, AuthService& auth);

/// Mounts POST /provider/issue and /provider/verify. `now` comes from
/// `clock` so tests can drive expiry deterministically.
void mount_provider_api(httplib::Server& server, Provider& provider,
                        const Clock& clock);

/// ProviderApi over HTTP for a provider mounted in another process.
/// Returns std::nullopt on connection failures and timeouts.
class HttpProviderClient final : public ProviderApi {
 public:
  explicit HttpProviderClient(std::string base_url, int timeout_seconds = 5);

  std::optional<IssueResult> issue(const std::string& mobile,
                                   std::int64_t now) override;
  std::optional<TokenVerdict> verify(const std::string& txid,
                                     const std::string& token,
                                     std::int64_t now) override;

 private:
  std::string base_url_;
  int timeout_seconds_;
};

}  // namespace twostep
