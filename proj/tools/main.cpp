// twostep: serve the authentication stack, act as the mobile client, and
// inspect the simulated SMS outbox.

#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "twostep/auth_service.hpp"
#include "twostep/base64.hpp"
#include "twostep/clock.hpp"
#include "twostep/config.hpp"
#include "twostep/envelope.hpp"
#include "twostep/http_api.hpp"
#include "twostep/otp.hpp"
#include "twostep/provider.hpp"
#include "twostep/random.hpp"
#include "twostep/store.hpp"
#include "twostep/audit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDenied = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNetwork = 3;

struct GlobalOpts {
  std::string server = "http://127.0.0.1:8080";
  std::string config_path;
  bool json = false;
};

twostep::Config load_effective_config(const GlobalOpts& opts) {
  twostep::Config cfg;
  if (!opts.config_path.empty()) {
    cfg = twostep::load_config_file(opts.config_path);
  }
  twostep::apply_env_overrides(cfg);
  return cfg;
}

/// Reads the PIN without echoing. Order: TWOSTEP_PIN, then an interactive
/// prompt; piped stdin is read as a single line for scripting.
std::string read_pin() {
  if (const char* env = std::getenv("TWOSTEP_PIN")) {
    return env;
  }
  std::string pin;
  if (!isatty(STDIN_FILENO)) {
    std::getline(std::cin, pin);
    return pin;
  }
  std::cerr << "PIN: " << std::flush;
  termios saved{};
  tcgetattr(STDIN_FILENO, &saved);
  termios quiet = saved;
  quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
  tcsetattr(STDIN_FILENO, TCSAFLUSH, &quiet);
  std::getline(std::cin, pin);
  tcsetattr(STDIN_FILENO, TCSAFLUSH, &saved);
  std::cerr << "\n";
  return pin;
}

struct Profile {
  std::string username;
  std::string mobile;
  std::string imei;
  std::string imsi;
  std::string key_b64;
  std::string server;
};

bool write_profile(const std::string& path, const Profile& p) {
  nlohmann::ordered_json j;
  j["username"] = p.username;
  j["mobile"] = p.mobile;
  j["imei"] = p.imei;
  j["imsi"] = p.imsi;
  j["key_b64"] = p.key_b64;
  j["server"] = p.server;
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) {
    return false;
  }
  out << j.dump(2) << "\n";
  out.close();
  ::chmod(path.c_str(), 0600);  // the profile holds the symmetric key
  return out.good();
}

std::optional<Profile> read_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  nlohmann::json j = nlohmann::json::parse(in, nullptr,
                                           /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    return std::nullopt;
  }
  Profile p;
  for (auto [field, dest] : {std::pair{"username", &p.username},
                             {"mobile", &p.mobile},
                             {"imei", &p.imei},
                             {"imsi", &p.imsi},
                             {"key_b64", &p.key_b64},
                             {"server", &p.server}}) {
    if (!j.contains(field) || !j[field].is_string()) {
      return std::nullopt;
    }
    *dest = j[field].get<std::string>();
  }
  return p;
}

/// POSTs a JSON body; returns status and parsed body, or nullopt when the
/// server cannot be reached.
std::optional<std::pair<int, nlohmann::json>> post_json(
    const std::string& server, const std::string& path,
    const nlohmann::ordered_json& body) {
  httplib::Client client(server);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(5, 0);
  client.set_write_timeout(5, 0);
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    return std::nullopt;
  }
  nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr,
                                                /*allow_exceptions=*/false);
  if (parsed.is_discarded()) {
    parsed = nlohmann::json::object();
  }
  return std::make_pair(res->status, std::move(parsed));
}

int cmd_serve(const GlobalOpts& opts) {
  twostep::Config cfg;
  try {
    cfg = load_effective_config(opts);
  } catch (const twostep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    twostep::SystemRandom rng;
    twostep::SystemClock clock;
    twostep::AuditLog audit;

    twostep::AuthConfig auth_cfg = twostep::make_auth_config(cfg);
    twostep::ProviderConfig provider_cfg = twostep::make_provider_config(cfg);
    twostep::SymmetricKey master_key =
        twostep::load_or_create_master_key(cfg.master_key_path, rng);
    twostep::FileStore store(cfg.store_path);
    twostep::FileOutbox outbox(cfg.outbox_path);

    // In-process provider by default; an external one via its base URL.
    twostep::Provider provider(provider_cfg, rng, outbox);
    twostep::InProcessProvider local_provider(provider);
    std::optional<twostep::HttpProviderClient> remote_provider;
    twostep::ProviderApi* provider_api = &local_provider;
    if (!cfg.provider_base_url.empty()) {
      remote_provider.emplace(cfg.provider_base_url);
      provider_api = &*remote_provider;
    }

    twostep::AuthService auth(auth_cfg, store, *provider_api, master_key,
                              rng, clock, audit);

    httplib::Server server;
    twostep::mount_auth_api(server, auth);
    if (cfg.provider_base_url.empty()) {
      twostep::mount_provider_api(server, provider, clock);
    }

    if (cfg.listen_port < 1 || cfg.listen_port > 65535 ||
        !server.bind_to_port(cfg.listen_address, cfg.listen_port)) {
      std::cerr << "cannot bind " << cfg.listen_address << ":"
                << cfg.listen_port << "\n";
      return kExitUsage;
    }
    std::cout << "listening on http://" << cfg.listen_address << ":"
              << cfg.listen_port << "\n"
              << std::flush;
    server.listen_after_bind();
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "serve failed: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct RegisterArgs {
  std::string first;
  std::string last;
  std::string username;
  std::string mobile;
  std::string imei;
  std::string imsi;
  std::string profile_path;
};

int cmd_register(const GlobalOpts& opts, const RegisterArgs& args) {
  std::string password = read_pin();
  if (password.empty()) {
    std::cerr << "a password/PIN is required\n";
    return kExitUsage;
  }
  nlohmann::ordered_json body{{"first", args.first},   {"last", args.last},
                              {"username", args.username},
                              {"password", password},  {"mobile", args.mobile},
                              {"imei", args.imei},     {"imsi", args.imsi}};
  auto res = post_json(opts.server, "/register", body);
  twostep::secure_wipe(password.data(), password.size());
  if (!res) {
    std::cerr << "cannot reach " << opts.server << "\n";
    return kExitNetwork;
  }
  auto& [status, reply] = *res;
  if (status != 201) {
    if (opts.json) {
      std::cout << reply.dump() << "\n";
    } else {
      std::cerr << "registration rejected: "
                << reply.value("error", "unexpected response") << "\n";
      if (reply.contains("violations")) {
        for (const auto& v : reply["violations"]) {
          std::cerr << "  - " << v.get<std::string>() << "\n";
        }
      }
    }
    return kExitDenied;
  }

  Profile profile;
  profile.username = args.username;
  profile.mobile = args.mobile;
  profile.imei = args.imei;
  profile.imsi = args.imsi;
  profile.key_b64 = reply.value("key_b64", "");
  profile.server = opts.server;
  if (profile.key_b64.empty() || !write_profile(args.profile_path, profile)) {
    std::cerr << "cannot write profile " << args.profile_path << "\n";
    return kExitUsage;
  }
  if (opts.json) {
    std::cout << nlohmann::ordered_json{{"username", profile.username},
                                        {"profile", args.profile_path}}
                     .dump()
              << "\n";
  } else {
    std::cout << "registered " << profile.username << "; key saved to "
              << args.profile_path << "\n";
  }
  return kExitOk;
}

/// Newest outbox token for this mobile, if any: the trailing digit run of
/// the record body.
std::optional<std::string> latest_token(const std::string& outbox_path,
                                        const std::string& mobile) {
  auto outbox = twostep::read_outbox_file(outbox_path);
  for (auto it = outbox.records.rbegin(); it != outbox.records.rend(); ++it) {
    if (it->mobile != mobile) {
      continue;
    }
    const std::string& body = it->body;
    std::size_t end = body.size();
    std::size_t start = end;
    while (start > 0 && body[start - 1] >= '0' && body[start - 1] <= '9') {
      --start;
    }
    if (start == end) {
      continue;
    }
    return body.substr(start, end - start);
  }
  return std::nullopt;
}

struct LoginArgs {
  std::string profile_path;
  std::string token;
  bool auto_token = false;
  std::string outbox_path;
};

int cmd_login(const GlobalOpts& opts, const LoginArgs& args,
              bool server_overridden) {
  auto profile = read_profile(args.profile_path);
  if (!profile) {
    std::cerr << "cannot read profile " << args.profile_path << "\n";
    return kExitUsage;
  }
  std::string server =
      server_overridden || profile->server.empty() ? opts.server
                                                   : profile->server;

  auto key = twostep::SymmetricKey::from_base64(profile->key_b64);
  if (!key) {
    std::cerr << "profile holds no valid key\n";
    return kExitUsage;
  }
  std::string password = read_pin();
  if (password.empty()) {
    std::cerr << "a password/PIN is required\n";
    return kExitUsage;
  }

  twostep::SystemRandom rng;
  twostep::SystemClock clock;
  auto msg = twostep::IdentityMessage::make(profile->imei, profile->imsi,
                                            profile->username, clock.now(),
                                            rng);
  std::string envelope =
      twostep::ciphertext_to_wire(twostep::encrypt_identity(msg, *key));
  twostep::secure_wipe(key->bytes.data(), key->bytes.size());

  nlohmann::ordered_json begin_body{{"username", profile->username},
                                    {"password", password},
                                    {"envelope", envelope}};
  auto begin_res = post_json(server, "/login/begin", begin_body);
  twostep::secure_wipe(password.data(), password.size());
  if (!begin_res) {
    std::cerr << "cannot reach " << server << "\n";
    return kExitNetwork;
  }
  if (begin_res->first == 503) {
    std::cerr << "token provider unavailable, try again\n";
    return kExitNetwork;
  }
  if (begin_res->first != 200) {
    if (opts.json) {
      std::cout << nlohmann::ordered_json{{"outcome", "denied"}}.dump()
                << "\n";
    } else {
      std::cout << "denied\n";
    }
    return kExitDenied;
  }
  std::string challenge_id = begin_res->second.value("challenge_id", "");

  std::string token = args.token;
  if (token.empty() && args.auto_token) {
    // The serve process appends the SMS before replying, but give the
    // filesystem a little slack.
    for (int attempt = 0; attempt < 40 && token.empty(); ++attempt) {
      if (auto found = latest_token(args.outbox_path, profile->mobile)) {
        token = *found;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    if (token.empty()) {
      std::cerr << "no SMS for " << profile->mobile << " in "
                << args.outbox_path << "\n";
      return kExitUsage;
    }
  }
  if (token.empty()) {
    std::cerr << "token from SMS: " << std::flush;
    std::getline(std::cin, token);
  }

  auto complete_res = post_json(server, "/login/complete",
                                {{"challenge_id", challenge_id},
                                 {"token", token}});
  if (!complete_res) {
    std::cerr << "cannot reach " << server << "\n";
    return kExitNetwork;
  }
  bool granted = complete_res->first == 200;
  if (opts.json) {
    std::cout << nlohmann::ordered_json{
                     {"outcome", granted ? "granted" : "denied"}}
                     .dump()
              << "\n";
  } else {
    std::cout << (granted ? "granted" : "denied") << "\n";
  }
  return granted ? kExitOk : kExitDenied;
}

struct OtpArgs {
  std::string profile_path;
  std::string at;
  std::int64_t at_epoch = -1;
  int length = 8;
  std::string window = "per-ten-minutes";
  int tz_offset_minutes = 0;
};

int cmd_otp(const GlobalOpts& opts, const OtpArgs& args) {
  auto profile = read_profile(args.profile_path);
  if (!profile) {
    std::cerr << "cannot read profile " << args.profile_path << "\n";
    return kExitUsage;
  }
  auto window = twostep::otp_window_from_string(args.window);
  if (!window) {
    std::cerr << "window must be per-minute or per-ten-minutes\n";
    return kExitUsage;
  }
  if (args.length < static_cast<int>(twostep::kMinOtpLength) ||
      args.length > static_cast<int>(twostep::kMaxOtpLength)) {
    std::cerr << "length must be in 4..28\n";
    return kExitUsage;
  }
  twostep::OtpPolicy policy;
  policy.otp_length = static_cast<std::size_t>(args.length);
  policy.window = *window;

  std::string pin = read_pin();
  std::string otp;
  try {
    twostep::FactorSet factors = twostep::FactorSet::create(
        profile->imei, profile->imsi, profile->username, pin);
    twostep::secure_wipe(pin.data(), pin.size());
    if (!args.at.empty()) {
      auto civil = twostep::parse_civil(args.at);
      if (!civil) {
        std::cerr << "cannot parse --at; expected YYYY-MM-DD HH:MM\n";
        return kExitUsage;
      }
      otp = twostep::derive_otp(factors,
                                twostep::time_factors(*civil, policy), policy);
    } else if (args.at_epoch >= 0) {
      otp = twostep::derive_otp_at(factors, args.at_epoch,
                                   args.tz_offset_minutes, policy);
    } else {
      otp = twostep::derive_otp_at(factors, twostep::SystemClock().now(),
                                   args.tz_offset_minutes, policy);
    }
    twostep::secure_wipe(factors.pin.data(), factors.pin.size());
  } catch (const std::exception& e) {
    twostep::secure_wipe(pin.data(), pin.size());
    std::cerr << "cannot derive: " << e.what() << "\n";
    return kExitUsage;
  }
  if (opts.json) {
    std::cout << nlohmann::ordered_json{{"otp", otp}}.dump() << "\n";
  } else {
    std::cout << otp << "\n";
  }
  return kExitOk;
}

int cmd_outbox(const std::string& path, int tail, bool json) {
  auto outbox = twostep::read_outbox_file(path);
  for (std::size_t line : outbox.malformed_lines) {
    std::cerr << "warning: " << path << ":" << line
              << ": malformed record skipped\n";
  }
  std::size_t start = 0;
  if (tail > 0 && outbox.records.size() > static_cast<std::size_t>(tail)) {
    start = outbox.records.size() - static_cast<std::size_t>(tail);
  }
  for (std::size_t i = start; i < outbox.records.size(); ++i) {
    const auto& rec = outbox.records[i];
    if (json) {
      std::cout << nlohmann::ordered_json{{"mobile", rec.mobile},
                                          {"body", rec.body},
                                          {"sent_at", rec.sent_at}}
                       .dump()
                << "\n";
    } else {
      std::cout << rec.sent_at << " " << rec.mobile << " " << rec.body
                << "\n";
    }
  }
  return kExitOk;
}

struct VectorsArgs {
  int count = 100;
  std::uint64_t seed = 1;
  int length = 8;
  std::string window = "per-ten-minutes";
};

int cmd_vectors(const VectorsArgs& args) {
  auto window = twostep::otp_window_from_string(args.window);
  if (!window) {
    std::cerr << "window must be per-minute or per-ten-minutes\n";
    return kExitUsage;
  }
  if (args.length < static_cast<int>(twostep::kMinOtpLength) ||
      args.length > static_cast<int>(twostep::kMaxOtpLength) ||
      args.count < 0) {
    std::cerr << "length must be in 4..28 and count nonnegative\n";
    return kExitUsage;
  }
  twostep::OtpPolicy policy;
  policy.otp_length = static_cast<std::size_t>(args.length);
  policy.window = *window;

  static constexpr std::string_view kUpper = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  static constexpr std::string_view kLower = "abcdefghijklmnopqrstuvwxyz";
  static constexpr std::string_view kDigits = "0123456789";
  static constexpr std::string_view kSymbols = "!@#$%^&*()-_=+[]{}<>?";

  twostep::CounterDrbg drbg(args.seed);
  auto pick = [&drbg](std::string_view alphabet) {
    return alphabet[drbg.below(alphabet.size())];
  };
  for (int i = 0; i < args.count; ++i) {
    std::string imei = drbg.decimal_digits(15);
    std::string imsi = drbg.decimal_digits(15);
    std::string username = "user" + drbg.decimal_digits(4);
    std::string pin;
    pin += pick(kUpper);
    pin += pick(kLower);
    pin += pick(kDigits);
    pin += pick(kSymbols);
    for (int k = 0; k < 4; ++k) {
      pin += pick(kLower);
    }
    // 2001-09-09..2033-05-18; every draw is a valid civil instant.
    std::int64_t instant =
        1000000000 + static_cast<std::int64_t>(drbg.below(1000000000));

    auto factors = twostep::FactorSet::create(imei, imsi, username, pin);
    std::string otp = twostep::derive_otp_at(factors, instant, 0, policy);
    nlohmann::ordered_json j{{"imei", imei},
                             {"imsi", imsi},
                             {"username", username},
                             {"pin", pin},
                             {"instant", instant},
                             {"window", twostep::to_string(policy.window)},
                             {"length", args.length},
                             {"otp", otp}};
    std::cout << j.dump() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step authentication server and client"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--server", opts.server, "Auth server base URL")
      ->capture_default_str();
  app.add_option("--config", opts.config_path, "JSON config file");
  app.add_flag("--json", opts.json, "Machine-readable output");

  CLI::App* serve = app.add_subcommand("serve", "Run the server");

  RegisterArgs reg;
  CLI::App* do_register =
      app.add_subcommand("register", "Register a user and save a profile");
  do_register->add_option("--first", reg.first, "First name")->required();
  do_register->add_option("--last", reg.last, "Last name")->required();
  do_register->add_option("--username", reg.username)->required();
  do_register->add_option("--mobile", reg.mobile, "E.164 mobile, e.g. +15550100")
      ->required();
  do_register->add_option("--imei", reg.imei, "15-digit IMEI")->required();
  do_register->add_option("--imsi", reg.imsi, "6-15 digit IMSI")->required();
  do_register->add_option("--profile", reg.profile_path, "Profile output path")
      ->required();

  LoginArgs login;
  CLI::App* do_login =
      app.add_subcommand("login", "Two-step login against the server");
  do_login->add_option("--profile", login.profile_path)->required();
  do_login->add_option("--token", login.token, "SMS token (skips prompt)");
  do_login->add_flag("--auto-token", login.auto_token,
                     "Read the token from the outbox file");
  do_login->add_option("--outbox", login.outbox_path,
                       "Outbox path for --auto-token");

  OtpArgs otp;
  CLI::App* do_otp =
      app.add_subcommand("otp", "Derive the connection-less OTP locally");
  do_otp->add_option("--profile", otp.profile_path)->required();
  do_otp->add_option("--at", otp.at, "Civil time YYYY-MM-DD HH:MM");
  do_otp->add_option("--at-epoch", otp.at_epoch, "Epoch seconds");
  do_otp->add_option("--length", otp.length)->capture_default_str();
  do_otp->add_option("--window", otp.window)->capture_default_str();
  do_otp->add_option("--tz-offset-minutes", otp.tz_offset_minutes)
      ->capture_default_str();

  std::string outbox_path;
  int outbox_tail = 0;
  CLI::App* do_outbox =
      app.add_subcommand("outbox", "Print simulated SMS records");
  do_outbox->add_option("--path", outbox_path, "Outbox file");
  do_outbox->add_option("--tail", outbox_tail, "Only the last N records");

  VectorsArgs vectors;
  CLI::App* do_vectors =
      app.add_subcommand("vectors", "Emit deterministic OTP test vectors");
  do_vectors->add_option("--count", vectors.count)->capture_default_str();
  do_vectors->add_option("--seed", vectors.seed)->capture_default_str();
  do_vectors->add_option("--length", vectors.length)->capture_default_str();
  do_vectors->add_option("--window", vectors.window)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  bool server_overridden = app.count("--server") > 0;

  // Paths that fall back to config defaults.
  twostep::Config defaults;
  try {
    defaults = load_effective_config(opts);
  } catch (const twostep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (login.outbox_path.empty()) {
    login.outbox_path = defaults.outbox_path;
  }
  if (outbox_path.empty()) {
    outbox_path = defaults.outbox_path;
  }
  if (do_otp->count("--tz-offset-minutes") == 0) {
    otp.tz_offset_minutes = defaults.tz_offset_minutes;
  }

  if (serve->parsed()) {
    return cmd_serve(opts);
  }
  if (do_register->parsed()) {
    return cmd_register(opts, reg);
  }
  if (do_login->parsed()) {
    return cmd_login(opts, login, server_overridden);
  }
  if (do_otp->parsed()) {
    return cmd_otp(opts, otp);
  }
  if (do_outbox->parsed()) {
    return cmd_outbox(outbox_path, outbox_tail, opts.json);
  }
  if (do_vectors->parsed()) {
    return cmd_vectors(vectors);
  }
  return kExitUsage;
}
