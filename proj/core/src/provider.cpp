#include "twostep/provider.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>
#include <system_error>
#include <utility>

#include <nlohmann/json.hpp>

#include "twostep/crypto.hpp"
#include "twostep/random.hpp"

namespace twostep {

const char* to_string(TokenState s) {
  switch (s) {
    case TokenState::Pending:
      return "pending";
    case TokenState::Consumed:
      return "consumed";
    case TokenState::Expired:
      return "expired";
  }
  return "unknown";
}

const char* to_string(TokenVerdict v) {
  switch (v) {
    case TokenVerdict::Valid:
      return "valid";
    case TokenVerdict::Invalid:
      return "invalid";
    case TokenVerdict::Expired:
      return "expired";
    case TokenVerdict::Consumed:
      return "consumed";
    case TokenVerdict::Unknown:
      return "unknown";
  }
  return "unknown";
}

std::optional<TokenVerdict> token_verdict_from_string(std::string_view text) {
  if (text == "valid") return TokenVerdict::Valid;
  if (text == "invalid") return TokenVerdict::Invalid;
  if (text == "expired") return TokenVerdict::Expired;
  if (text == "consumed") return TokenVerdict::Consumed;
  if (text == "unknown") return TokenVerdict::Unknown;
  return std::nullopt;
}

const char* to_string(IssueError e) {
  switch (e) {
    case IssueError::BadMobile:
      return "bad-mobile";
    case IssueError::Throttled:
      return "throttled";
  }
  return "unknown";
}

void MemoryOutbox::send(const SmsRecord& sms) {
  std::lock_guard<std::mutex> lock(mutex_);
  records_.push_back(sms);
}

std::vector<SmsRecord> MemoryOutbox::records() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_;
}

std::size_t MemoryOutbox::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_.size();
}

FileOutbox::FileOutbox(std::string path) : path_(std::move(path)) {}

void FileOutbox::send(const SmsRecord& sms) {
  nlohmann::ordered_json j;
  j["mobile"] = sms.mobile;
  j["body"] = sms.body;
  j["sent_at"] = sms.sent_at;
  std::string line = j.dump();

  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) {
    throw std::system_error(errno, std::generic_category(),
                            "cannot open outbox file " + path_);
  }
  out << line << '\n';
  out.flush();
}

OutboxFile read_outbox_file(const std::string& path) {
  OutboxFile result;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return result;  // absent file reads as empty
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(line, nullptr,
                                             /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() ||            //
        !j.contains("mobile") || !j["mobile"].is_string() ||
        !j.contains("body") || !j["body"].is_string() ||
        !j.contains("sent_at") || !j["sent_at"].is_number_integer()) {
      result.malformed_lines.push_back(line_no);
      continue;
    }
    SmsRecord rec;
    rec.mobile = j["mobile"].get<std::string>();
    rec.body = j["body"].get<std::string>();
    rec.sent_at = j["sent_at"].get<std::int64_t>();
    result.records.push_back(std::move(rec));
  }
  return result;
}

bool valid_mobile(std::string_view mobile) {
  if (mobile.size() < 8 || mobile.size() > 16 || mobile[0] != '+') {
    return false;
  }
  for (std::size_t i = 1; i < mobile.size(); ++i) {
    if (mobile[i] < '0' || mobile[i] > '9') {
      return false;
    }
  }
  return true;
}

Provider::Provider(ProviderConfig cfg, RandomSource& rng, SmsTransport& sms)
    : cfg_(cfg), rng_(rng), sms_(sms) {
  if (cfg_.token_length < 4 || cfg_.token_length > 10) {
    throw std::invalid_argument("token_length must be in 4..=10");
  }
  if (cfg_.validity_seconds <= 0) {
    throw std::invalid_argument("validity_seconds must be positive");
  }
  if (cfg_.max_attempts < 1) {
    throw std::invalid_argument("max_attempts must be at least 1");
  }
  if (cfg_.issue_limit < 1 || cfg_.issue_window_seconds <= 0) {
    throw std::invalid_argument("issue rate limit must be positive");
  }
}

IssueResult Provider::issue_token(const std::string& mobile,
                                  std::int64_t now) {
  if (!valid_mobile(mobile)) {
    return IssueError::BadMobile;
  }

  std::lock_guard<std::mutex> lock(mutex_);

  auto& times = issue_times_[mobile];
  while (!times.empty() && times.front() <= now - cfg_.issue_window_seconds) {
    times.pop_front();
  }
  if (static_cast<int>(times.size()) >= cfg_.issue_limit) {
    return IssueError::Throttled;
  }

  // Draw the transaction id before the token so seeded runs are reproducible.
  std::string txid = rng_.hex(16);
  while (records_.count(txid) != 0) {
    txid = rng_.hex(16);
  }
  TokenRecord rec;
  rec.mobile = mobile;
  rec.token = rng_.decimal_digits(cfg_.token_length);
  rec.issued_at = now;
  rec.expires_at = now + cfg_.validity_seconds;

  SmsRecord sms;
  sms.mobile = mobile;
  sms.body = "Your code is " + rec.token;
  sms.sent_at = now;

  records_.emplace(txid, std::move(rec));
  times.push_back(now);
  sms_.send(sms);
  secure_wipe(sms.body.data(), sms.body.size());
  return Issued{std::move(txid)};
}

TokenVerdict Provider::verify_token(const std::string& txid,
                                    const std::string& token,
                                    std::int64_t now) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = records_.find(txid);
  if (it == records_.end()) {
    return TokenVerdict::Unknown;
  }
  TokenRecord& rec = it->second;
  switch (rec.state) {
    case TokenState::Consumed:
      return TokenVerdict::Consumed;
    case TokenState::Expired:
      return TokenVerdict::Expired;
    case TokenState::Pending:
      break;
  }
  if (now >= rec.expires_at) {
    rec.state = TokenState::Expired;
    secure_wipe(rec.token.data(), rec.token.size());
    rec.token.clear();
    return TokenVerdict::Expired;
  }
  if (constant_time_equal(token, rec.token)) {
    rec.state = TokenState::Consumed;
    secure_wipe(rec.token.data(), rec.token.size());
    rec.token.clear();
    return TokenVerdict::Valid;
  }
  ++rec.failed_attempts;
  if (rec.failed_attempts >= cfg_.max_attempts) {
    rec.state = TokenState::Expired;
    secure_wipe(rec.token.data(), rec.token.size());
    rec.token.clear();
  }
  return TokenVerdict::Invalid;
}

std::size_t Provider::sweep_expired(std::int64_t now) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::size_t count = 0;
  for (auto& [txid, rec] : records_) {
    if (rec.state == TokenState::Pending && rec.expires_at <= now) {
      rec.state = TokenState::Expired;
      secure_wipe(rec.token.data(), rec.token.size());
      rec.token.clear();
      ++count;
    }
  }
  return count;
}

std::optional<TokenStatus> Provider::token_state(
    const std::string& txid) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = records_.find(txid);
  if (it == records_.end()) {
    return std::nullopt;
  }
  const TokenRecord& rec = it->second;
  TokenStatus status;
  status.state = rec.state;
  status.failed_attempts = rec.failed_attempts;
  status.mobile = rec.mobile;
  status.issued_at = rec.issued_at;
  status.expires_at = rec.expires_at;
  return status;
}

}  // namespace twostep
