#include "twostep/otp.hpp"

#include <stdexcept>

#include "twostep/base64.hpp"
#include "twostep/crypto.hpp"

namespace twostep {

const char* to_string(PinViolation v) {
  switch (v) {
    case PinViolation::TooShort: return "too-short";
    case PinViolation::NoUpper: return "no-upper";
    case PinViolation::NoLower: return "no-lower";
    case PinViolation::NoDigit: return "no-digit";
    case PinViolation::NoSymbol: return "no-symbol";
  }
  return "?";
}

const char* to_string(OtpWindow w) {
  return w == OtpWindow::PerMinute ? "per-minute" : "per-ten-minutes";
}

std::optional<OtpWindow> otp_window_from_string(std::string_view text) {
  if (text == "per-minute") return OtpWindow::PerMinute;
  if (text == "per-ten-minutes") return OtpWindow::PerTenMinutes;
  return std::nullopt;
}

std::int64_t window_seconds(OtpWindow w) {
  return w == OtpWindow::PerMinute ? 60 : 600;
}

std::vector<PinViolation> validate_pin(std::string_view pin,
                                       const PinPolicy& policy) {
  if (policy.min_length < 4) {
    throw std::invalid_argument("PinPolicy: min_length must be at least 4");
  }
  std::vector<PinViolation> violations;
  if (pin.size() < policy.min_length) {
    violations.push_back(PinViolation::TooShort);
  }
  bool upper = false, lower = false, digit = false, symbol = false;
  for (char ch : pin) {
    if (ch >= 'A' && ch <= 'Z') upper = true;
    else if (ch >= 'a' && ch <= 'z') lower = true;
    else if (ch >= '0' && ch <= '9') digit = true;
    else symbol = true;
  }
  if (policy.require_upper && !upper) violations.push_back(PinViolation::NoUpper);
  if (policy.require_lower && !lower) violations.push_back(PinViolation::NoLower);
  if (policy.require_digit && !digit) violations.push_back(PinViolation::NoDigit);
  if (policy.require_symbol && !symbol) violations.push_back(PinViolation::NoSymbol);
  return violations;
}

bool valid_imei(std::string_view imei) {
  if (imei.size() != 15) return false;
  for (char c : imei) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

bool valid_imsi(std::string_view imsi) {
  if (imsi.size() < 6 || imsi.size() > 15) return false;
  for (char c : imsi) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

bool valid_username(std::string_view username) {
  if (username.empty()) return false;
  for (char c : username) {
    if (static_cast<unsigned char>(c) < 0x20 || c == '|') return false;
  }
  return true;
}

FactorSet FactorSet::create(std::string imei, std::string imsi,
                            std::string username, std::string pin,
                            const PinPolicy& policy) {
  if (!valid_imei(imei)) {
    throw std::invalid_argument("FactorSet: imei must be exactly 15 digits");
  }
  if (!valid_imsi(imsi)) {
    throw std::invalid_argument("FactorSet: imsi must be 6-15 digits");
  }
  if (!valid_username(username)) {
    throw std::invalid_argument(
        "FactorSet: username must be nonempty without control bytes or '|'");
  }
  if (!validate_pin(pin, policy).empty()) {
    throw std::invalid_argument("FactorSet: pin violates the active policy");
  }
  return FactorSet{std::move(imei), std::move(imsi), std::move(username),
                   std::move(pin)};
}

TimeFactors time_factors(const CivilTime& civil, const OtpPolicy& policy) {
  if (!civil_date_valid(civil.year, civil.month, civil.day)) {
    throw std::invalid_argument("time_factors: invalid calendar date");
  }
  if (civil.hour > 23 || civil.minute > 59) {
    throw std::invalid_argument("time_factors: invalid time of day");
  }
  TimeFactors tf;
  tf.yy = static_cast<unsigned>(((civil.year % 100) + 100) % 100);
  tf.mm = civil.month;
  tf.dd = civil.day;
  tf.dow = static_cast<unsigned>(day_of_week(civil.year, civil.month, civil.day));
  tf.hh = civil.hour;
  tf.minute_slot =
      policy.window == OtpWindow::PerMinute ? civil.minute : civil.minute / 10;
  tf.window = policy.window;
  return tf;
}

namespace {

void append_2d(std::string& out, unsigned v) {
  out.push_back(static_cast<char>('0' + (v / 10) % 10));
  out.push_back(static_cast<char>('0' + v % 10));
}

void check_factors(const FactorSet& factors) {
  if (!valid_imei(factors.imei) || !valid_imsi(factors.imsi) ||
      !valid_username(factors.username) || factors.pin.empty()) {
    throw std::invalid_argument("FactorSet invariant violated");
  }
}

}  // namespace

std::string canonical_concat(const FactorSet& factors,
                             const TimeFactors& time) {
  check_factors(factors);
  std::string out;
  out.reserve(factors.imei.size() + factors.imsi.size() +
              factors.username.size() + factors.pin.size() + 20);
  out += factors.imei;
  out += '|';
  out += factors.imsi;
  out += '|';
  out += factors.username;
  out += '|';
  out += factors.pin;
  out += '|';
  append_2d(out, time.hh);
  out += '|';
  if (time.window == OtpWindow::PerMinute) {
    append_2d(out, time.minute_slot);
  } else {
    out.push_back(static_cast<char>('0' + time.minute_slot % 10));
  }
  out += '|';
  out.push_back(static_cast<char>('0' + time.dow % 10));
  out += '|';
  append_2d(out, time.yy);
  out += '|';
  append_2d(out, time.mm);
  out += '|';
  append_2d(out, time.dd);
  return out;
}

std::string fold_base64(std::string_view b64, std::size_t target_len) {
  if (target_len < 1 || target_len > b64.size()) {
    throw std::length_error("fold_base64: target length out of range");
  }
  std::vector<std::uint8_t> indices;
  indices.reserve(b64.size());
  for (char c : b64) {
    const int idx = base64_index(c);
    if (idx < 0) {
      throw std::invalid_argument("fold_base64: input outside Base64 alphabet");
    }
    indices.push_back(static_cast<std::uint8_t>(idx));
  }
  while (indices.size() > 2 * target_len - 1) {
    const std::size_t half = (indices.size() + 1) / 2;
    std::vector<std::uint8_t> next(half);
    for (std::size_t i = 0; i < half; ++i) {
      // Missing tail positions count as 'A' (index 0).
      const std::uint8_t low =
          half + i < indices.size() ? indices[half + i] : std::uint8_t{0};
      next[i] = static_cast<std::uint8_t>(indices[i] ^ low);
    }
    indices = std::move(next);
  }
  std::string out(target_len, 'A');
  for (std::size_t i = 0; i < target_len; ++i) {
    out[i] = kBase64Alphabet[indices[i]];
  }
  return out;
}

std::string derive_otp(const FactorSet& factors, const TimeFactors& time,
                       const OtpPolicy& policy) {
  check_factors(factors);
  if (policy.otp_length < kMinOtpLength || policy.otp_length > kMaxOtpLength) {
    throw std::invalid_argument("OtpPolicy: otp_length out of range");
  }
  if (time.window != policy.window) {
    throw std::invalid_argument(
        "derive_otp: time factors quantized under a different window");
  }

  std::string message = canonical_concat(factors, time);
  Sha256Digest digest = sha256(message);
  secure_wipe(message.data(), message.size());

  // The PIN's bytes cycled to the digest width, then XOR-ed in.
  std::array<std::uint8_t, 32> mixed{};
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    mixed[i] = digest[i] ^
               static_cast<std::uint8_t>(factors.pin[i % factors.pin.size()]);
  }
  secure_wipe(digest.data(), digest.size());

  std::string encoded = base64_encode(mixed, /*pad=*/false);  // 43 chars
  secure_wipe(mixed.data(), mixed.size());

  std::string otp = fold_base64(encoded, policy.otp_length);
  secure_wipe(encoded.data(), encoded.size());
  return otp;
}

std::string derive_otp_at(const FactorSet& factors, std::int64_t epoch_seconds,
                          int tz_offset_minutes, const OtpPolicy& policy) {
  return derive_otp(
      factors, time_factors(civil_from_epoch(epoch_seconds, tz_offset_minutes),
                            policy),
      policy);
}

}  // namespace twostep
