#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twostep/clock.hpp"

namespace twostep {

enum class PinViolation { TooShort, NoUpper, NoLower, NoDigit, NoSymbol };

const char* to_string(PinViolation v);

struct PinPolicy {
  std::size_t min_length = 8;
  bool require_upper = true;
  bool require_lower = true;
  bool require_digit = true;
  bool require_symbol = true;
};

/// Returns every violated rule, never just the first; an empty result means
/// the PIN satisfies the policy. A symbol is any character outside
/// [A-Za-z0-9]. Throws std::invalid_argument for policies with
/// min_length < 4.
std::vector<PinViolation> validate_pin(std::string_view pin,
                                       const PinPolicy& policy);

enum class OtpWindow { PerMinute, PerTenMinutes };

const char* to_string(OtpWindow w);
std::optional<OtpWindow> otp_window_from_string(std::string_view text);

/// Seconds covered by one validity window.
std::int64_t window_seconds(OtpWindow w);

inline constexpr std::size_t kMinOtpLength = 4;
inline constexpr std::size_t kMaxOtpLength = 28;

struct OtpPolicy {
  std::size_t otp_length = 8;  // kMinOtpLength..kMaxOtpLength
  OtpWindow window = OtpWindow::PerTenMinutes;
  // Digest is fixed to SHA-256 in this version.
};

/// Static per-user identification factors feeding the derivation.
struct FactorSet {
  std::string imei;      // exactly 15 decimal digits
  std::string imsi;      // 6-15 decimal digits
  std::string username;  // nonempty, no bytes < 0x20, no '|'
  std::string pin;

  /// Enforces all field invariants; `pin` must satisfy `policy`.
  /// Throws std::invalid_argument naming the offending field.
  static FactorSet create(std::string imei, std::string imsi,
                          std::string username, std::string pin,
                          const PinPolicy& policy = {});
};

bool valid_imei(std::string_view imei);
bool valid_imsi(std::string_view imsi);
bool valid_username(std::string_view username);

/// Quantized clock fields bounding OTP validity. Under PerTenMinutes,
/// `minute_slot` is the first decimal digit of the minute (0-5); under
/// PerMinute it widens to the full minute (0-59).
struct TimeFactors {
  unsigned yy = 0;   // last two digits of the year
  unsigned mm = 1;   // 1-12
  unsigned dd = 1;   // 1-31
  unsigned dow = 0;  // Monday = 0
  unsigned hh = 0;   // 0-23
  unsigned minute_slot = 0;
  OtpWindow window = OtpWindow::PerTenMinutes;
  bool operator==(const TimeFactors&) const = default;
};

TimeFactors time_factors(const CivilTime& civil, const OtpPolicy& policy);

/// The deterministic derivation input: fields joined with '|' in the order
/// imei, imsi, username, pin, hh, minute-slot, dow, yy, mm, dd. Numeric
/// fields render as zero-padded fixed-width decimal (hh:2, minute-slot:1,
/// or 2 under PerMinute, dow:1, yy:2, mm:2, dd:2).
std::string canonical_concat(const FactorSet& factors,
                             const TimeFactors& time);

/// Shrinks a Base64 string by repeatedly splitting it into a first half of
/// ceil(n/2) characters and a second half padded to the same length with
/// 'A', XOR-ing the 6-bit alphabet indices position-wise, until the length
/// is at most 2*target_len - 1; the result is then truncated to exactly
/// target_len. Throws std::length_error when target_len is 0 or exceeds the
/// input length, std::invalid_argument when the input leaves the alphabet.
std::string fold_base64(std::string_view b64, std::size_t target_len);

/// SHA-256 of the canonical concatenation, XOR-ed with the PIN's bytes
/// repeated cyclically to 32 bytes, Base64-encoded without padding
/// (43 characters), then folded to the policy length. Deterministic; equal
/// on client and server for equal inputs. The PIN is used transiently and
/// never copied into any output or log.
std::string derive_otp(const FactorSet& factors, const TimeFactors& time,
                       const OtpPolicy& policy);

/// Quantizes an instant in the provider's fixed-offset zone and derives.
std::string derive_otp_at(const FactorSet& factors, std::int64_t epoch_seconds,
                          int tz_offset_minutes, const OtpPolicy& policy);

}  // namespace twostep
