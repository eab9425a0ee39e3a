#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string_view>

namespace twostep {

class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds since the Unix epoch.
  virtual std::int64_t now() const = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now() const override;
};

/// Settable clock for tests and simulated runs.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start = 0) : now_(start) {}
  std::int64_t now() const override { return now_.load(); }
  void set(std::int64_t t) { now_.store(t); }
  void advance(std::int64_t seconds) { now_.fetch_add(seconds); }

 private:
  std::atomic<std::int64_t> now_;
};

/// Calendar time in the provider's fixed-offset zone, minute precision.
struct CivilTime {
  int year = 1970;
  unsigned month = 1;  // 1-12
  unsigned day = 1;    // 1-31
  unsigned hour = 0;   // 0-23
  unsigned minute = 0; // 0-59
  bool operator==(const CivilTime&) const = default;
};

CivilTime civil_from_epoch(std::int64_t epoch_seconds, int tz_offset_minutes);

/// Inverse of civil_from_epoch for valid civil times (seconds = 0).
std::int64_t epoch_from_civil(const CivilTime& civil, int tz_offset_minutes);

/// Monday = 0 ... Sunday = 6.
int day_of_week(int year, unsigned month, unsigned day);

bool civil_date_valid(int year, unsigned month, unsigned day);

/// Parses "YYYY-MM-DD HH:MM" (a 'T' separator is also accepted).
std::optional<CivilTime> parse_civil(std::string_view text);

}  // namespace twostep
