#include "twostep/clock.hpp"

#include <chrono>
#include <cstdio>

namespace twostep {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::int64_t SystemClock::now() const {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

CivilTime civil_from_epoch(std::int64_t epoch_seconds, int tz_offset_minutes) {
  using namespace std::chrono;
  const std::int64_t local = epoch_seconds + std::int64_t{tz_offset_minutes} * 60;
  const std::int64_t day_count = floor_div(local, 86400);
  const std::int64_t seconds_of_day = local - day_count * 86400;
  const year_month_day ymd{sys_days{days{day_count}}};
  CivilTime out;
  out.year = static_cast<int>(ymd.year());
  out.month = static_cast<unsigned>(ymd.month());
  out.day = static_cast<unsigned>(ymd.day());
  out.hour = static_cast<unsigned>(seconds_of_day / 3600);
  out.minute = static_cast<unsigned>((seconds_of_day % 3600) / 60);
  return out;
}

std::int64_t epoch_from_civil(const CivilTime& civil, int tz_offset_minutes) {
  using namespace std::chrono;
  const sys_days dp = year{civil.year} / month{civil.month} / day{civil.day};
  return std::int64_t{dp.time_since_epoch().count()} * 86400 +
         std::int64_t{civil.hour} * 3600 + std::int64_t{civil.minute} * 60 -
         std::int64_t{tz_offset_minutes} * 60;
}

int day_of_week(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const weekday wd{sys_days{std::chrono::year{year} / std::chrono::month{month} /
                            std::chrono::day{day}}};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

bool civil_date_valid(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  return (std::chrono::year{year} / std::chrono::month{month} /
          std::chrono::day{day})
      .ok();
}

std::optional<CivilTime> parse_civil(std::string_view text) {
  CivilTime out;
  char sep = 0;
  int consumed = 0;
  const std::string buf(text);
  if (std::sscanf(buf.c_str(), "%d-%u-%u%c%u:%u%n", &out.year, &out.month,
                  &out.day, &sep, &out.hour, &out.minute, &consumed) != 6) {
    return std::nullopt;
  }
  if (static_cast<std::size_t>(consumed) != buf.size()) return std::nullopt;
  if (sep != ' ' && sep != 'T') return std::nullopt;
  if (!civil_date_valid(out.year, out.month, out.day)) return std::nullopt;
  if (out.hour > 23 || out.minute > 59) return std::nullopt;
  return out;
}

}  // namespace twostep
