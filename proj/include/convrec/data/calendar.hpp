#pragma once

#include <array>
#include <chrono>
#include <cstdint>

#include "convrec/error.hpp"

namespace convrec::data {

struct CalendarDate {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  unsigned hour = 0;
  unsigned weekday = 4;  // 0 = Sunday; the epoch was a Thursday

  std::array<int, 3> ymd() const {
    return {year, static_cast<int>(month), static_cast<int>(day)};
  }
};

// Proleptic-Gregorian UTC calendar fields of a unix timestamp.
inline CalendarDate decompose_timestamp(std::int64_t timestamp) {
  if (timestamp < 0) throw DataError("negative timestamp " + std::to_string(timestamp));
  using namespace std::chrono;
  const sys_seconds instant{seconds{timestamp}};
  const sys_days day = floor<days>(instant);
  const year_month_day ymd{day};
  const auto since_midnight = duration_cast<hours>(instant - day);
  return CalendarDate{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()), static_cast<unsigned>(since_midnight.count()),
                      weekday{day}.c_encoding()};
}

}  // namespace convrec::data
