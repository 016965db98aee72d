#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace forumstrat {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

namespace detail {

inline bool parse_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Parses an RFC 3339 timestamp ("2018-06-30T23:59:59Z",
/// "2018-06-30T23:59:59.25+02:00"). Fractional digits beyond microseconds
/// are truncated. Returns nullopt on any syntax or range error.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  int y, mo, d, h, mi, sec;
  if (!detail::parse_digits(s, 0, 4, y) || s.size() < 19 || s[4] != '-' ||
      !detail::parse_digits(s, 5, 2, mo) || s[7] != '-' ||
      !detail::parse_digits(s, 8, 2, d) ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
      !detail::parse_digits(s, 11, 2, h) || s[13] != ':' ||
      !detail::parse_digits(s, 14, 2, mi) || s[16] != ':' ||
      !detail::parse_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;

  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 6) micros = micros * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 6; ++i) micros *= 10;
  }
  if (pos >= s.size()) return std::nullopt;

  std::int64_t offset_minutes = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '-' ? -1 : 1;
    int oh, om;
    if (!detail::parse_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() ||
        s[pos + 3] != ':' || !detail::parse_digits(s, pos + 4, 2, om) || oh > 23 ||
        om > 59) {
      return std::nullopt;
    }
    offset_minutes = sign * (oh * 60 + om);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} +
                  microseconds{micros} - minutes{offset_minutes};
  return time_point_cast<microseconds>(tp);
}

/// Formats as UTC RFC 3339; fractional seconds only when non-zero.
inline std::string format_rfc3339(Timestamp t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  auto rem = t - day_point;
  const auto h = duration_cast<hours>(rem);
  rem -= h;
  const auto mi = duration_cast<minutes>(rem);
  rem -= mi;
  const auto sec = duration_cast<seconds>(rem);
  rem -= sec;
  char buf[48];
  const long long us = rem.count();
  if (us == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02lldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                  static_cast<int>(mi.count()), static_cast<long long>(sec.count()));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02lld.%06lldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                  static_cast<int>(mi.count()), static_cast<long long>(sec.count()), us);
  }
  return buf;
}

}  // namespace forumstrat
