#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace sleepgraph {

/// Proleptic Gregorian calendar day.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  /// Days since 1970-01-01.
  long to_days() const noexcept;
  static Date from_days(long days) noexcept;

  Date plus_days(long n) const noexcept { return from_days(to_days() + n); }

  /// "YYYY-MM-DD".
  std::string iso() const;

  /// Strict "YYYY-MM-DD" parse; nullopt on bad shape or invalid calendar day.
  static std::optional<Date> parse_iso(std::string_view text);
};

bool is_valid_date(int year, int month, int day) noexcept;

/// 1-based month from an English month name or 3/4-letter abbreviation
/// ("jan", "sept"), case-insensitive.
std::optional<int> month_from_name(std::string_view name);

}  // namespace sleepgraph
