#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace chronovec {

enum class PeriodKind { Year, Month, Index };

// A point on the time axis. Months are encoded as year*12 + (month - 1) so
// that ordinal differences measure misalignment in the period's own unit.
struct TimePeriod {
  PeriodKind kind = PeriodKind::Index;
  std::int64_t ordinal = 0;

  static TimePeriod year(std::int64_t y) { return {PeriodKind::Year, y}; }
  static TimePeriod month(std::int64_t y, int m) { return {PeriodKind::Month, y * 12 + (m - 1)}; }
  static TimePeriod index(std::int64_t i) { return {PeriodKind::Index, i}; }

  // 0..11, only meaningful for months.
  int month_of_year() const { return static_cast<int>(((ordinal % 12) + 12) % 12); }

  friend auto operator<=>(const TimePeriod&, const TimePeriod&) = default;
};

std::string_view period_kind_name(PeriodKind kind);
PeriodKind parse_period_kind(std::string_view name);

// "year:2015", "month:2015-03", "index:7"
std::string format_period(const TimePeriod& p);
TimePeriod parse_period(std::string_view text);

// File-name friendly label: "year-2015", "month-2015-03", "index-7".
std::string period_slug(const TimePeriod& p);

}  // namespace chronovec
