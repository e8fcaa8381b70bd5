#include "chronovec/period.hpp"

#include <charconv>
#include <cstdio>

#include "chronovec/error.hpp"

namespace chronovec {

std::string_view period_kind_name(PeriodKind kind) {
  switch (kind) {
    case PeriodKind::Year: return "year";
    case PeriodKind::Month: return "month";
    case PeriodKind::Index: return "index";
  }
  return "?";
}

PeriodKind parse_period_kind(std::string_view name) {
  if (name == "year") return PeriodKind::Year;
  if (name == "month") return PeriodKind::Month;
  if (name == "index") return PeriodKind::Index;
  throw Error("unknown period kind \"" + std::string(name) + "\"");
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error("malformed period \"" + std::string(whole) + "\"");
  }
  return v;
}

// Floor division so negative month ordinals still map to month 1..12.
std::int64_t floor_div12(std::int64_t x) { return x >= 0 ? x / 12 : -((-x + 11) / 12); }

}  // namespace

std::string format_period(const TimePeriod& p) {
  if (p.kind == PeriodKind::Month) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "month:%lld-%02d", static_cast<long long>(floor_div12(p.ordinal)),
                  p.month_of_year() + 1);
    return buf;
  }
  return std::string(period_kind_name(p.kind)) + ":" + std::to_string(p.ordinal);
}

TimePeriod parse_period(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error("malformed period \"" + std::string(text) + "\" (expected kind:value)");
  }
  const PeriodKind kind = parse_period_kind(text.substr(0, colon));
  const std::string_view value = text.substr(colon + 1);
  if (kind != PeriodKind::Month) return {kind, parse_int(value, text)};

  const auto dash = value.rfind('-');
  if (dash == std::string_view::npos || dash == 0) {
    throw Error("malformed period \"" + std::string(text) + "\" (expected month:YYYY-MM)");
  }
  const auto year = parse_int(value.substr(0, dash), text);
  const auto month = parse_int(value.substr(dash + 1), text);
  if (month < 1 || month > 12) throw Error("month out of range in \"" + std::string(text) + "\"");
  return TimePeriod::month(year, static_cast<int>(month));
}

std::string period_slug(const TimePeriod& p) {
  std::string s = format_period(p);
  for (auto& c : s) {
    if (c == ':') c = '-';
  }
  return s;
}

}  // namespace chronovec
