#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace kdfe {

/// Calendar date at day granularity, stored as days since 1970-01-01.
class Date {
  public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_{days_since_epoch} {}

    static Date from_ymd(int year, unsigned month, unsigned day);

    /// Parses YYYY-MM-DD; throws ValueError on anything else.
    static Date parse(std::string_view text);

    std::string iso() const;
    constexpr std::int32_t days() const noexcept { return days_; }

    constexpr Date operator+(std::int32_t n) const noexcept { return Date{days_ + n}; }
    constexpr Date operator-(std::int32_t n) const noexcept { return Date{days_ - n}; }
    constexpr std::int32_t operator-(Date other) const noexcept { return days_ - other.days_; }

    constexpr auto operator<=>(const Date &) const = default;

  private:
    std::int32_t days_{0};
};

} // namespace kdfe
