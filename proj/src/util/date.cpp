#include "kdfe/date.hpp"

#include "kdfe/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace kdfe {

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    using namespace std::chrono;
    year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) {
        throw ValueError("invalid calendar date " + std::to_string(year) + "-" +
                         std::to_string(month) + "-" + std::to_string(day));
    }
    return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

Date Date::parse(std::string_view text) {
    auto bad = [&] { return ValueError("unparseable date '" + std::string{text} + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw bad();
    }
    auto field = [&](std::size_t pos, std::size_t len) {
        int value = 0;
        auto first = text.data() + pos;
        auto [ptr, ec] = std::from_chars(first, first + len, value);
        if (ec != std::errc{} || ptr != first + len) {
            throw bad();
        }
        return value;
    };
    int y = field(0, 4);
    int m = field(5, 2);
    int d = field(8, 2);
    if (m < 1 || m > 12 || d < 1 || d > 31) {
        throw bad();
    }
    try {
        return from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    } catch (const ValueError &) {
        throw bad();
    }
}

std::string Date::iso() const {
    using namespace std::chrono;
    year_month_day ymd{sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

} // namespace kdfe
