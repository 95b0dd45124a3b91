#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flowcast {

// Naive local calendar time at minute resolution. DST transitions are not
// modelled; a series is just a regular grid of instants.
struct CivilTime {
    std::int64_t minutes = 0;  // minutes since 1970-01-01T00:00

    friend auto operator<=>(const CivilTime&, const CivilTime&) = default;
};

using Minutes = std::int64_t;

constexpr Minutes kMinutesPerHour = 60;
constexpr Minutes kMinutesPerDay = 24 * 60;
constexpr Minutes kMinutesPerWeek = 7 * kMinutesPerDay;

struct CivilFields {
    int year;
    int month;   // 1-12
    int day;     // 1-31
    int hour;    // 0-23
    int minute;  // 0-59
};

namespace detail {

// Howard Hinnant's days-from-civil algorithm.
constexpr std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

constexpr std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
    return a - floor_div(a, b) * b;
}

inline int parse_fixed_int(std::string_view s, size_t pos, size_t len) {
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9')
            throw std::runtime_error("malformed timestamp: '" + std::string(s) + "'");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

}  // namespace detail

constexpr bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline CivilTime make_time(int year, int month, int day, int hour = 0, int minute = 0) {
    static constexpr int dim[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12)
        throw std::runtime_error("month out of range: " + std::to_string(month));
    int max_day = dim[month - 1] + (month == 2 && is_leap_year(year) ? 1 : 0);
    if (day < 1 || day > max_day)
        throw std::runtime_error("day out of range: " + std::to_string(day));
    if (hour < 0 || hour > 23 || minute < 0 || minute > 59)
        throw std::runtime_error("time of day out of range");
    return CivilTime{detail::days_from_civil(year, month, day) * kMinutesPerDay +
                     hour * kMinutesPerHour + minute};
}

inline CivilFields fields_of(CivilTime t) {
    const std::int64_t days = detail::floor_div(t.minutes, kMinutesPerDay);
    const std::int64_t in_day = detail::floor_mod(t.minutes, kMinutesPerDay);
    CivilFields f{};
    detail::civil_from_days(days, f.year, f.month, f.day);
    f.hour = static_cast<int>(in_day / 60);
    f.minute = static_cast<int>(in_day % 60);
    return f;
}

inline CivilTime add_minutes(CivilTime t, Minutes m) { return CivilTime{t.minutes + m}; }

// Monday = 0 ... Sunday = 6. 1970-01-01 was a Thursday.
inline int day_of_week(CivilTime t) {
    const std::int64_t days = detail::floor_div(t.minutes, kMinutesPerDay);
    return static_cast<int>(detail::floor_mod(days + 3, 7));
}

inline int day_of_year(CivilTime t) {
    CivilFields f = fields_of(t);
    return static_cast<int>(detail::days_from_civil(f.year, f.month, f.day) -
                            detail::days_from_civil(f.year, 1, 1)) + 1;
}

// Calendar date as days since epoch; holiday lookups are day-granular.
inline std::int64_t date_index(CivilTime t) {
    return detail::floor_div(t.minutes, kMinutesPerDay);
}

// "YYYY-MM-DDTHH:MM"
inline CivilTime parse_timestamp(std::string_view s) {
    if (s.size() != 16 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':')
        throw std::runtime_error("malformed timestamp: '" + std::string(s) + "'");
    int y = detail::parse_fixed_int(s, 0, 4);
    int mo = detail::parse_fixed_int(s, 5, 2);
    int d = detail::parse_fixed_int(s, 8, 2);
    int h = detail::parse_fixed_int(s, 11, 2);
    int mi = detail::parse_fixed_int(s, 14, 2);
    return make_time(y, mo, d, h, mi);
}

// "YYYY-MM-DD", midnight
inline CivilTime parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw std::runtime_error("malformed date: '" + std::string(s) + "'");
    int y = detail::parse_fixed_int(s, 0, 4);
    int mo = detail::parse_fixed_int(s, 5, 2);
    int d = detail::parse_fixed_int(s, 8, 2);
    return make_time(y, mo, d);
}

inline std::string format_timestamp(CivilTime t) {
    CivilFields f = fields_of(t);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", f.year, f.month, f.day,
                  f.hour, f.minute);
    return buf;
}

inline std::string format_date(CivilTime t) {
    CivilFields f = fields_of(t);
    char buf[12];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", f.year, f.month, f.day);
    return buf;
}

}  // namespace flowcast
