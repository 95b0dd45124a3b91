#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "flowcast/array.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/time.hpp"

using namespace flowcast;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = std::string("/tmp/flowcast_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("civil time round trips through fields") {
    CivilTime t = make_time(2019, 7, 4, 8, 30);
    CivilFields f = fields_of(t);
    CHECK(f.year == 2019);
    CHECK(f.month == 7);
    CHECK(f.day == 4);
    CHECK(f.hour == 8);
    CHECK(f.minute == 30);
    CHECK(format_timestamp(t) == "2019-07-04T08:30");
    CHECK(parse_timestamp("2019-07-04T08:30") == t);
    CHECK(parse_date("2019-07-04") == make_time(2019, 7, 4));
}

TEST_CASE("timestamp parsing rejects malformed input") {
    CHECK_THROWS(parse_timestamp("2019-07-04 08:30"));
    CHECK_THROWS(parse_timestamp("2019-13-01T00:00"));
    CHECK_THROWS(parse_timestamp("2019-02-29T00:00"));  // not a leap year
    CHECK_THROWS(parse_date("04/07/2019"));
    CHECK_NOTHROW(parse_timestamp("2020-02-29T00:00"));
}

TEST_CASE("day of week uses Monday = 0") {
    CHECK(day_of_week(make_time(2019, 1, 1)) == 1);   // Tuesday
    CHECK(day_of_week(make_time(2017, 1, 1)) == 6);   // Sunday
    CHECK(day_of_week(make_time(1970, 1, 1)) == 3);   // Thursday
    CHECK(day_of_week(make_time(2019, 7, 4, 23)) == 3);
}

TEST_CASE("day of year counts leap days") {
    CHECK(day_of_year(make_time(2019, 1, 1)) == 1);
    CHECK(day_of_year(make_time(2019, 12, 31)) == 365);
    CHECK(day_of_year(make_time(2020, 12, 31)) == 366);
    CHECK(day_of_year(make_time(2020, 3, 1)) == 61);
}

TEST_CASE("holiday calendar loads ISO dates with comments") {
    auto path = write_temp("holidays.txt",
                           "# national holidays\n"
                           "2019-12-25\n"
                           "2019-12-26  # boxing day\n"
                           "\n");
    HolidayCalendar cal = load_holiday_calendar(path);
    CHECK(cal.size() == 2);
    CHECK(cal.contains(make_time(2019, 12, 25, 15, 30)));
    CHECK_FALSE(cal.contains(make_time(2019, 12, 27)));
    std::remove(path.c_str());
}

TEST_CASE("holiday calendar edge cases") {
    SECTION("empty file gives empty calendar") {
        auto path = write_temp("holidays_empty.txt", "");
        HolidayCalendar cal = load_holiday_calendar(path);
        CHECK(cal.size() == 0);
        CHECK_FALSE(cal.contains(make_time(2019, 1, 1)));
        std::remove(path.c_str());
    }
    SECTION("duplicate dates deduplicate with a warning") {
        auto path = write_temp("holidays_dup.txt", "2019-12-25\n2019-12-25\n");
        std::vector<std::string> warnings;
        HolidayCalendar cal = load_holiday_calendar(path, &warnings);
        CHECK(cal.size() == 1);
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("duplicate") != std::string::npos);
        std::remove(path.c_str());
    }
    SECTION("malformed date reports the line") {
        auto path = write_temp("holidays_bad.txt", "2019-12-25\nnot-a-date\n");
        CHECK_THROWS_WITH(load_holiday_calendar(path), Catch::Matchers::ContainsSubstring("line 2"));
        std::remove(path.c_str());
    }
}

TEST_CASE("time features match the standard calendar") {
    HolidayCalendar cal;
    cal.add(parse_date("2019-01-01"));

    TimeFeatureVector f = extract_time_features(make_time(2019, 1, 1, 0, 0), cal);
    CHECK(f.day_of_week == 1);
    CHECK(f.quarter == 1);
    CHECK(f.month == 1);
    CHECK(f.day_of_month == 1);
    CHECK(f.hour_of_day == 0);
    CHECK(f.day_of_year == 1);
    CHECK(f.is_holiday == 1);
}

TEST_CASE("holiday flag follows the supplied calendar") {
    HolidayCalendar us;
    us.add(parse_date("2019-07-04"));
    CHECK(extract_time_features(make_time(2019, 7, 4, 8), us).is_holiday == 1);

    HolidayCalendar victoria;
    victoria.add(parse_date("2019-12-25"));
    victoria.add(parse_date("2019-12-26"));
    CHECK(extract_time_features(make_time(2019, 12, 27, 8), victoria).is_holiday == 0);
    CHECK(extract_time_features(make_time(2019, 12, 26, 8), victoria).is_holiday == 1);
}

TEST_CASE("consecutive hours differ only in hour except across midnight") {
    HolidayCalendar cal;
    CivilTime t = make_time(2019, 3, 14, 4);
    for (int i = 0; i < 19; ++i) {
        TimeFeatureVector a = extract_time_features(t, cal);
        TimeFeatureVector b = extract_time_features(add_minutes(t, 60), cal);
        CHECK(b.hour_of_day == a.hour_of_day + 1);
        CHECK(b.day_of_week == a.day_of_week);
        CHECK(b.day_of_year == a.day_of_year);
        t = add_minutes(t, 60);
    }
}

TEST_CASE("feature ranges hold for random instants") {
    HolidayCalendar cal;
    cal.add(parse_date("2018-12-25"));
    Rng rng(2024);
    CivilTime lo = make_time(2000, 1, 1);
    CivilTime hi = make_time(2040, 1, 1);
    for (int i = 0; i < 100000; ++i) {
        CivilTime t{lo.minutes +
                    static_cast<Minutes>(rng.uniform_int(static_cast<std::uint64_t>(hi.minutes - lo.minutes)))};
        TimeFeatureVector f = extract_time_features(t, cal);
        REQUIRE(f.day_of_week >= 0);
        REQUIRE(f.day_of_week <= 6);
        REQUIRE(f.quarter >= 1);
        REQUIRE(f.quarter <= 4);
        REQUIRE(f.month >= 1);
        REQUIRE(f.month <= 12);
        REQUIRE(f.day_of_month >= 1);
        REQUIRE(f.day_of_month <= 31);
        REQUIRE(f.hour_of_day >= 0);
        REQUIRE(f.hour_of_day <= 23);
        REQUIRE(f.day_of_year >= 1);
        REQUIRE(f.day_of_year <= 366);
        REQUIRE((f.is_holiday == 0 || f.is_holiday == 1));
        for (int k = 0; k < TimeFeatureVector::kCount; ++k) {
            REQUIRE(f.vocab_index(k) >= 0);
            REQUIRE(f.vocab_index(k) < TimeFeatureVector::kVocab[k]);
        }
    }
}
