#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "flowcast/array.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/series.hpp"

namespace testsupport {

// Synthetic hourly traffic: daily and weekly sinusoids over a base level,
// multiplicative holiday dips and additive Gaussian noise. Holidays mix fixed
// dates with dates that move between years, so the holiday flag carries
// information day-of-year cannot.
struct SyntheticSpec {
    flowcast::CivilTime start = flowcast::make_time(2017, 1, 1);
    int days = 3 * 365;
    double base = 400.0;
    double daily_amp = 150.0;
    double weekly_amp = 80.0;
    double holiday_factor = 0.45;
    double noise_frac = 0.05;  // std of additive noise as a fraction of base
    int moving_holidays_per_year = 8;
    std::uint64_t seed = 2017;
};

struct SyntheticData {
    flowcast::FlowSeries series;
    flowcast::HolidayCalendar calendar;
    std::vector<flowcast::CivilTime> holidays;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    using namespace flowcast;
    SyntheticData out;
    out.series = FlowSeries(spec.start, 60, DatasetProfile::freeway);

    Rng holiday_rng(spec.seed);
    int first_year = fields_of(spec.start).year;
    int last_year = fields_of(add_minutes(spec.start, (spec.days - 1) * kMinutesPerDay)).year;
    for (int year = first_year; year <= last_year; ++year) {
        std::set<int> taken;
        auto add_day = [&](CivilTime d) {
            out.calendar.add(d);
            out.holidays.push_back(d);
        };
        add_day(make_time(year, 1, 1));
        add_day(make_time(year, 12, 25));
        add_day(make_time(year, 12, 26));
        taken = {1, day_of_year(make_time(year, 12, 25)), day_of_year(make_time(year, 12, 26))};
        while (static_cast<int>(taken.size()) < spec.moving_holidays_per_year + 3) {
            int doy = 32 + static_cast<int>(holiday_rng.uniform_int(300));
            if (!taken.insert(doy).second) continue;
            add_day(add_minutes(make_time(year, 1, 1), static_cast<Minutes>(doy - 1) * kMinutesPerDay));
        }
    }

    Rng noise(spec.seed ^ 0xabcdef12345ull);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int h = 0; h < spec.days * 24; ++h) {
        CivilTime t = add_minutes(spec.start, static_cast<Minutes>(h) * 60);
        double hour = static_cast<double>(h);
        double level = spec.base + spec.daily_amp * std::sin(two_pi * hour / 24.0) +
                       spec.weekly_amp * std::sin(two_pi * hour / 168.0);
        if (out.calendar.contains(t)) level *= spec.holiday_factor;
        double value = level + noise.normal() * spec.noise_frac * spec.base;
        out.series.push_back(std::max(value, 0.0));
    }
    return out;
}

}  // namespace testsupport
