#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "flowcast/time.hpp"

namespace flowcast {

class HolidayCalendar {
public:
    void add(CivilTime date) { days_.insert(date_index(date)); }
    bool contains(CivilTime t) const { return days_.count(date_index(t)) > 0; }
    size_t size() const { return days_.size(); }

private:
    std::set<std::int64_t> days_;
};

// One ISO date per line, '#' comments and blank lines ignored.
inline HolidayCalendar load_holiday_calendar(const std::string& path,
                                             std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open holiday file: " + path);
    HolidayCalendar cal;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        std::string token = line.substr(first);
        CivilTime d;
        try {
            d = parse_date(token);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": " + e.what() + " at line " + std::to_string(line_no));
        }
        size_t before = cal.size();
        cal.add(d);
        if (cal.size() == before && warnings)
            warnings->push_back(path + ": duplicate holiday " + token + " at line " +
                                std::to_string(line_no));
    }
    return cal;
}

// The seven calendar features embedded into every model. Ranges follow the
// Gregorian calendar; day_of_week uses Monday = 0 and quarter is ceil(month/3).
struct TimeFeatureVector {
    int day_of_week;   // 0-6
    int quarter;       // 1-4
    int month;         // 1-12
    int day_of_month;  // 1-31
    int hour_of_day;   // 0-23
    int day_of_year;   // 1-366
    int is_holiday;    // 0 or 1

    static constexpr int kCount = 7;
    // Vocabulary sizes of the categorical encoding, in field order.
    static constexpr int kVocab[kCount] = {7, 4, 12, 31, 24, 366, 2};

    // Zero-based index of feature k into its vocabulary.
    int vocab_index(int k) const {
        switch (k) {
            case 0: return day_of_week;
            case 1: return quarter - 1;
            case 2: return month - 1;
            case 3: return day_of_month - 1;
            case 4: return hour_of_day;
            case 5: return day_of_year - 1;
            case 6: return is_holiday;
        }
        throw std::runtime_error("time feature index out of range");
    }

    double feature(int k) const {
        switch (k) {
            case 0: return day_of_week;
            case 1: return quarter;
            case 2: return month;
            case 3: return day_of_month;
            case 4: return hour_of_day;
            case 5: return day_of_year;
            case 6: return is_holiday;
        }
        throw std::runtime_error("time feature index out of range");
    }

    static const char* name(int k) {
        static const char* names[kCount] = {"day_of_week", "quarter",     "month",
                                            "day_of_month", "hour_of_day", "day_of_year",
                                            "is_holiday"};
        return names[k];
    }
};

inline TimeFeatureVector extract_time_features(CivilTime t, const HolidayCalendar& cal) {
    CivilFields f = fields_of(t);
    TimeFeatureVector v{};
    v.day_of_week = day_of_week(t);
    v.quarter = (f.month + 2) / 3;
    v.month = f.month;
    v.day_of_month = f.day;
    v.hour_of_day = f.hour;
    v.day_of_year = day_of_year(t);
    v.is_holiday = cal.contains(t) ? 1 : 0;
    return v;
}

}  // namespace flowcast
