#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/time.hpp"

namespace flowcast {

// Which raw values count as defects to impute.
//   melbourne: negative, zero and absent values
//   freeway:   absent values (negatives are outside any flow's valid set and
//              are treated as defects as well, so records stay non-negative)
enum class DatasetProfile { melbourne, freeway };

inline DatasetProfile parse_profile(std::string_view s) {
    if (s == "melbourne") return DatasetProfile::melbourne;
    if (s == "freeway") return DatasetProfile::freeway;
    throw std::runtime_error("unknown dataset profile: '" + std::string(s) + "'");
}

struct FlowRecord {
    CivilTime timestamp;
    std::optional<double> flow;  // vehicles per interval, non-negative
    bool imputed = false;
};

// Regular, gap-free grid of flow observations. Missing values are held as NaN
// until imputation; after imputation a series has no missing values.
class FlowSeries {
public:
    FlowSeries() = default;
    FlowSeries(CivilTime start, Minutes interval, DatasetProfile profile)
        : start_(start), interval_(interval), profile_(profile) {}

    void push_back(double value_or_nan, bool imputed = false) {
        values_.push_back(value_or_nan);
        imputed_.push_back(imputed ? 1 : 0);
    }

    size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    CivilTime start() const { return start_; }
    Minutes interval() const { return interval_; }
    DatasetProfile profile() const { return profile_; }
    CivilTime timestamp(size_t i) const {
        return add_minutes(start_, static_cast<Minutes>(i) * interval_);
    }
    CivilTime end() const { return timestamp(size()); }  // one past the last record

    double value(size_t i) const { return values_[i]; }
    bool is_missing(size_t i) const { return std::isnan(values_[i]); }
    bool is_imputed(size_t i) const { return imputed_[i] != 0; }
    void set(size_t i, double v, bool imputed) {
        values_[i] = v;
        imputed_[i] = imputed ? 1 : 0;
    }

    FlowRecord record(size_t i) const {
        FlowRecord r;
        r.timestamp = timestamp(i);
        if (!is_missing(i)) r.flow = values_[i];
        r.imputed = is_imputed(i);
        return r;
    }

    std::span<const double> values() const { return values_; }

    size_t missing_count() const {
        size_t n = 0;
        for (double v : values_)
            if (std::isnan(v)) ++n;
        return n;
    }

    // Index of the first record at or after t.
    size_t lower_bound(CivilTime t) const {
        if (t.minutes <= start_.minutes) return 0;
        std::int64_t steps = (t.minutes - start_.minutes + interval_ - 1) / interval_;
        if (steps > static_cast<std::int64_t>(size())) return size();
        return static_cast<size_t>(steps);
    }

private:
    CivilTime start_{};
    Minutes interval_ = 60;
    DatasetProfile profile_ = DatasetProfile::melbourne;
    std::vector<double> values_;
    std::vector<std::uint8_t> imputed_;
};

namespace detail {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline bool defect_value(double v, DatasetProfile profile) {
    if (profile == DatasetProfile::melbourne) return v <= 0.0;
    return v < 0.0;
}

}  // namespace detail

// Reads `timestamp,flow` CSV into a FlowSeries. The grid step is taken from
// the first two rows; out-of-order, duplicated or gapped timestamps are hard
// errors naming the offending line.
inline FlowSeries parse_flow_csv(const std::string& path, DatasetProfile profile) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open flow csv: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    if (detail::strip_cr(line) != "timestamp,flow")
        throw std::runtime_error(path + ": expected header 'timestamp,flow'");

    std::vector<CivilTime> stamps;
    std::vector<double> raw;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": missing comma at line " + std::to_string(line_no));
        CivilTime t;
        try {
            t = parse_timestamp(line.substr(0, comma));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": " + e.what() + " at line " + std::to_string(line_no));
        }
        if (!stamps.empty()) {
            if (t.minutes == stamps.back().minutes)
                throw std::runtime_error(path + ": duplicate timestamp at line " + std::to_string(line_no));
            if (t.minutes < stamps.back().minutes)
                throw std::runtime_error(path + ": out-of-order at line " + std::to_string(line_no));
        }
        std::string field = line.substr(comma + 1);
        double v = detail::kMissing;
        if (!field.empty()) {
            size_t used = 0;
            try {
                v = std::stod(field, &used);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ": unparseable flow at line " + std::to_string(line_no));
            }
            if (used != field.size() || !std::isfinite(v))
                throw std::runtime_error(path + ": unparseable flow at line " + std::to_string(line_no));
            if (detail::defect_value(v, profile)) v = detail::kMissing;
        }
        stamps.push_back(t);
        raw.push_back(v);
    }
    if (stamps.empty()) throw std::runtime_error(path + ": no data rows");

    Minutes interval = stamps.size() > 1 ? stamps[1].minutes - stamps[0].minutes : 60;
    FlowSeries series(stamps[0], interval, profile);
    for (size_t i = 0; i < stamps.size(); ++i) {
        if (stamps[i].minutes != stamps[0].minutes + static_cast<Minutes>(i) * interval)
            throw std::runtime_error(path + ": timestamp gap at line " + std::to_string(i + 2));
        series.push_back(raw[i]);
    }
    return series;
}

// Replaces each missing value with the value from the same period one week
// earlier. Gaps in the first week fall back to the value one week later;
// donors that are themselves defective are skipped in whole-week strides.
inline FlowSeries impute_same_period_last_week(const FlowSeries& series,
                                               double max_missing_frac = 0.05) {
    if (series.empty()) throw std::runtime_error("impute: empty series");
    const size_t n = series.size();
    const size_t missing = series.missing_count();
    if (missing == 0) return series;
    if (static_cast<double>(missing) / static_cast<double>(n) > max_missing_frac) {
        std::ostringstream msg;
        msg << "impute: missing fraction " << (static_cast<double>(missing) / n)
            << " exceeds threshold " << max_missing_frac;
        throw std::runtime_error(msg.str());
    }
    if (kMinutesPerWeek % series.interval() != 0)
        throw std::runtime_error("impute: interval does not divide one week");
    const std::int64_t week = kMinutesPerWeek / series.interval();

    std::vector<bool> originally_missing(n);
    for (size_t i = 0; i < n; ++i) originally_missing[i] = series.is_missing(i);

    FlowSeries out = series;
    for (size_t i = 0; i < n; ++i) {
        if (!originally_missing[i]) continue;
        const std::int64_t back = static_cast<std::int64_t>(i) - week;
        if (back >= 0 && !out.is_missing(static_cast<size_t>(back))) {
            // already resolved by the ascending pass, so a chain of weekly
            // gaps fills forward in time
            out.set(i, out.value(static_cast<size_t>(back)), true);
            continue;
        }
        bool done = false;
        for (std::int64_t fwd = static_cast<std::int64_t>(i) + week;
             fwd < static_cast<std::int64_t>(n); fwd += week) {
            if (!originally_missing[static_cast<size_t>(fwd)]) {
                out.set(i, series.value(static_cast<size_t>(fwd)), true);
                done = true;
                break;
            }
        }
        if (!done)
            throw std::runtime_error("impute: no weekly donor for " +
                                     format_timestamp(series.timestamp(i)));
    }
    return out;
}

// Sums groups of consecutive values into a coarser grid (flow is a count).
// A partial trailing bucket is dropped with a warning.
inline FlowSeries aggregate(const FlowSeries& series, Minutes target_interval,
                            std::vector<std::string>* warnings = nullptr) {
    if (target_interval == series.interval()) return series;
    if (target_interval <= 0 || target_interval % series.interval() != 0)
        throw std::runtime_error("aggregate: target interval must be a positive multiple of the source interval");
    if (detail::floor_mod(series.start().minutes, target_interval) != 0)
        throw std::runtime_error("aggregate: series start " + format_timestamp(series.start()) +
                                 " is not aligned to the target interval");
    const size_t ratio = static_cast<size_t>(target_interval / series.interval());
    const size_t buckets = series.size() / ratio;
    if (series.size() % ratio != 0 && warnings)
        warnings->push_back("aggregate: dropped partial trailing bucket of " +
                            std::to_string(series.size() % ratio) + " records");

    FlowSeries out(series.start(), target_interval, series.profile());
    for (size_t b = 0; b < buckets; ++b) {
        double sum = 0.0;
        bool any_missing = false, any_imputed = false;
        for (size_t k = 0; k < ratio; ++k) {
            size_t i = b * ratio + k;
            if (series.is_missing(i)) any_missing = true;
            else sum += series.value(i);
            if (series.is_imputed(i)) any_imputed = true;
        }
        out.push_back(any_missing ? detail::kMissing : sum, any_imputed);
    }
    return out;
}

// Half-open chronological ranges for the train/val/test protocol.
struct SplitSpec {
    CivilTime train_begin, train_end;
    CivilTime val_begin, val_end;
    CivilTime test_begin, test_end;

    void validate() const {
        if (!(train_begin < train_end && val_begin < val_end && test_begin < test_end))
            throw std::runtime_error("split: each range must be non-empty");
        if (!(train_end <= val_begin && val_end <= test_begin))
            throw std::runtime_error("split: ranges must be ordered train < val < test");
    }
};

struct SplitSeries {
    FlowSeries train, val, test;
};

inline FlowSeries slice_range(const FlowSeries& series, CivilTime begin, CivilTime end) {
    size_t lo = series.lower_bound(begin);
    size_t hi = series.lower_bound(end);
    if (lo >= hi) throw std::runtime_error("split: empty range starting " + format_timestamp(begin));
    FlowSeries out(series.timestamp(lo), series.interval(), series.profile());
    for (size_t i = lo; i < hi; ++i) out.push_back(series.value(i), series.is_imputed(i));
    return out;
}

inline SplitSeries split(const FlowSeries& series, const SplitSpec& spec) {
    spec.validate();
    if (spec.train_begin < series.start() || series.end() < spec.test_end)
        throw std::runtime_error("split: spec extends outside the series span");
    return SplitSeries{slice_range(series, spec.train_begin, spec.train_end),
                       slice_range(series, spec.val_begin, spec.val_end),
                       slice_range(series, spec.test_begin, spec.test_end)};
}

// z-score transform with population statistics from the training range.
struct Standardizer {
    double mean = 0.0;
    double std = 1.0;

    double apply(double x) const { return (x - mean) / std; }
    double invert(double z) const { return z * std + mean; }

    static Standardizer fit(std::span<const double> train) {
        if (train.empty()) throw std::runtime_error("standardizer: empty training data");
        double m = 0.0;
        for (double v : train) m += v;
        m /= static_cast<double>(train.size());
        double var = 0.0;
        for (double v : train) var += (v - m) * (v - m);
        var /= static_cast<double>(train.size());
        double sd = std::sqrt(var);
        if (!(sd > 1e-9)) throw std::runtime_error("standardizer: degenerate series (std ~ 0)");
        return Standardizer{m, sd};
    }
};

// A timestamped view over contiguous values; lets windowing run over raw or
// standardized data alike.
struct SeriesView {
    CivilTime start;
    Minutes interval;
    std::span<const double> values;

    size_t size() const { return values.size(); }
    CivilTime timestamp(size_t i) const {
        return add_minutes(start, static_cast<Minutes>(i) * interval);
    }
};

inline SeriesView view_of(const FlowSeries& s) {
    return SeriesView{s.start(), s.interval(), s.values()};
}

struct Window {
    std::span<const double> input;   // T values
    std::span<const double> target;  // T_p values
    CivilTime input_start;
    CivilTime target_start;  // exactly one interval after the last input stamp
    Minutes interval;

    CivilTime input_stamp(size_t i) const {
        return add_minutes(input_start, static_cast<Minutes>(i) * interval);
    }
    CivilTime target_stamp(size_t i) const {
        return add_minutes(target_start, static_cast<Minutes>(i) * interval);
    }
};

// Stride-1 rolling windows: window i covers [i, i+T) as input and
// [i+T, i+T+T_p) as target. Count is N - T - T_p + 1.
class RollingWindows {
public:
    RollingWindows(SeriesView view, size_t input_len, size_t horizon)
        : view_(view), T_(input_len), Tp_(horizon) {
        if (T_ < 1 || Tp_ < 1) throw std::runtime_error("rolling windows: T and T_p must be >= 1");
        if (view_.size() < T_ + Tp_)
            throw std::runtime_error("rolling windows: series too short (" +
                                     std::to_string(view_.size()) + " < " +
                                     std::to_string(T_ + Tp_) + ")");
    }

    size_t count() const { return view_.size() - T_ - Tp_ + 1; }
    size_t input_len() const { return T_; }
    size_t horizon() const { return Tp_; }

    Window at(size_t i) const {
        Window w;
        w.input = view_.values.subspan(i, T_);
        w.target = view_.values.subspan(i + T_, Tp_);
        w.input_start = view_.timestamp(i);
        w.target_start = view_.timestamp(i + T_);
        w.interval = view_.interval;
        return w;
    }

private:
    SeriesView view_;
    size_t T_;
    size_t Tp_;
};

}  // namespace flowcast
