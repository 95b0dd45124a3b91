#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

inline std::vector<double> clamp_nonnegative(std::span<const double> preds) {
    std::vector<double> out;
    out.reserve(preds.size());
    for (double p : preds) {
        if (std::isnan(p)) throw std::runtime_error("clamp: NaN prediction");
        out.push_back(p > 0.0 ? p : 0.0);
    }
    return out;
}

// GEH statistic over hourly volumes: sqrt(2(m-c)^2 / (m+c)).
// Both volumes zero is taken as zero error.
inline double geh(double m, double c) {
    if (m < 0.0 || c < 0.0) throw std::runtime_error("geh: negative volume");
    if (m + c == 0.0) return 0.0;
    double d = m - c;
    return std::sqrt(2.0 * d * d / (m + c));
}

enum class GehBand { acceptable, attention, unacceptable };

// <= 5 acceptable, (5, 10] needs attention, > 10 unacceptable.
inline GehBand geh_classify(double g) {
    if (g < 0.0) throw std::runtime_error("geh_classify: negative statistic");
    if (g <= 5.0) return GehBand::acceptable;
    if (g <= 10.0) return GehBand::attention;
    return GehBand::unacceptable;
}

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape_100;  // undefined when no ground truth exceeds 100
    double geh_mean = 0.0;
    double geh_acceptable_frac = 0.0;    // fraction with GEH <= 5
    double geh_unacceptable_frac = 0.0;  // fraction with GEH > 10
    size_t n = 0;
    size_t n_mape = 0;
};

// Streaming accumulator so rolling evaluation can pool (window, step) pairs
// without materialising them.
class MetricAccumulator {
public:
    void add(double pred, double truth) {
        if (pred < 0.0) throw std::runtime_error("metrics: negative prediction (clamp first)");
        if (truth < 0.0) throw std::runtime_error("metrics: negative ground truth");
        double err = pred - truth;
        abs_sum_ += std::abs(err);
        sq_sum_ += err * err;
        if (truth > 100.0) {
            mape_sum_ += std::abs(err) / truth * 100.0;
            ++n_mape_;
        }
        double g = geh(pred, truth);
        geh_sum_ += g;
        if (g <= 5.0) ++n_acceptable_;
        if (g > 10.0) ++n_unacceptable_;
        ++n_;
    }

    size_t count() const { return n_; }

    MetricReport report() const {
        if (n_ == 0) throw std::runtime_error("metrics: no pairs accumulated");
        MetricReport r;
        r.n = n_;
        r.n_mape = n_mape_;
        r.mae = abs_sum_ / static_cast<double>(n_);
        r.rmse = std::sqrt(sq_sum_ / static_cast<double>(n_));
        if (n_mape_ > 0) r.mape_100 = mape_sum_ / static_cast<double>(n_mape_);
        r.geh_mean = geh_sum_ / static_cast<double>(n_);
        r.geh_acceptable_frac = static_cast<double>(n_acceptable_) / static_cast<double>(n_);
        r.geh_unacceptable_frac = static_cast<double>(n_unacceptable_) / static_cast<double>(n_);
        return r;
    }

private:
    double abs_sum_ = 0.0, sq_sum_ = 0.0, mape_sum_ = 0.0, geh_sum_ = 0.0;
    size_t n_ = 0, n_mape_ = 0, n_acceptable_ = 0, n_unacceptable_ = 0;
};

// MAE/RMSE/MAPE_100/GEH over prediction-truth pairs. Predictions must already
// be clamped non-negative; MAPE_100 only counts pairs with truth > 100.
inline MetricReport error_metrics(std::span<const double> preds, std::span<const double> truth) {
    if (preds.size() != truth.size())
        throw std::runtime_error("metrics: length mismatch " + std::to_string(preds.size()) +
                                 " vs " + std::to_string(truth.size()));
    if (preds.empty()) throw std::runtime_error("metrics: empty input");
    MetricAccumulator acc;
    for (size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], truth[i]);
    return acc.report();
}

}  // namespace flowcast
