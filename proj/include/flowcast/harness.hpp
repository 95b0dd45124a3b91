#pragma once

#include <chrono>
#include <iostream>
#include <memory>
#include <unordered_map>

#include "flowcast/attention.hpp"
#include "flowcast/config.hpp"
#include "flowcast/gbrt.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/recurrent.hpp"
#include "flowcast/report.hpp"

namespace flowcast {

// A dataset readied for experiments: imputed, aggregated, standardized with
// training statistics, with split boundaries as indices into one contiguous
// series (evaluation windows warm up across the boundaries).
struct PreparedData {
    FlowSeries series;                  // raw units after imputation/aggregation
    HolidayCalendar calendar;
    Standardizer scaler;
    std::vector<double> standardized;   // full series, scaled
    size_t train_begin = 0, train_end = 0;
    size_t val_begin = 0, val_end = 0;
    size_t test_begin = 0, test_end = 0;

    SeriesView standardized_view() const {
        return SeriesView{series.start(), series.interval(), standardized};
    }
};

inline PreparedData prepare_data(const ExperimentConfig& cfg, FlowSeries raw,
                                 HolidayCalendar calendar) {
    PreparedData d;
    d.calendar = std::move(calendar);
    FlowSeries imputed = impute_same_period_last_week(raw, cfg.impute_threshold);
    d.series = aggregate(imputed, cfg.interval);

    // validates the ranges and that each split is non-empty
    split(d.series, cfg.split);
    d.train_begin = d.series.lower_bound(cfg.split.train_begin);
    d.train_end = d.series.lower_bound(cfg.split.train_end);
    d.val_begin = d.series.lower_bound(cfg.split.val_begin);
    d.val_end = d.series.lower_bound(cfg.split.val_end);
    d.test_begin = d.series.lower_bound(cfg.split.test_begin);
    d.test_end = d.series.lower_bound(cfg.split.test_end);

    std::span<const double> values = d.series.values();
    d.scaler = Standardizer::fit(values.subspan(d.train_begin, d.train_end - d.train_begin));
    d.standardized.reserve(values.size());
    for (double v : values) d.standardized.push_back(d.scaler.apply(v));
    return d;
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    if (cfg.dataset_path.empty()) throw std::runtime_error("config: missing dataset path");
    FlowSeries raw = parse_flow_csv(cfg.dataset_path, cfg.profile);
    HolidayCalendar cal;
    if (!cfg.holiday_path.empty()) cal = load_holiday_calendar(cfg.holiday_path);
    return prepare_data(cfg, std::move(raw), std::move(cal));
}

inline std::unique_ptr<NeuralForecaster> make_neural_model(const ExperimentConfig& cfg,
                                                           Rng& init_rng) {
    switch (cfg.kind) {
        case ModelKind::rnn:
        case ModelKind::rnn_t:
        case ModelKind::lstm:
        case ModelKind::lstm_t: {
            Seq2SeqConfig sc;
            sc.cell_kind = (cfg.kind == ModelKind::rnn || cfg.kind == ModelKind::rnn_t)
                               ? CellKind::rnn
                               : CellKind::lstm;
            sc.layers = cfg.model.layers;
            sc.hidden = cfg.model.hidden;
            sc.dropout_p = cfg.model.dropout_p;
            sc.time_embedding = kind_uses_time_embedding(cfg.kind);
            return std::make_unique<RecurrentForecaster>(sc, init_rng);
        }
        case ModelKind::informer:
        case ModelKind::informer_t: {
            InformerConfig ic;
            ic.d_model = cfg.model.d_model;
            ic.heads = cfg.model.heads;
            ic.enc_layers = cfg.model.enc_layers;
            ic.dec_layers = cfg.model.dec_layers;
            ic.d_ff = cfg.model.d_ff;
            ic.distill = cfg.model.distill;
            ic.label_len = cfg.model.label_len;
            ic.dropout_p = cfg.model.dropout_p;
            ic.sparsity.c = cfg.model.sparsity_c;
            ic.sparsity.sample_full = cfg.model.sparsity_sample_full;
            ic.time_embedding = kind_uses_time_embedding(cfg.kind);
            return std::make_unique<InformerForecaster>(ic, init_rng);
        }
        case ModelKind::xgboost_t:
            throw std::runtime_error("xgboost-t is not a neural model");
    }
    throw std::runtime_error("unreachable model kind");
}

namespace detail {

// A non-finite value anywhere in the pass aborts with epoch/batch coordinates.
inline double run_batches(NeuralForecaster& model, const RollingWindows& windows,
                          std::span<const size_t> ids, const HolidayCalendar* cal,
                          int batch_size, bool train, Rng& rng, Adam* opt, double lr,
                          int epoch = 0) {
    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t off = 0; off < ids.size(); off += static_cast<size_t>(batch_size)) {
        size_t n = std::min(ids.size() - off, static_cast<size_t>(batch_size));
        WindowBatch batch = make_batch(windows, ids.subspan(off, n), cal);
        try {
            Tape tape;
            Var preds = model.forward(tape, batch, train, rng);
            Var loss = tape.mse_loss(preds, tape.input(batch.targets));
            loss_sum += tape.value(loss).data[0];
            if (train) {
                model.params().zero_grads();
                tape.backward(loss);
                opt->step(lr);
            }
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "training aborted at epoch " << epoch << ", batch " << batches << ": "
                << e.what();
            throw std::runtime_error(msg.str());
        }
        ++batches;
    }
    return batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches);
}

}  // namespace detail

struct TrainOutcome {
    std::vector<EpochLog> epochs;
    double seconds = 0.0;
};

// Mini-batch training: MSE on standardized targets, Adam with per-epoch step
// decay, early stopping with patience over consecutive validation-loss rises,
// best-epoch weights restored.
inline TrainOutcome train_neural(NeuralForecaster& model, const PreparedData& data,
                                 const ExperimentConfig& cfg, int horizon, Rng& rng) {
    auto t0 = std::chrono::steady_clock::now();
    const size_t T = static_cast<size_t>(cfg.input_len);
    const size_t Tp = static_cast<size_t>(horizon);
    const HolidayCalendar* cal = model.wants_time_features() ? &data.calendar : nullptr;

    SeriesView full = data.standardized_view();
    const size_t train_len = data.train_end - data.train_begin;
    if (train_len < T + Tp)
        throw std::runtime_error("train: training range shorter than T + T_p");
    SeriesView train_view{data.series.timestamp(data.train_begin), data.series.interval(),
                          std::span<const double>(data.standardized).subspan(data.train_begin, train_len)};
    RollingWindows train_windows(train_view, T, Tp);

    // validation windows warm up from the training tail; targets lie in val
    const size_t val_len = data.val_end - data.val_begin;
    if (val_len < Tp) throw std::runtime_error("train: validation range shorter than T_p");
    if (data.val_begin < T) throw std::runtime_error("train: no warm-up before validation");
    SeriesView val_view{data.series.timestamp(data.val_begin - T), data.series.interval(),
                        std::span<const double>(data.standardized)
                            .subspan(data.val_begin - T, T + val_len)};
    RollingWindows val_windows(val_view, T, Tp);

    std::vector<size_t> train_ids(train_windows.count());
    std::iota(train_ids.begin(), train_ids.end(), size_t{0});
    std::vector<size_t> val_ids(val_windows.count());
    std::iota(val_ids.begin(), val_ids.end(), size_t{0});
    if (cfg.training.val_max_batches > 0) {
        size_t cap = static_cast<size_t>(cfg.training.val_max_batches) *
                     static_cast<size_t>(cfg.training.batch_size);
        if (val_ids.size() > cap) {
            // spread the capped validation windows evenly over the range
            std::vector<size_t> picked;
            picked.reserve(cap);
            for (size_t i = 0; i < cap; ++i)
                picked.push_back(val_ids[i * val_ids.size() / cap]);
            val_ids = std::move(picked);
        }
    }

    Adam adam(model.params().all());
    EarlyStopper stopper(cfg.training.patience);
    TrainOutcome out;
    std::vector<Array> best_params = model.params().snapshot();
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.training.max_epochs; ++epoch) {
        double lr = step_decay_lr(cfg.training.lr, epoch);
        rng.shuffle(train_ids);
        std::span<const size_t> epoch_ids(train_ids);
        if (cfg.training.max_batches_per_epoch > 0) {
            size_t cap = static_cast<size_t>(cfg.training.max_batches_per_epoch) *
                         static_cast<size_t>(cfg.training.batch_size);
            epoch_ids = epoch_ids.subspan(0, std::min(epoch_ids.size(), cap));
        }
        double train_loss = detail::run_batches(model, train_windows, epoch_ids, cal,
                                                cfg.training.batch_size, true, rng, &adam, lr,
                                                epoch);
        double val_loss = detail::run_batches(model, val_windows, val_ids, cal,
                                              cfg.training.batch_size, false, rng, nullptr, 0.0,
                                              epoch);
        out.epochs.push_back(EpochLog{epoch, lr, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = model.params().snapshot();
        }
        if (stopper.observe(epoch, val_loss)) break;
    }
    model.params().restore(best_params);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// Pools every (window, step) pair whose target timestamp falls in
// [range_begin, range_end) (and in `subset` when given), exactly the stride-1
// protocol: windows may warm up on earlier data.
class EvalPooling {
public:
    EvalPooling(const PreparedData& data, CivilTime begin, CivilTime end,
                const std::vector<std::pair<CivilTime, CivilTime>>* subset)
        : data_(data), begin_(begin), end_(end), subset_(subset) {}

    bool in_scope(CivilTime t) const {
        if (t < begin_ || !(t < end_)) return false;
        if (!subset_ || subset_->empty()) return true;
        for (const auto& r : *subset_)
            if (!(t < r.first) && t < r.second) return true;
        return false;
    }

    void add(CivilTime stamp, double pred_raw_clamped, size_t series_index) {
        if (!in_scope(stamp)) return;
        acc_.add(pred_raw_clamped, data_.series.value(series_index));
    }

    MetricReport report() const { return acc_.report(); }
    size_t count() const { return acc_.count(); }

private:
    const PreparedData& data_;
    CivilTime begin_, end_;
    const std::vector<std::pair<CivilTime, CivilTime>>* subset_;
    MetricAccumulator acc_;
};

struct EvalOutcome {
    MetricReport metrics;
    double seconds = 0.0;
};

inline EvalOutcome evaluate_neural(NeuralForecaster& model, const PreparedData& data,
                                   const ExperimentConfig& cfg, int horizon, Rng& rng,
                                   const std::vector<std::pair<CivilTime, CivilTime>>* subset) {
    auto t0 = std::chrono::steady_clock::now();
    const size_t T = static_cast<size_t>(cfg.input_len);
    const size_t Tp = static_cast<size_t>(horizon);
    const HolidayCalendar* cal = model.wants_time_features() ? &data.calendar : nullptr;

    if (data.test_end - data.test_begin < Tp)
        throw std::runtime_error("evaluate: test span shorter than the horizon");
    if (data.test_begin < T + Tp - 1)
        throw std::runtime_error("evaluate: not enough warm-up before the test range");

    RollingWindows windows(data.standardized_view(), T, Tp);
    // window start range whose targets can intersect the test range
    size_t first = data.test_begin - T - Tp + 1;
    size_t last = std::min(windows.count(), data.test_end - T - Tp + 1);

    EvalPooling pool(data, data.series.timestamp(data.test_begin),
                     data.series.timestamp(data.test_end), subset);

    std::vector<size_t> ids;
    ids.reserve(last - first);
    for (size_t i = first; i < last; ++i) ids.push_back(i);

    const size_t bs = static_cast<size_t>(cfg.training.batch_size);
    for (size_t off = 0; off < ids.size(); off += bs) {
        size_t n = std::min(ids.size() - off, bs);
        WindowBatch batch =
            make_batch(windows, std::span<const size_t>(ids).subspan(off, n), cal);
        Tape tape;
        Var preds = model.forward(tape, batch, false, rng);
        const Array& p = tape.value(preds);
        for (size_t r = 0; r < n; ++r) {
            size_t window_start = ids[off + r];
            for (size_t k = 0; k < Tp; ++k) {
                double raw = data.scaler.invert(p.at(static_cast<int>(r), static_cast<int>(k)));
                pool.add(data.series.timestamp(window_start + T + k), std::max(raw, 0.0),
                         window_start + T + k);
            }
        }
    }
    EvalOutcome out;
    out.metrics = pool.report();
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- the tree route: time features -> flow, no standardization ----

struct XgbModel {
    gbrt::Ensemble ensemble;

    double predict_at(CivilTime t, const HolidayCalendar& cal,
                      std::unordered_map<std::int64_t, double>* memo = nullptr) const {
        if (memo) {
            auto it = memo->find(t.minutes);
            if (it != memo->end()) return it->second;
        }
        double v = ensemble.predict(extract_time_features(t, cal));
        if (memo) memo->emplace(t.minutes, v);
        return v;
    }
};

inline gbrt::TabularData tabular_range(const PreparedData& data, size_t begin, size_t end) {
    gbrt::TabularData out;
    for (size_t i = begin; i < end; ++i) {
        out.x.push_back(gbrt::to_features(extract_time_features(data.series.timestamp(i),
                                                                data.calendar)));
        out.y.push_back(data.series.value(i));
    }
    return out;
}

// Fits the ensemble one-off on the raw training rows (no standardization),
// early stopping against the validation rows.
inline gbrt::BoostResult train_xgb(const PreparedData& data, const ExperimentConfig& cfg) {
    gbrt::TabularData train = tabular_range(data, data.train_begin, data.train_end);
    gbrt::TabularData val = tabular_range(data, data.val_begin, data.val_end);
    return gbrt::boost(train, val, cfg.xgb);
}

inline EvalOutcome evaluate_xgb(const XgbModel& model, const PreparedData& data,
                                const ExperimentConfig& cfg, int horizon,
                                const std::vector<std::pair<CivilTime, CivilTime>>* subset) {
    auto t0 = std::chrono::steady_clock::now();
    const size_t T = static_cast<size_t>(cfg.input_len);
    const size_t Tp = static_cast<size_t>(horizon);
    if (data.test_begin < T + Tp - 1)
        throw std::runtime_error("evaluate: not enough warm-up before the test range");

    RollingWindows windows(data.standardized_view(), T, Tp);
    size_t first = data.test_begin - T - Tp + 1;
    size_t last = std::min(windows.count(), data.test_end - T - Tp + 1);

    EvalPooling pool(data, data.series.timestamp(data.test_begin),
                     data.series.timestamp(data.test_end), subset);
    std::unordered_map<std::int64_t, double> memo;
    for (size_t i = first; i < last; ++i) {
        for (size_t k = 0; k < Tp; ++k) {
            CivilTime stamp = data.series.timestamp(i + T + k);
            if (!pool.in_scope(stamp)) continue;
            double raw = model.predict_at(stamp, data.calendar, &memo);
            pool.add(stamp, raw > 0.0 ? raw : 0.0, i + T + k);
        }
    }
    EvalOutcome out;
    out.metrics = pool.report();
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- experiment cells ----

struct TrainedCell {
    std::unique_ptr<NeuralForecaster> neural;  // one of the two is set
    std::unique_ptr<XgbModel> xgb;
    std::vector<EpochLog> epochs;
    double train_seconds = 0.0;
};

inline std::uint64_t cell_seed(std::uint64_t seed, int horizon) {
    return seed * 1000003ull + static_cast<std::uint64_t>(horizon);
}

inline TrainedCell train_cell(const PreparedData& data, const ExperimentConfig& cfg,
                              int horizon) {
    TrainedCell cell;
    if (kind_is_neural(cfg.kind)) {
        Rng init(cell_seed(cfg.seed, horizon));
        cell.neural = make_neural_model(cfg, init);
        Rng train_rng(cell_seed(cfg.seed, horizon) ^ 0x9e3779b97f4a7c15ull);
        TrainOutcome out = train_neural(*cell.neural, data, cfg, horizon, train_rng);
        cell.epochs = std::move(out.epochs);
        cell.train_seconds = out.seconds;
    } else {
        auto t0 = std::chrono::steady_clock::now();
        gbrt::BoostResult fit = train_xgb(data, cfg);
        cell.xgb = std::make_unique<XgbModel>(XgbModel{std::move(fit.model)});
        for (size_t i = 0; i < fit.train_loss.size(); ++i)
            cell.epochs.push_back(EpochLog{static_cast<int>(i) + 1, cfg.xgb.learning_rate,
                                           fit.train_loss[i],
                                           i < fit.val_loss.size() ? fit.val_loss[i] : 0.0});
        cell.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return cell;
}

inline EvalOutcome evaluate_cell(TrainedCell& cell, const PreparedData& data,
                                 const ExperimentConfig& cfg, int horizon,
                                 const std::vector<std::pair<CivilTime, CivilTime>>* subset) {
    if (cell.neural) {
        Rng rng(cell_seed(cfg.seed, horizon) ^ 0xda3e39cb94b95bdbull);
        return evaluate_neural(*cell.neural, data, cfg, horizon, rng, subset);
    }
    return evaluate_xgb(*cell.xgb, data, cfg, horizon, subset);
}

// Trains and evaluates one model per horizon and assembles the report.
inline RunReport run_sweep(const PreparedData& data, const ExperimentConfig& cfg,
                           std::ostream* log = nullptr) {
    RunReport report;
    report.model = model_kind_name(cfg.kind);
    report.input_len = cfg.input_len;
    report.seed = cfg.seed;
    report.config_digest = cfg.digest();
    for (int horizon : cfg.horizons) {
        TrainedCell cell = train_cell(data, cfg, horizon);
        const std::vector<std::pair<CivilTime, CivilTime>>* subset =
            cfg.eval_ranges.empty() ? nullptr : &cfg.eval_ranges;
        EvalOutcome eval = evaluate_cell(cell, data, cfg, horizon, subset);
        HorizonResult h;
        h.horizon = horizon;
        h.metrics = eval.metrics;
        h.epochs = cell.epochs;
        h.train_seconds = cell.train_seconds;
        h.eval_seconds = eval.seconds;
        if (log)
            *log << "[" << report.model << " T_p=" << horizon << "] geh=" << h.metrics.geh_mean
                 << " mae=" << h.metrics.mae << " train=" << h.train_seconds
                 << "s eval=" << h.eval_seconds << "s epochs=" << h.epochs.size() << "\n";
        report.horizons.push_back(std::move(h));
    }
    return report;
}

inline RunReport run_sweep(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
    PreparedData data = prepare_data(cfg);
    return run_sweep(data, cfg, log);
}

}  // namespace flowcast
