#include <catch_amalgamated.hpp>

#include <sstream>

#include "flowcast/flowcast.hpp"
#include "support/synthetic.hpp"

using namespace flowcast;
using testsupport::SyntheticSpec;
using testsupport::generate_synthetic;

namespace {

// ~5 months of hourly data, small amplitudes: quick to train on.
ExperimentConfig tiny_config(ModelKind kind) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    cfg.interval = 60;
    cfg.split.train_begin = make_time(2017, 1, 1);
    cfg.split.train_end = make_time(2017, 4, 1);
    cfg.split.val_begin = make_time(2017, 4, 1);
    cfg.split.val_end = make_time(2017, 5, 1);
    cfg.split.test_begin = make_time(2017, 5, 1);
    cfg.split.test_end = make_time(2017, 6, 1);
    cfg.input_len = 24;
    cfg.horizons = {3};
    cfg.model.layers = 1;
    cfg.model.hidden = 8;
    cfg.model.dropout_p = 0.1;
    cfg.model.d_model = 8;
    cfg.model.heads = 2;
    cfg.model.enc_layers = 1;
    cfg.model.dec_layers = 1;
    cfg.model.d_ff = 16;
    cfg.model.label_len = 6;
    cfg.model.sparsity_sample_full = true;
    cfg.training.batch_size = 16;
    cfg.training.lr = 0.01;
    cfg.training.max_epochs = 2;
    cfg.training.max_batches_per_epoch = 12;
    cfg.training.val_max_batches = 4;
    cfg.xgb.n_estimators = 30;
    cfg.xgb.max_depth = 4;
    cfg.xgb.learning_rate = 0.3;
    cfg.seed = 11;
    return cfg;
}

SyntheticSpec tiny_synthetic_spec() {
    SyntheticSpec spec;
    spec.days = 151;  // jan-may 2017
    spec.seed = 5;
    return spec;
}

PreparedData tiny_prepared(const ExperimentConfig& cfg) {
    auto data = generate_synthetic(tiny_synthetic_spec());
    return prepare_data(cfg, data.series, data.calendar);
}

}  // namespace

TEST_CASE("experiment config round trips through json") {
    ExperimentConfig cfg = tiny_config(ModelKind::lstm_t);
    cfg.dataset_path = "flows.csv";
    cfg.holiday_path = "holidays.txt";
    cfg.eval_ranges.push_back({make_time(2017, 5, 10), make_time(2017, 5, 12)});

    nlohmann::json j = cfg.to_json();
    ExperimentConfig back = ExperimentConfig::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.kind == ModelKind::lstm_t);
    CHECK(back.digest() == cfg.digest());

    back.seed = cfg.seed + 1;
    CHECK(back.digest() != cfg.digest());
}

TEST_CASE("config parsing validates input") {
    nlohmann::json j;
    j["model"]["kind"] = "lstm";
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j),
                      Catch::Matchers::ContainsSubstring("split"));

    j = tiny_config(ModelKind::lstm).to_json();
    j["model"]["kind"] = "transformer";
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j),
                      Catch::Matchers::ContainsSubstring("unknown model kind"));

    j = tiny_config(ModelKind::lstm).to_json();
    j["horizons"] = {0};
    CHECK_THROWS(ExperimentConfig::from_json(j));
}

TEST_CASE("model kinds map to variants") {
    CHECK(parse_model_kind("rnn-t") == ModelKind::rnn_t);
    CHECK(kind_uses_time_embedding(ModelKind::rnn_t));
    CHECK_FALSE(kind_uses_time_embedding(ModelKind::informer));
    CHECK(kind_uses_time_embedding(ModelKind::xgboost_t));
    CHECK_FALSE(kind_is_neural(ModelKind::xgboost_t));
    CHECK(std::string(model_kind_name(ModelKind::informer_t)) == "informer-t");
}

TEST_CASE("prepared data standardizes with training statistics") {
    ExperimentConfig cfg = tiny_config(ModelKind::lstm);
    PreparedData data = tiny_prepared(cfg);

    CHECK(data.train_begin == 0);
    CHECK(data.train_end == 90 * 24);
    CHECK(data.val_end == 120 * 24);
    CHECK(data.test_end == 151 * 24);

    std::span<const double> values = data.series.values();
    double mean = 0.0;
    for (size_t i = data.train_begin; i < data.train_end; ++i) mean += values[i];
    mean /= static_cast<double>(data.train_end - data.train_begin);
    CHECK_THAT(data.scaler.mean, Catch::Matchers::WithinRel(mean, 1e-12));
    CHECK_THAT(data.standardized[5], Catch::Matchers::WithinRel(data.scaler.apply(values[5]), 1e-12));
}

TEST_CASE("training reaches a near-zero loss on an easy series") {
    // almost-constant standardized signal: a pure daily sinusoid, no noise
    SyntheticSpec spec = tiny_synthetic_spec();
    spec.weekly_amp = 0.0;
    spec.noise_frac = 0.0;
    spec.moving_holidays_per_year = 0;
    spec.holiday_factor = 1.0;
    auto synth = generate_synthetic(spec);

    ExperimentConfig cfg = tiny_config(ModelKind::rnn);
    cfg.model.hidden = 16;
    cfg.model.dropout_p = 0.0;
    cfg.training.max_epochs = 6;
    cfg.training.max_batches_per_epoch = 90;
    cfg.training.lr = 0.04;
    PreparedData data = prepare_data(cfg, synth.series, synth.calendar);

    Rng init(cell_seed(cfg.seed, 3));
    auto model = make_neural_model(cfg, init);
    Rng rng(7);
    TrainOutcome out = train_neural(*model, data, cfg, 3, rng);
    REQUIRE(!out.epochs.empty());
    CHECK(out.epochs.back().val_loss < 0.05);
    CHECK(out.epochs.front().lr == 0.04);
    if (out.epochs.size() > 1) CHECK(out.epochs[1].lr == 0.02);
}

TEST_CASE("training restores the least-validation-loss parameters") {
    ExperimentConfig cfg = tiny_config(ModelKind::rnn);
    cfg.training.lr = 0.5;  // deliberately unstable so val loss bounces
    cfg.training.max_epochs = 5;
    PreparedData data = tiny_prepared(cfg);

    Rng init(cell_seed(cfg.seed, 3));
    auto model = make_neural_model(cfg, init);
    Rng rng(3);
    TrainOutcome out = train_neural(*model, data, cfg, 3, rng);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : out.epochs) best = std::min(best, e.val_loss);

    // re-running the validation pass with the restored weights reproduces the
    // best epoch's loss bit for bit
    const size_t T = static_cast<size_t>(cfg.input_len), Tp = 3;
    SeriesView val_view{data.series.timestamp(data.val_begin - T), data.series.interval(),
                        std::span<const double>(data.standardized)
                            .subspan(data.val_begin - T, T + (data.val_end - data.val_begin))};
    RollingWindows val_windows(val_view, T, Tp);
    std::vector<size_t> ids;
    size_t cap = static_cast<size_t>(cfg.training.val_max_batches) *
                 static_cast<size_t>(cfg.training.batch_size);
    std::vector<size_t> all(val_windows.count());
    std::iota(all.begin(), all.end(), size_t{0});
    for (size_t i = 0; i < cap && i < all.size(); ++i) ids.push_back(all[i * all.size() / cap]);

    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t off = 0; off < ids.size(); off += 16) {
        size_t n = std::min(ids.size() - off, size_t{16});
        WindowBatch b = make_batch(val_windows, std::span<const size_t>(ids).subspan(off, n),
                                   nullptr);
        Tape tape;
        Rng r(0);
        Var preds = model->forward(tape, b, false, r);
        loss_sum += tape.value(tape.mse_loss(preds, tape.input(b.targets))).data[0];
        ++batches;
    }
    CHECK(loss_sum / static_cast<double>(batches) == best);
}

TEST_CASE("xgboost cell trains and evaluates") {
    ExperimentConfig cfg = tiny_config(ModelKind::xgboost_t);
    PreparedData data = tiny_prepared(cfg);
    TrainedCell cell = train_cell(data, cfg, 3);
    REQUIRE(cell.xgb != nullptr);
    EvalOutcome out = evaluate_cell(cell, data, cfg, 3, nullptr);
    CHECK(out.metrics.n > 0);
    CHECK(out.metrics.geh_mean < 5.0);  // periodic signal, time features suffice
    CHECK(out.metrics.mae >= 0.0);
}

TEST_CASE("evaluation pools exactly the subset-range pairs") {
    ExperimentConfig cfg = tiny_config(ModelKind::rnn);
    cfg.training.max_epochs = 1;
    cfg.training.max_batches_per_epoch = 2;
    PreparedData data = tiny_prepared(cfg);
    const int horizon = 3;
    TrainedCell cell = train_cell(data, cfg, horizon);

    std::vector<std::pair<CivilTime, CivilTime>> subset = {
        {make_time(2017, 5, 10), make_time(2017, 5, 13)}};
    EvalOutcome filtered = evaluate_cell(cell, data, cfg, horizon, &subset);

    // independent pooling loop over every (window, step) pair
    const size_t T = static_cast<size_t>(cfg.input_len), Tp = horizon;
    RollingWindows windows(data.standardized_view(), T, Tp);
    MetricAccumulator acc;
    Rng rng(0);
    for (size_t i = 0; i + T + Tp <= data.standardized.size(); ++i) {
        bool any = false;
        for (size_t k = 0; k < Tp; ++k) {
            CivilTime stamp = data.series.timestamp(i + T + k);
            if (stamp >= subset[0].first && stamp < subset[0].second) any = true;
        }
        if (!any) continue;
        std::vector<size_t> one = {i};
        WindowBatch b = make_batch(windows, one, nullptr);
        Tape tape;
        const Array& p = tape.value(cell.neural->forward(tape, b, false, rng));
        for (size_t k = 0; k < Tp; ++k) {
            CivilTime stamp = data.series.timestamp(i + T + k);
            if (!(stamp >= subset[0].first && stamp < subset[0].second)) continue;
            if (!(stamp >= data.series.timestamp(data.test_begin) &&
                  stamp < data.series.timestamp(data.test_end)))
                continue;
            double raw = data.scaler.invert(p.at(0, static_cast<int>(k)));
            acc.add(std::max(raw, 0.0), data.series.value(i + T + k));
        }
    }
    MetricReport oracle = acc.report();
    CHECK(filtered.metrics.n == oracle.n);
    CHECK_THAT(filtered.metrics.mae, Catch::Matchers::WithinRel(oracle.mae, 1e-12));
    CHECK_THAT(filtered.metrics.geh_mean, Catch::Matchers::WithinRel(oracle.geh_mean, 1e-12));
}

TEST_CASE("longer horizons pool more pairs") {
    ExperimentConfig cfg = tiny_config(ModelKind::xgboost_t);
    PreparedData data = tiny_prepared(cfg);
    TrainedCell cell = train_cell(data, cfg, 1);
    EvalOutcome h1 = evaluate_cell(cell, data, cfg, 1, nullptr);
    EvalOutcome h24 = evaluate_cell(cell, data, cfg, 24, nullptr);
    CHECK(h24.metrics.n > h1.metrics.n);
    // every test stamp appears once per reachable step position
    size_t test_len = data.test_end - data.test_begin;
    CHECK(h1.metrics.n == test_len);
}

TEST_CASE("report serialisation") {
    RunReport r;
    r.model = "lstm-t";
    r.input_len = 24;
    r.seed = 9;
    r.config_digest = "00ff";
    HorizonResult h;
    h.horizon = 3;
    h.metrics.mae = 1.5;
    h.metrics.rmse = 2.0;
    h.metrics.geh_mean = 0.5;
    h.metrics.geh_acceptable_frac = 1.0;
    h.metrics.n = 10;
    h.epochs.push_back(EpochLog{1, 1e-4, 0.5, 0.6});
    r.horizons.push_back(h);

    SECTION("csv schema") {
        std::ostringstream out;
        write_report_csv(r, out);
        std::string text = out.str();
        CHECK(text.rfind("model,T,T_p,mae,rmse,mape_100,geh_mean,geh_acceptable_frac,"
                         "geh_unacceptable_frac,n,n_mape\n", 0) == 0);
        CHECK(text.find("lstm-t,24,3,1.5,2,,0.5,1,0,10,0") != std::string::npos);
    }
    SECTION("empty horizon list gives a header-only csv") {
        RunReport empty = r;
        empty.horizons.clear();
        std::ostringstream out;
        write_report_csv(empty, out);
        CHECK(out.str() == std::string(kReportCsvHeader) + "\n");
    }
    SECTION("jsonl round trips") {
        std::string text = report_jsonl(r);
        std::istringstream in(text);
        RunReport back = parse_report_jsonl(in);
        CHECK(report_jsonl(back) == text);
        CHECK(back.model == r.model);
        REQUIRE(back.horizons.size() == 1);
        CHECK(back.horizons[0].metrics.rmse == 2.0);
        CHECK_FALSE(back.horizons[0].metrics.mape_100.has_value());
        REQUIRE(back.horizons[0].epochs.size() == 1);
        CHECK(back.horizons[0].epochs[0].val_loss == 0.6);
    }
}

TEST_CASE("sweep reports are deterministic for a fixed seed") {
    ExperimentConfig cfg = tiny_config(ModelKind::rnn);
    cfg.training.max_epochs = 1;
    cfg.training.max_batches_per_epoch = 3;
    cfg.horizons = {1, 3};
    auto synth = generate_synthetic(tiny_synthetic_spec());

    PreparedData d1 = prepare_data(cfg, synth.series, synth.calendar);
    RunReport a = run_sweep(d1, cfg, nullptr);
    PreparedData d2 = prepare_data(cfg, synth.series, synth.calendar);
    RunReport b = run_sweep(d2, cfg, nullptr);
    CHECK(report_jsonl(a) == report_jsonl(b));
    REQUIRE(a.horizons.size() == 2);
    CHECK(a.horizons[0].horizon == 1);
    CHECK(a.horizons[1].horizon == 3);

    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    PreparedData d3 = prepare_data(other, synth.series, synth.calendar);
    RunReport c = run_sweep(d3, other, nullptr);
    CHECK(report_jsonl(c) != report_jsonl(a));
}

TEST_CASE("informer -t differs from plain only in input construction") {
    ExperimentConfig plain = tiny_config(ModelKind::informer);
    ExperimentConfig embedded = tiny_config(ModelKind::informer_t);
    Rng r1(1), r2(1);
    auto a = make_neural_model(plain, r1);
    auto b = make_neural_model(embedded, r2);
    auto names_a = a->params().names();
    auto names_b = b->params().names();

    auto is_input = [](const std::string& n) { return n.rfind("input.", 0) == 0; };
    std::vector<std::string> core_a, core_b;
    for (auto& n : names_a)
        if (!is_input(n)) core_a.push_back(n);
    for (auto& n : names_b)
        if (!is_input(n)) core_b.push_back(n);
    CHECK(core_a == core_b);

    // the embedded variant adds exactly the entity tables
    std::vector<std::string> extra;
    for (auto& n : names_b)
        if (std::find(names_a.begin(), names_a.end(), n) == names_a.end()) extra.push_back(n);
    CHECK(extra.size() == 7);
    for (auto& n : extra) CHECK(n.find(".embed.") != std::string::npos);
}

TEST_CASE("informer label length wider than the window fails loudly") {
    ExperimentConfig cfg = tiny_config(ModelKind::informer);
    cfg.model.label_len = cfg.input_len + 10;
    PreparedData data = tiny_prepared(cfg);
    CHECK_THROWS_WITH(train_cell(data, cfg, 3),
                      Catch::Matchers::ContainsSubstring("label length"));
}

TEST_CASE("informer cell runs through the harness") {
    ExperimentConfig cfg = tiny_config(ModelKind::informer_t);
    cfg.training.max_epochs = 1;
    cfg.training.max_batches_per_epoch = 2;
    PreparedData data = tiny_prepared(cfg);
    TrainedCell cell = train_cell(data, cfg, 3);
    REQUIRE(cell.neural != nullptr);
    EvalOutcome out = evaluate_cell(cell, data, cfg, 3, nullptr);
    CHECK(out.metrics.n > 0);
    CHECK(std::isfinite(out.metrics.geh_mean));
}

TEST_CASE("negative model outputs are clamped before metrics") {
    ExperimentConfig cfg = tiny_config(ModelKind::xgboost_t);
    PreparedData data = tiny_prepared(cfg);
    TrainedCell cell;
    cell.xgb = std::make_unique<XgbModel>();
    cell.xgb->ensemble.base_score = -10.0;  // always predicts below zero
    EvalOutcome out = evaluate_cell(cell, data, cfg, 2, nullptr);
    // clamped predictions are all exactly zero, so MAE equals the mean truth
    double truth_sum = 0.0;
    size_t truth_n = 0;
    RollingWindows windows(data.standardized_view(), 24, 2);
    for (size_t i = data.test_begin - 24 - 2 + 1; i < data.test_end - 24 - 2 + 1; ++i)
        for (size_t k = 0; k < 2; ++k) {
            size_t idx = i + 24 + k;
            if (idx >= data.test_begin && idx < data.test_end) {
                truth_sum += data.series.value(idx);
                ++truth_n;
            }
        }
    CHECK(out.metrics.n == truth_n);
    CHECK_THAT(out.metrics.mae, Catch::Matchers::WithinRel(truth_sum / truth_n, 1e-9));
}

TEST_CASE("training aborts visibly with epoch and batch coordinates") {
    ExperimentConfig cfg = tiny_config(ModelKind::rnn);
    cfg.training.max_epochs = 1;
    cfg.training.max_batches_per_epoch = 2;
    PreparedData data = tiny_prepared(cfg);
    Rng init(cell_seed(cfg.seed, 3));
    auto model = make_neural_model(cfg, init);
    // poison a weight so the first forward pass goes non-finite
    Param* w = model->params().find("enc.l0.w_h");
    REQUIRE(w != nullptr);
    w->value.data[0] = std::numeric_limits<double>::quiet_NaN();
    Rng rng(1);
    CHECK_THROWS_WITH(train_neural(*model, data, cfg, 3, rng),
                      Catch::Matchers::ContainsSubstring("epoch 1") &&
                          Catch::Matchers::ContainsSubstring("batch 0"));
}

TEST_CASE("evaluation rejects an unformable horizon") {
    ExperimentConfig cfg = tiny_config(ModelKind::xgboost_t);
    PreparedData data = tiny_prepared(cfg);
    TrainedCell cell = train_cell(data, cfg, 1);
    // a horizon the series cannot host a single window for
    CHECK_THROWS(evaluate_cell(cell, data, cfg, static_cast<int>(data.standardized.size()),
                               nullptr));
}
