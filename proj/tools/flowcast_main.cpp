#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "flowcast/flowcast.hpp"

using namespace flowcast;

namespace {

void write_series_csv(const FlowSeries& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "timestamp,flow\n";
    char buf[32];
    for (size_t i = 0; i < s.size(); ++i) {
        out << format_timestamp(s.timestamp(i)) << ',';
        if (!s.is_missing(i)) {
            std::snprintf(buf, sizeof(buf), "%.17g", s.value(i));
            out << buf;
        }
        out << '\n';
    }
}

void write_reports(const RunReport& report, const std::string& prefix) {
    {
        std::ofstream csv(prefix + ".csv");
        if (!csv) throw std::runtime_error("cannot write: " + prefix + ".csv");
        write_report_csv(report, csv);
    }
    {
        std::ofstream jsonl(prefix + ".jsonl");
        if (!jsonl) throw std::runtime_error("cannot write: " + prefix + ".jsonl");
        write_report_jsonl(report, jsonl);
    }
    std::cout << "wrote " << prefix << ".csv and " << prefix << ".jsonl\n";
}

void print_metrics(const std::string& label, const MetricReport& m) {
    std::cout << label << ": mae=" << m.mae << " rmse=" << m.rmse << " mape_100="
              << (m.mape_100 ? std::to_string(*m.mape_100) : std::string("undefined"))
              << " geh=" << m.geh_mean << " geh<=5: " << m.geh_acceptable_frac * 100.0
              << "% geh>10: " << m.geh_unacceptable_frac * 100.0 << "% n=" << m.n << "\n";
}

std::vector<int> parse_horizon_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw std::runtime_error("empty horizon list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-horizon traffic flow forecasting toolkit"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "clean a raw flow csv: impute and aggregate");
    std::string ingest_input, ingest_profile = "melbourne", ingest_out;
    Minutes ingest_interval = 60;
    double ingest_threshold = 0.05;
    ingest->add_option("raw", ingest_input, "raw csv with header timestamp,flow")->required();
    ingest->add_option("--profile", ingest_profile, "melbourne|freeway");
    ingest->add_option("--interval", ingest_interval, "target interval in minutes");
    ingest->add_option("--impute-threshold", ingest_threshold, "max tolerated missing fraction");
    ingest->add_option("--out", ingest_out, "output csv path")->required();

    auto* train = app.add_subcommand("train", "train one model and save a checkpoint");
    std::string train_config, train_out;
    int train_horizon = 0;
    train->add_option("config", train_config, "experiment config json")->required();
    train->add_option("--horizon", train_horizon, "override T_p (default: first configured)");
    train->add_option("--out", train_out, "checkpoint path")->required();

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test range");
    std::string eval_config, eval_checkpoint, eval_out;
    int eval_horizon = 0;
    evaluate->add_option("config", eval_config, "experiment config json")->required();
    evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
    evaluate->add_option("--horizon", eval_horizon, "override T_p (default: first configured)");
    evaluate->add_option("--out", eval_out, "report path prefix");

    auto* sweep = app.add_subcommand("sweep", "train and evaluate across horizons");
    std::string sweep_config, sweep_out, sweep_horizons;
    sweep->add_option("config", sweep_config, "experiment config json")->required();
    sweep->add_option("--horizons", sweep_horizons, "comma-separated T_p list override");
    sweep->add_option("--out", sweep_out, "report path prefix")->required();

    auto* tune = app.add_subcommand("tune", "random-search xgboost hyperparameters");
    std::string tune_config, tune_out;
    int tune_rounds = 100;
    tune->add_option("config", tune_config, "experiment config json")->required();
    tune->add_option("--rounds", tune_rounds, "random search rounds");
    tune->add_option("--out", tune_out, "write the winning config as json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            FlowSeries raw = parse_flow_csv(ingest_input, parse_profile(ingest_profile));
            FlowSeries imputed = impute_same_period_last_week(raw, ingest_threshold);
            std::vector<std::string> warnings;
            FlowSeries out = aggregate(imputed, ingest_interval, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
            write_series_csv(out, ingest_out);
            std::cout << "wrote " << out.size() << " records to " << ingest_out << "\n";
        } else if (*train) {
            ExperimentConfig cfg = ExperimentConfig::load(train_config);
            int horizon = train_horizon > 0 ? train_horizon : cfg.horizons.at(0);
            PreparedData data = prepare_data(cfg);
            TrainedCell cell = train_cell(data, cfg, horizon);
            for (const auto& e : cell.epochs)
                std::cout << "epoch " << e.epoch << " lr=" << e.lr << " train=" << e.train_loss
                          << " val=" << e.val_loss << "\n";
            if (cell.neural) cell.neural->params().save(train_out);
            else {
                std::ofstream out(train_out);
                if (!out) throw std::runtime_error("cannot write: " + train_out);
                gbrt::dump(cell.xgb->ensemble, out);
            }
            std::cout << "trained " << model_kind_name(cfg.kind) << " for T_p=" << horizon
                      << " in " << cell.train_seconds << "s, checkpoint: " << train_out << "\n";
        } else if (*evaluate) {
            ExperimentConfig cfg = ExperimentConfig::load(eval_config);
            int horizon = eval_horizon > 0 ? eval_horizon : cfg.horizons.at(0);
            PreparedData data = prepare_data(cfg);
            TrainedCell cell;
            if (kind_is_neural(cfg.kind)) {
                Rng init(cell_seed(cfg.seed, horizon));
                cell.neural = make_neural_model(cfg, init);
                cell.neural->params().load(eval_checkpoint);
            } else {
                std::ifstream in(eval_checkpoint);
                if (!in) throw std::runtime_error("cannot read: " + eval_checkpoint);
                cell.xgb = std::make_unique<XgbModel>(XgbModel{gbrt::parse_dump(in)});
            }
            const auto* subset = cfg.eval_ranges.empty() ? nullptr : &cfg.eval_ranges;
            EvalOutcome out = evaluate_cell(cell, data, cfg, horizon, subset);
            print_metrics(std::string(model_kind_name(cfg.kind)) + " T_p=" +
                              std::to_string(horizon),
                          out.metrics);
            std::cout << "inference time: " << out.seconds << "s\n";
            if (!eval_out.empty()) {
                RunReport report;
                report.model = model_kind_name(cfg.kind);
                report.input_len = cfg.input_len;
                report.seed = cfg.seed;
                report.config_digest = cfg.digest();
                report.horizons.push_back(HorizonResult{horizon, out.metrics, {}, 0.0, 0.0});
                write_reports(report, eval_out);
            }
        } else if (*sweep) {
            ExperimentConfig cfg = ExperimentConfig::load(sweep_config);
            if (!sweep_horizons.empty()) cfg.horizons = parse_horizon_list(sweep_horizons);
            RunReport report = run_sweep(cfg, &std::cout);
            write_reports(report, sweep_out);
        } else if (*tune) {
            ExperimentConfig cfg = ExperimentConfig::load(tune_config);
            PreparedData data = prepare_data(cfg);
            // tuning data: training plus validation span, chronological
            gbrt::TabularData rows = tabular_range(data, data.train_begin, data.val_end);
            gbrt::SearchSpace space;
            gbrt::TuneResult result = gbrt::tune_random_search(rows, space, tune_rounds, cfg.seed);
            nlohmann::json best;
            best["n_estimators"] = result.best.n_estimators;
            best["learning_rate"] = result.best.learning_rate;
            best["max_depth"] = result.best.max_depth;
            best["min_child_weight"] = result.best.min_child_weight;
            best["gamma"] = result.best.gamma;
            best["reg_lambda"] = result.best.lambda;
            best["subsample"] = result.best.subsample;
            best["colsample_bytree"] = result.best.colsample_bytree;
            best["early_stopping_rounds"] = result.best.early_stopping_rounds;
            std::cout << "best mean forward-chaining rmse: " << result.best_score << "\n";
            std::cout << best.dump(2) << "\n";
            if (!tune_out.empty()) {
                std::ofstream out(tune_out);
                if (!out) throw std::runtime_error("cannot write: " + tune_out);
                out << best.dump(2) << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
