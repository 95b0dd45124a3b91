#pragma once

#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/metrics.hpp"

namespace flowcast {

struct EpochLog {
    int epoch;
    double lr;
    double train_loss;
    double val_loss;
};

struct HorizonResult {
    int horizon = 0;
    MetricReport metrics;
    std::vector<EpochLog> epochs;
    // Wall-clock durations are printed to the console log but kept out of the
    // serialized reports so identical runs emit identical bytes.
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
};

struct RunReport {
    std::string model;
    int input_len = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<HorizonResult> horizons;
};

inline const char* kReportCsvHeader =
    "model,T,T_p,mae,rmse,mape_100,geh_mean,geh_acceptable_frac,geh_unacceptable_frac,n,n_mape";

inline void write_report_csv(const RunReport& report, std::ostream& out) {
    out << kReportCsvHeader << "\n";
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& h : report.horizons) {
        const MetricReport& m = h.metrics;
        out << report.model << ',' << report.input_len << ',' << h.horizon << ',' << num(m.mae)
            << ',' << num(m.rmse) << ',' << (m.mape_100 ? num(*m.mape_100) : std::string{})
            << ',' << num(m.geh_mean) << ',' << num(m.geh_acceptable_frac) << ','
            << num(m.geh_unacceptable_frac) << ',' << m.n << ',' << m.n_mape << "\n";
    }
}

inline nlohmann::json metrics_to_json(const MetricReport& m) {
    nlohmann::json j;
    j["mae"] = m.mae;
    j["rmse"] = m.rmse;
    if (m.mape_100) j["mape_100"] = *m.mape_100;
    else j["mape_100"] = nullptr;
    j["geh_mean"] = m.geh_mean;
    j["geh_acceptable_frac"] = m.geh_acceptable_frac;
    j["geh_unacceptable_frac"] = m.geh_unacceptable_frac;
    j["n"] = m.n;
    j["n_mape"] = m.n_mape;
    return j;
}

inline MetricReport metrics_from_json(const nlohmann::json& j) {
    MetricReport m;
    m.mae = j.at("mae").get<double>();
    m.rmse = j.at("rmse").get<double>();
    if (!j.at("mape_100").is_null()) m.mape_100 = j.at("mape_100").get<double>();
    m.geh_mean = j.at("geh_mean").get<double>();
    m.geh_acceptable_frac = j.at("geh_acceptable_frac").get<double>();
    m.geh_unacceptable_frac = j.at("geh_unacceptable_frac").get<double>();
    m.n = j.at("n").get<size_t>();
    m.n_mape = j.at("n_mape").get<size_t>();
    return m;
}

// One JSON object per horizon run. The epoch log is deterministic; timings
// are deliberately absent.
inline void write_report_jsonl(const RunReport& report, std::ostream& out) {
    for (const auto& h : report.horizons) {
        nlohmann::json j;
        j["schema"] = "flowcast-report-v1";
        j["model"] = report.model;
        j["T"] = report.input_len;
        j["T_p"] = h.horizon;
        j["seed"] = report.seed;
        j["config_digest"] = report.config_digest;
        j["metrics"] = metrics_to_json(h.metrics);
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : h.epochs)
            epochs.push_back({{"epoch", e.epoch},
                              {"lr", e.lr},
                              {"train_loss", e.train_loss},
                              {"val_loss", e.val_loss}});
        j["epochs"] = epochs;
        out << j.dump() << "\n";
    }
}

inline std::string report_jsonl(const RunReport& report) {
    std::ostringstream out;
    write_report_jsonl(report, out);
    return out.str();
}

// Rebuilds a RunReport from its JSON-lines form (lines must share one run).
inline RunReport parse_report_jsonl(std::istream& in) {
    RunReport report;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.at("schema").get<std::string>() != "flowcast-report-v1")
            throw std::runtime_error("report: unknown schema");
        if (first) {
            report.model = j.at("model").get<std::string>();
            report.input_len = j.at("T").get<int>();
            report.seed = j.at("seed").get<std::uint64_t>();
            report.config_digest = j.at("config_digest").get<std::string>();
            first = false;
        }
        HorizonResult h;
        h.horizon = j.at("T_p").get<int>();
        h.metrics = metrics_from_json(j.at("metrics"));
        for (const auto& e : j.at("epochs"))
            h.epochs.push_back(EpochLog{e.at("epoch").get<int>(), e.at("lr").get<double>(),
                                        e.at("train_loss").get<double>(),
                                        e.at("val_loss").get<double>()});
        report.horizons.push_back(std::move(h));
    }
    return report;
}

}  // namespace flowcast
