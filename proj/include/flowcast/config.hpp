#pragma once

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "flowcast/gbrt.hpp"
#include "flowcast/series.hpp"

namespace flowcast {

enum class ModelKind { rnn, rnn_t, lstm, lstm_t, informer, informer_t, xgboost_t };

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "rnn") return ModelKind::rnn;
    if (s == "rnn-t") return ModelKind::rnn_t;
    if (s == "lstm") return ModelKind::lstm;
    if (s == "lstm-t") return ModelKind::lstm_t;
    if (s == "informer") return ModelKind::informer;
    if (s == "informer-t") return ModelKind::informer_t;
    if (s == "xgboost-t") return ModelKind::xgboost_t;
    throw std::runtime_error("unknown model kind: '" + s + "'");
}

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::rnn: return "rnn";
        case ModelKind::rnn_t: return "rnn-t";
        case ModelKind::lstm: return "lstm";
        case ModelKind::lstm_t: return "lstm-t";
        case ModelKind::informer: return "informer";
        case ModelKind::informer_t: return "informer-t";
        case ModelKind::xgboost_t: return "xgboost-t";
    }
    return "?";
}

// Kinds ending in -t enable time embedding; xgboost-t always has it.
inline bool kind_uses_time_embedding(ModelKind k) {
    return k == ModelKind::rnn_t || k == ModelKind::lstm_t || k == ModelKind::informer_t ||
           k == ModelKind::xgboost_t;
}

inline bool kind_is_neural(ModelKind k) { return k != ModelKind::xgboost_t; }

struct TrainingConfig {
    int batch_size = 32;
    double lr = 1e-4;
    int patience = 3;
    int max_epochs = 100;
    int max_batches_per_epoch = 0;  // 0 = every window every epoch
    int val_max_batches = 0;        // 0 = full validation pass
};

// Neural architecture knobs; recurrent models read the first block, the
// attention model the second.
struct ModelSettings {
    int layers = 3;
    int hidden = 512;
    double dropout_p = 0.1;

    int d_model = 512;
    int heads = 8;
    int enc_layers = 2;
    int dec_layers = 1;
    int d_ff = 2048;
    bool distill = true;
    int label_len = 168;
    double sparsity_c = 5.0;
    bool sparsity_sample_full = false;
};

struct ExperimentConfig {
    std::string dataset_path;
    std::string holiday_path;
    DatasetProfile profile = DatasetProfile::melbourne;
    Minutes interval = 60;
    SplitSpec split;
    ModelKind kind = ModelKind::lstm_t;
    int input_len = 720;  // T; ignored by xgboost-t
    std::vector<int> horizons = {1};
    ModelSettings model;
    TrainingConfig training;
    gbrt::BoostConfig xgb;
    std::uint64_t seed = 0;
    double impute_threshold = 0.05;
    std::vector<std::pair<CivilTime, CivilTime>> eval_ranges;  // optional metric subset

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    std::string digest() const;
};

namespace detail {

inline std::pair<CivilTime, CivilTime> parse_range(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2)
        throw std::runtime_error("config: a date range is a two-element array");
    return {parse_date(j[0].get<std::string>()), parse_date(j[1].get<std::string>())};
}

inline nlohmann::json range_json(const std::pair<CivilTime, CivilTime>& r) {
    return nlohmann::json::array({format_date(r.first), format_date(r.second)});
}

}  // namespace detail

inline nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset_path;
    j["holidays"] = holiday_path;
    j["profile"] = profile == DatasetProfile::melbourne ? "melbourne" : "freeway";
    j["interval_minutes"] = interval;
    j["impute_threshold"] = impute_threshold;
    j["split"]["train"] = detail::range_json({split.train_begin, split.train_end});
    j["split"]["val"] = detail::range_json({split.val_begin, split.val_end});
    j["split"]["test"] = detail::range_json({split.test_begin, split.test_end});
    j["model"]["kind"] = model_kind_name(kind);
    j["model"]["layers"] = model.layers;
    j["model"]["hidden"] = model.hidden;
    j["model"]["dropout_p"] = model.dropout_p;
    j["model"]["d_model"] = model.d_model;
    j["model"]["heads"] = model.heads;
    j["model"]["enc_layers"] = model.enc_layers;
    j["model"]["dec_layers"] = model.dec_layers;
    j["model"]["d_ff"] = model.d_ff;
    j["model"]["distill"] = model.distill;
    j["model"]["label_len"] = model.label_len;
    j["model"]["sparsity_c"] = model.sparsity_c;
    j["model"]["sparsity_sample_full"] = model.sparsity_sample_full;
    j["T"] = input_len;
    j["horizons"] = horizons;
    j["training"]["batch_size"] = training.batch_size;
    j["training"]["lr"] = training.lr;
    j["training"]["patience"] = training.patience;
    j["training"]["max_epochs"] = training.max_epochs;
    j["training"]["max_batches_per_epoch"] = training.max_batches_per_epoch;
    j["training"]["val_max_batches"] = training.val_max_batches;
    j["xgboost"]["n_estimators"] = xgb.n_estimators;
    j["xgboost"]["learning_rate"] = xgb.learning_rate;
    j["xgboost"]["max_depth"] = xgb.max_depth;
    j["xgboost"]["min_child_weight"] = xgb.min_child_weight;
    j["xgboost"]["gamma"] = xgb.gamma;
    j["xgboost"]["reg_lambda"] = xgb.lambda;
    j["xgboost"]["subsample"] = xgb.subsample;
    j["xgboost"]["colsample_bytree"] = xgb.colsample_bytree;
    j["xgboost"]["early_stopping_rounds"] = xgb.early_stopping_rounds;
    j["seed"] = seed;
    if (!eval_ranges.empty()) {
        nlohmann::json ranges = nlohmann::json::array();
        for (const auto& r : eval_ranges) ranges.push_back(detail::range_json(r));
        j["eval_ranges"] = ranges;
    }
    return j;
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.dataset_path = j.value("dataset", std::string{});
    c.holiday_path = j.value("holidays", std::string{});
    if (j.contains("profile")) c.profile = parse_profile(j["profile"].get<std::string>());
    c.interval = j.value("interval_minutes", static_cast<Minutes>(60));
    c.impute_threshold = j.value("impute_threshold", 0.05);

    if (!j.contains("split")) throw std::runtime_error("config: missing split");
    auto train = detail::parse_range(j["split"]["train"]);
    auto val = detail::parse_range(j["split"]["val"]);
    auto test = detail::parse_range(j["split"]["test"]);
    c.split = SplitSpec{train.first, train.second, val.first,
                        val.second,  test.first,   test.second};
    c.split.validate();

    if (!j.contains("model") || !j["model"].contains("kind"))
        throw std::runtime_error("config: missing model.kind");
    const auto& m = j["model"];
    c.kind = parse_model_kind(m["kind"].get<std::string>());
    c.model.layers = m.value("layers", c.model.layers);
    c.model.hidden = m.value("hidden", c.model.hidden);
    c.model.dropout_p = m.value("dropout_p", c.model.dropout_p);
    c.model.d_model = m.value("d_model", c.model.d_model);
    c.model.heads = m.value("heads", c.model.heads);
    c.model.enc_layers = m.value("enc_layers", c.model.enc_layers);
    c.model.dec_layers = m.value("dec_layers", c.model.dec_layers);
    c.model.d_ff = m.value("d_ff", c.model.d_ff);
    c.model.distill = m.value("distill", c.model.distill);
    c.model.label_len = m.value("label_len", c.model.label_len);
    c.model.sparsity_c = m.value("sparsity_c", c.model.sparsity_c);
    c.model.sparsity_sample_full = m.value("sparsity_sample_full", c.model.sparsity_sample_full);

    c.input_len = j.value("T", c.input_len);
    if (j.contains("horizons")) c.horizons = j["horizons"].get<std::vector<int>>();
    for (int h : c.horizons)
        if (h < 1) throw std::runtime_error("config: horizons must be >= 1");

    if (j.contains("training")) {
        const auto& t = j["training"];
        c.training.batch_size = t.value("batch_size", c.training.batch_size);
        c.training.lr = t.value("lr", c.training.lr);
        c.training.patience = t.value("patience", c.training.patience);
        c.training.max_epochs = t.value("max_epochs", c.training.max_epochs);
        c.training.max_batches_per_epoch =
            t.value("max_batches_per_epoch", c.training.max_batches_per_epoch);
        c.training.val_max_batches = t.value("val_max_batches", c.training.val_max_batches);
    }
    if (j.contains("xgboost")) {
        const auto& x = j["xgboost"];
        c.xgb.n_estimators = x.value("n_estimators", c.xgb.n_estimators);
        c.xgb.learning_rate = x.value("learning_rate", c.xgb.learning_rate);
        c.xgb.max_depth = x.value("max_depth", c.xgb.max_depth);
        c.xgb.min_child_weight = x.value("min_child_weight", c.xgb.min_child_weight);
        c.xgb.gamma = x.value("gamma", c.xgb.gamma);
        c.xgb.lambda = x.value("reg_lambda", c.xgb.lambda);
        c.xgb.subsample = x.value("subsample", c.xgb.subsample);
        c.xgb.colsample_bytree = x.value("colsample_bytree", c.xgb.colsample_bytree);
        c.xgb.early_stopping_rounds = x.value("early_stopping_rounds", c.xgb.early_stopping_rounds);
    }
    c.seed = j.value("seed", static_cast<std::uint64_t>(0));
    c.xgb.seed = c.seed;
    if (j.contains("eval_ranges"))
        for (const auto& r : j["eval_ranges"]) c.eval_ranges.push_back(detail::parse_range(r));
    return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

// FNV-1a over the canonical JSON text.
inline std::string ExperimentConfig::digest() const {
    std::string text = to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace flowcast
