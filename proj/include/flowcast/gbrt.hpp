#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/array.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/optim.hpp"

namespace flowcast {
namespace gbrt {

struct TabularData {
    std::vector<std::vector<double>> x;  // row-major samples
    std::vector<double> y;

    size_t size() const { return x.size(); }
    size_t features() const { return x.empty() ? 0 : x[0].size(); }
};

inline std::vector<double> to_features(const TimeFeatureVector& f) {
    std::vector<double> out(TimeFeatureVector::kCount);
    for (int k = 0; k < TimeFeatureVector::kCount; ++k) out[static_cast<size_t>(k)] = f.feature(k);
    return out;
}

struct GradHess {
    std::vector<double> g;
    std::vector<double> h;
};

// Under l = (y - yhat)^2: g_i = 2(yhat_i - y_i) and h_i = 2.
inline GradHess grad_hess_squared_loss(std::span<const double> preds,
                                       std::span<const double> targets) {
    if (preds.size() != targets.size())
        throw std::runtime_error("grad_hess: length mismatch");
    GradHess gh;
    gh.g.resize(preds.size());
    gh.h.assign(preds.size(), 2.0);
    for (size_t i = 0; i < preds.size(); ++i) gh.g[i] = 2.0 * (preds[i] - targets[i]);
    return gh;
}

// Optimal leaf weight for accumulated gradient statistics.
inline double leaf_weight(double g_sum, double h_sum, double lambda) {
    if (h_sum + lambda <= 0.0) throw std::runtime_error("leaf_weight: H + lambda must be > 0");
    return -g_sum / (h_sum + lambda);
}

// Structure score: -1/2 sum_j G_j^2 / (H_j + lambda) + gamma * T_leaves.
inline double structure_score(std::span<const double> leaf_g, std::span<const double> leaf_h,
                              double lambda, double gamma) {
    if (leaf_g.size() != leaf_h.size()) throw std::runtime_error("structure_score: length mismatch");
    double score = 0.0;
    for (size_t j = 0; j < leaf_g.size(); ++j) {
        if (leaf_h[j] + lambda <= 0.0)
            throw std::runtime_error("structure_score: H + lambda must be > 0");
        score -= 0.5 * leaf_g[j] * leaf_g[j] / (leaf_h[j] + lambda);
    }
    return score + gamma * static_cast<double>(leaf_g.size());
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Exact greedy split finding: every candidate feature's samples are visited
// in sorted order and each midpoint between distinct adjacent values is
// scored with the gain formula. Ties keep the lowest feature index, then the
// lowest threshold, so the result is independent of evaluation order.
inline std::optional<Split> best_split(const TabularData& data, std::span<const int> indices,
                                       std::span<const double> g, std::span<const double> h,
                                       std::span<const int> candidate_features, double lambda,
                                       double gamma, double min_child_weight) {
    if (indices.size() < 2) return std::nullopt;
    double g_total = 0.0, h_total = 0.0;
    for (int i : indices) {
        g_total += g[static_cast<size_t>(i)];
        h_total += h[static_cast<size_t>(i)];
    }
    const double parent = g_total * g_total / (h_total + lambda);

    Split best;
    bool found = false;
    std::vector<int> order(indices.begin(), indices.end());
    for (int f : candidate_features) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return data.x[static_cast<size_t>(a)][static_cast<size_t>(f)] <
                   data.x[static_cast<size_t>(b)][static_cast<size_t>(f)];
        });
        double g_left = 0.0, h_left = 0.0;
        for (size_t pos = 0; pos + 1 < order.size(); ++pos) {
            int i = order[pos];
            g_left += g[static_cast<size_t>(i)];
            h_left += h[static_cast<size_t>(i)];
            double lo = data.x[static_cast<size_t>(i)][static_cast<size_t>(f)];
            double hi = data.x[static_cast<size_t>(order[pos + 1])][static_cast<size_t>(f)];
            if (lo == hi) continue;
            double h_right = h_total - h_left;
            if (h_left < min_child_weight || h_right < min_child_weight) continue;
            double g_right = g_total - g_left;
            double gain = 0.5 * (g_left * g_left / (h_left + lambda) +
                                 g_right * g_right / (h_right + lambda) - parent) - gamma;
            if (!found || gain > best.gain) {
                best = Split{f, (lo + hi) / 2.0, gain};
                found = true;
            }
        }
    }
    if (!found || best.gain <= 0.0) return std::nullopt;
    return best;
}

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root

    double predict(std::span<const double> features) const {
        int id = 0;
        while (!nodes[static_cast<size_t>(id)].is_leaf()) {
            const TreeNode& n = nodes[static_cast<size_t>(id)];
            id = features[static_cast<size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<size_t>(id)].weight;
    }

    size_t leaf_count() const {
        size_t n = 0;
        for (const auto& node : nodes)
            if (node.is_leaf()) ++n;
        return n;
    }
};

struct BoostConfig {
    int n_estimators = 1000;
    double learning_rate = 0.1;
    int max_depth = 6;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double lambda = 1.0;
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    std::uint64_t seed = 0;
    int early_stopping_rounds = 3;  // 0 disables

    void validate() const {
        if (n_estimators < 1) throw std::runtime_error("gbrt: n_estimators must be >= 1");
        if (subsample <= 0.0 || subsample > 1.0)
            throw std::runtime_error("gbrt: subsample must be in (0, 1]");
        if (colsample_bytree <= 0.0 || colsample_bytree > 1.0)
            throw std::runtime_error("gbrt: colsample_bytree must be in (0, 1]");
        if (max_depth < 0) throw std::runtime_error("gbrt: max_depth must be >= 0");
    }
};

namespace detail {

inline void grow_node(Tree& tree, int node_id, const TabularData& data, std::vector<int>& indices,
                      std::span<const double> g, std::span<const double> h,
                      std::span<const int> features, const BoostConfig& cfg, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (int i : indices) {
        g_sum += g[static_cast<size_t>(i)];
        h_sum += h[static_cast<size_t>(i)];
    }
    std::optional<Split> split;
    if (depth < cfg.max_depth)
        split = best_split(data, indices, g, h, features, cfg.lambda, cfg.gamma,
                           cfg.min_child_weight);
    if (!split) {
        tree.nodes[static_cast<size_t>(node_id)].feature = -1;
        tree.nodes[static_cast<size_t>(node_id)].weight = leaf_weight(g_sum, h_sum, cfg.lambda);
        return;
    }
    std::vector<int> left, right;
    for (int i : indices) {
        if (data.x[static_cast<size_t>(i)][static_cast<size_t>(split->feature)] < split->threshold)
            left.push_back(i);
        else
            right.push_back(i);
    }
    int l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    int r = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    TreeNode& n = tree.nodes[static_cast<size_t>(node_id)];
    n.feature = split->feature;
    n.threshold = split->threshold;
    n.left = l;
    n.right = r;
    grow_node(tree, l, data, left, g, h, features, cfg, depth + 1);
    grow_node(tree, r, data, right, g, h, features, cfg, depth + 1);
}

}  // namespace detail

// Grows one regression tree with exact greedy splits. Column subsampling
// picks the candidate feature set once per tree.
inline Tree grow_tree(const TabularData& data, std::span<const int> row_indices,
                      std::span<const double> g, std::span<const double> h,
                      const BoostConfig& cfg, Rng& rng) {
    if (row_indices.empty()) throw std::runtime_error("grow_tree: no samples");
    const int total_features = static_cast<int>(data.features());
    int k = std::max(1, static_cast<int>(std::llround(cfg.colsample_bytree * total_features)));
    k = std::min(k, total_features);
    std::vector<int> features;
    if (k == total_features) {
        features.resize(static_cast<size_t>(total_features));
        std::iota(features.begin(), features.end(), 0);
    } else {
        features = rng.sample_without_replacement(total_features, k);
        std::sort(features.begin(), features.end());
    }
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<int> indices(row_indices.begin(), row_indices.end());
    detail::grow_node(tree, 0, data, indices, g, h, features, cfg, 0);
    return tree;
}

// Additive model: prediction = base_score + eta * sum of tree outputs.
struct Ensemble {
    double base_score = 0.0;
    double eta = 0.1;
    std::vector<Tree> trees;

    double predict(std::span<const double> features) const {
        double acc = base_score;
        for (const Tree& t : trees) acc += eta * t.predict(features);
        return acc;
    }

    double predict(const TimeFeatureVector& f) const { return predict(to_features(f)); }
};

struct BoostResult {
    Ensemble model;
    std::vector<double> train_loss;  // mse per round
    std::vector<double> val_loss;    // empty when no validation set
    int best_round = 0;              // rounds kept after early stopping
};

inline double mse(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

// Forward stagewise boosting with row subsampling per round, shrinkage and
// patience-based early stopping on the validation loss (best-round ensemble
// kept).
inline BoostResult boost(const TabularData& train, const TabularData& val,
                         const BoostConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw std::runtime_error("boost: empty training data");
    Rng rng(cfg.seed);

    BoostResult res;
    res.model.eta = cfg.learning_rate;
    res.model.base_score =
        std::accumulate(train.y.begin(), train.y.end(), 0.0) / static_cast<double>(train.size());

    std::vector<double> pred_train(train.size(), res.model.base_score);
    std::vector<double> pred_val(val.size(), res.model.base_score);

    const int n = static_cast<int>(train.size());
    const int rows_per_round = std::max(1, static_cast<int>(std::llround(cfg.subsample * n)));
    EarlyStopper stopper(cfg.early_stopping_rounds);

    for (int round = 1; round <= cfg.n_estimators; ++round) {
        std::vector<int> rows;
        if (rows_per_round == n) {
            rows.resize(static_cast<size_t>(n));
            std::iota(rows.begin(), rows.end(), 0);
        } else {
            rows = rng.sample_without_replacement(n, rows_per_round);
            std::sort(rows.begin(), rows.end());
        }
        GradHess gh = grad_hess_squared_loss(pred_train, train.y);
        Tree tree = grow_tree(train, rows, gh.g, gh.h, cfg, rng);
        for (size_t i = 0; i < train.size(); ++i)
            pred_train[i] += cfg.learning_rate * tree.predict(train.x[i]);
        for (size_t i = 0; i < val.size(); ++i)
            pred_val[i] += cfg.learning_rate * tree.predict(val.x[i]);
        res.model.trees.push_back(std::move(tree));
        res.train_loss.push_back(mse(pred_train, train.y));
        if (!val.y.empty()) {
            double vloss = mse(pred_val, val.y);
            res.val_loss.push_back(vloss);
            if (stopper.observe(round, vloss)) break;
        }
    }
    if (!val.y.empty() && cfg.early_stopping_rounds > 0)
        res.model.trees.resize(static_cast<size_t>(stopper.best_epoch()));
    res.best_round = static_cast<int>(res.model.trees.size());
    return res;
}

// ---- model file: textual tree dump, stable and diffable ----

inline void dump(const Ensemble& e, std::ostream& out) {
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "flowcast-gbrt v1\n";
    out << "base_score " << num(e.base_score) << " learning_rate " << num(e.eta) << " trees "
        << e.trees.size() << "\n";
    for (size_t ti = 0; ti < e.trees.size(); ++ti) {
        const Tree& t = e.trees[ti];
        out << "tree " << ti << " nodes " << t.nodes.size() << "\n";
        for (size_t ni = 0; ni < t.nodes.size(); ++ni) {
            const TreeNode& n = t.nodes[ni];
            if (n.is_leaf()) out << ni << " leaf " << num(n.weight) << "\n";
            else
                out << ni << " split " << n.feature << " " << num(n.threshold) << " " << n.left
                    << " " << n.right << "\n";
        }
    }
}

inline std::string dump(const Ensemble& e) {
    std::ostringstream out;
    dump(e, out);
    return out.str();
}

inline Ensemble parse_dump(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != "flowcast-gbrt v1")
        throw std::runtime_error("gbrt model: unrecognised header '" + header + "'");
    Ensemble e;
    std::string tok;
    size_t tree_count = 0;
    in >> tok >> e.base_score >> tok >> e.eta >> tok >> tree_count;
    for (size_t ti = 0; ti < tree_count; ++ti) {
        size_t idx = 0, node_count = 0;
        in >> tok >> idx >> tok >> node_count;
        Tree t;
        t.nodes.resize(node_count);
        for (size_t ni = 0; ni < node_count; ++ni) {
            size_t id = 0;
            std::string kind;
            in >> id >> kind;
            if (id >= node_count) throw std::runtime_error("gbrt model: node id out of range");
            TreeNode& n = t.nodes[id];
            if (kind == "leaf") {
                n.feature = -1;
                in >> n.weight;
            } else if (kind == "split") {
                in >> n.feature >> n.threshold >> n.left >> n.right;
            } else {
                throw std::runtime_error("gbrt model: unknown node kind '" + kind + "'");
            }
        }
        if (!in) throw std::runtime_error("gbrt model: truncated");
        e.trees.push_back(std::move(t));
    }
    return e;
}

// ---- hyperparameter search (Table-style ranges) ----

struct SearchSpace {
    int min_child_weight_lo = 1, min_child_weight_hi = 5;
    double gamma_lo = 0.0, gamma_hi = 0.5;
    double subsample_lo = 0.5, subsample_hi = 1.0;
    double colsample_lo = 0.5, colsample_hi = 1.0;
    int max_depth_lo = 3, max_depth_hi = 20;
    double learning_rate_lo = 0.0, learning_rate_hi = 0.5;
    std::vector<double> reg_lambda = {0.0, 0.01, 0.1, 1.0, 10.0};
    std::vector<int> n_estimators = {1000, 2000};
    int early_stopping_rounds = 3;
};

inline BoostConfig sample_config(const SearchSpace& space, Rng& rng) {
    BoostConfig cfg;
    cfg.min_child_weight = static_cast<double>(
        space.min_child_weight_lo +
        static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(space.min_child_weight_hi - space.min_child_weight_lo + 1))));
    cfg.gamma = rng.uniform(space.gamma_lo, space.gamma_hi);
    cfg.subsample = rng.uniform(space.subsample_lo, space.subsample_hi);
    cfg.colsample_bytree = rng.uniform(space.colsample_lo, space.colsample_hi);
    cfg.max_depth = space.max_depth_lo +
                    static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(space.max_depth_hi - space.max_depth_lo + 1)));
    cfg.learning_rate = rng.uniform(space.learning_rate_lo, space.learning_rate_hi);
    cfg.lambda = space.reg_lambda[rng.uniform_int(space.reg_lambda.size())];
    cfg.n_estimators = space.n_estimators[rng.uniform_int(space.n_estimators.size())];
    cfg.early_stopping_rounds = space.early_stopping_rounds;
    cfg.seed = rng.next_seed();
    return cfg;
}

struct TuneResult {
    BoostConfig best;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<double> scores;  // mean forward-chaining RMSE per round
};

// Random search scored by k-fold forward chaining: fold k trains on blocks
// before k and validates on block k; the first block is never a validation
// fold, so no configuration is ever scored on data earlier than its training
// span.
inline TuneResult tune_random_search(const TabularData& data, const SearchSpace& space,
                                     int rounds, std::uint64_t seed, int folds = 5) {
    if (folds < 2) throw std::runtime_error("tune: need at least 2 folds");
    if (data.size() < static_cast<size_t>(folds))
        throw std::runtime_error("tune: fewer samples than folds");
    Rng rng(seed);
    TuneResult result;

    const size_t n = data.size();
    std::vector<size_t> block_start(static_cast<size_t>(folds) + 1);
    for (int b = 0; b <= folds; ++b)
        block_start[static_cast<size_t>(b)] = n * static_cast<size_t>(b) / static_cast<size_t>(folds);

    for (int round = 0; round < rounds; ++round) {
        BoostConfig cfg = sample_config(space, rng);
        double score_sum = 0.0;
        for (int k = 1; k < folds; ++k) {
            size_t val_begin = block_start[static_cast<size_t>(k)];
            size_t val_end = block_start[static_cast<size_t>(k) + 1];
            TabularData tr, va;
            for (size_t i = 0; i < val_begin; ++i) {
                tr.x.push_back(data.x[i]);
                tr.y.push_back(data.y[i]);
            }
            for (size_t i = val_begin; i < val_end; ++i) {
                va.x.push_back(data.x[i]);
                va.y.push_back(data.y[i]);
            }
            // forward chaining: training rows all precede the validation block
            if (tr.size() != val_begin)
                throw std::runtime_error("tune: training fold leaked past its validation block");
            BoostResult fit = boost(tr, va, cfg);
            std::vector<double> preds(va.size());
            for (size_t i = 0; i < va.size(); ++i) preds[i] = fit.model.predict(va.x[i]);
            score_sum += std::sqrt(mse(preds, va.y));
        }
        double score = score_sum / static_cast<double>(folds - 1);
        result.scores.push_back(score);
        if (score < result.best_score) {
            result.best_score = score;
            result.best = cfg;
        }
    }
    return result;
}

}  // namespace gbrt
}  // namespace flowcast
