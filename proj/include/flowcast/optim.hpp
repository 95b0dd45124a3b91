#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "flowcast/autodiff.hpp"

namespace flowcast {

// Owns named parameters in creation order. Creation order is the checkpoint
// order, which keeps saved files stable across runs.
class ParamStore {
public:
    Param& create(const std::string& name, Array init) {
        if (index_.count(name)) throw std::runtime_error("param already exists: " + name);
        owned_.push_back(std::make_unique<Param>(name, std::move(init)));
        index_[name] = owned_.back().get();
        return *owned_.back();
    }

    Param& create_normal(const std::string& name, int rows, int cols, Rng& rng,
                         double stddev = 1.0) {
        Array a(rows, cols);
        for (double& v : a.data) v = rng.normal() * stddev;
        return create(name, std::move(a));
    }

    // Uniform in +/- 1/sqrt(fan_in); the default for non-embedding weights.
    Param& create_fanin_uniform(const std::string& name, int fan_in, int rows, int cols,
                                Rng& rng) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Array a(rows, cols);
        for (double& v : a.data) v = rng.uniform(-bound, bound);
        return create(name, std::move(a));
    }

    Param& create_zeros(const std::string& name, int rows, int cols) {
        return create(name, Array::zeros(rows, cols));
    }

    Param* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : it->second;
    }

    std::vector<Param*> all() {
        std::vector<Param*> out;
        out.reserve(owned_.size());
        for (auto& p : owned_) out.push_back(p.get());
        return out;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(owned_.size());
        for (auto& p : owned_) out.push_back(p->name);
        return out;
    }

    void zero_grads() {
        for (auto& p : owned_) p->zero_grad();
    }

    std::vector<Array> snapshot() const {
        std::vector<Array> out;
        out.reserve(owned_.size());
        for (auto& p : owned_) out.push_back(p->value);
        return out;
    }

    void restore(const std::vector<Array>& snap) {
        if (snap.size() != owned_.size()) throw std::runtime_error("restore: snapshot mismatch");
        for (size_t i = 0; i < snap.size(); ++i) owned_[i]->value = snap[i];
    }

    // Checkpoint format: a header line, a parameter count, then one line per
    // parameter: `<name> <rows> <cols> <values...>` with %.17g values.
    void save(std::ostream& out) const {
        out << "flowcast-params v1\n" << owned_.size() << "\n";
        char buf[32];
        for (auto& p : owned_) {
            out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols();
            for (double v : p->value.data) {
                std::snprintf(buf, sizeof(buf), " %.17g", v);
                out << buf;
            }
            out << '\n';
        }
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        save(out);
    }

    // Loads values into existing parameters; names and shapes must match.
    void load(std::istream& in) {
        std::string header;
        std::getline(in, header);
        if (header != "flowcast-params v1")
            throw std::runtime_error("checkpoint: unrecognised header '" + header + "'");
        size_t count = 0;
        in >> count;
        if (count != owned_.size())
            throw std::runtime_error("checkpoint: expected " + std::to_string(owned_.size()) +
                                     " params, file has " + std::to_string(count));
        for (size_t i = 0; i < count; ++i) {
            std::string name;
            int rows, cols;
            if (!(in >> name >> rows >> cols)) throw std::runtime_error("checkpoint: truncated");
            Param* p = find(name);
            if (!p) throw std::runtime_error("checkpoint: unknown param '" + name + "'");
            if (p->value.rows() != rows || p->value.cols() != cols)
                throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
            for (double& v : p->value.data)
                if (!(in >> v)) throw std::runtime_error("checkpoint: truncated values");
        }
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
        load(in);
    }

private:
    std::vector<std::unique_ptr<Param>> owned_;
    std::map<std::string, Param*> index_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Aborts visibly on non-finite gradients.
class Adam {
public:
    explicit Adam(std::vector<Param*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (Param* p : params_) {
            moments_.push_back(Array::zeros(p->value.rows(), p->value.cols()));
            moments2_.push_back(Array::zeros(p->value.rows(), p->value.cols()));
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Param& p = *params_[i];
            if (!p.grad.all_finite())
                throw std::runtime_error("adam: non-finite gradient in '" + p.name + "'");
            Array& m = moments_[i];
            Array& v = moments2_[i];
            for (size_t j = 0; j < p.value.size(); ++j) {
                double g = p.grad.data[j];
                m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g;
                v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m.data[j] / bc1;
                double vhat = v.data[j] / bc2;
                p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    long step_count() const { return t_; }

private:
    std::vector<Param*> params_;
    std::vector<Array> moments_;
    std::vector<Array> moments2_;
    AdamConfig cfg_;
    long t_ = 0;
};

// lr(epoch e) = initial * 0.5^(e-1), e counted from 1.
inline double step_decay_lr(double initial_lr, int epoch_index) {
    if (epoch_index < 1) throw std::runtime_error("step_decay_lr: epoch index counts from 1");
    return initial_lr * std::pow(0.5, epoch_index - 1);
}

// Stops after `patience` consecutive validation-loss increases and remembers
// the best epoch so its weights can be restored.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when training should stop.
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
        }
        if (has_prev_ && val_loss > prev_loss_) ++consecutive_rises_;
        else consecutive_rises_ = 0;
        prev_loss_ = val_loss;
        has_prev_ = true;
        return patience_ > 0 && consecutive_rises_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int consecutive_rises_ = 0;
    double prev_loss_ = 0.0;
    bool has_prev_ = false;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
};

}  // namespace flowcast
