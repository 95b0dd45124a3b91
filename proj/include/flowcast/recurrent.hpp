#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "flowcast/embedding.hpp"
#include "flowcast/model.hpp"

namespace flowcast {

enum class CellKind { rnn, lstm };

inline CellKind parse_cell_kind(std::string_view s) {
    if (s == "rnn") return CellKind::rnn;
    if (s == "lstm") return CellKind::lstm;
    throw std::runtime_error("unknown cell kind: '" + std::string(s) + "'");
}

// Trainable weights of one recurrent layer. RNN uses the first four slots;
// LSTM carries the eight gate weight blocks and matching biases.
struct RecurrentLayerParams {
    // rnn
    Param *w_i = nullptr, *w_h = nullptr, *b_i = nullptr, *b_h = nullptr;
    // lstm
    Param *w_if = nullptr, *w_hf = nullptr, *b_if = nullptr, *b_hf = nullptr;
    Param *w_ii = nullptr, *w_hi = nullptr, *b_ii = nullptr, *b_hi = nullptr;
    Param *w_ic = nullptr, *w_hc = nullptr, *b_ic = nullptr, *b_hc = nullptr;
    Param *w_io = nullptr, *w_ho = nullptr, *b_io = nullptr, *b_ho = nullptr;
};

inline RecurrentLayerParams create_recurrent_layer(ParamStore& store, const std::string& prefix,
                                                   CellKind kind, int in_width, int hidden,
                                                   Rng& rng) {
    RecurrentLayerParams p;
    auto weight = [&](const std::string& name, int rows) -> Param* {
        return &store.create_fanin_uniform(prefix + "." + name, rows, rows, hidden, rng);
    };
    auto bias = [&](const std::string& name) -> Param* {
        return &store.create_zeros(prefix + "." + name, 1, hidden);
    };
    if (kind == CellKind::rnn) {
        p.w_i = weight("w_i", in_width);
        p.w_h = weight("w_h", hidden);
        p.b_i = bias("b_i");
        p.b_h = bias("b_h");
    } else {
        p.w_if = weight("w_if", in_width);
        p.w_hf = weight("w_hf", hidden);
        p.b_if = bias("b_if");
        p.b_hf = bias("b_hf");
        p.w_ii = weight("w_ii", in_width);
        p.w_hi = weight("w_hi", hidden);
        p.b_ii = bias("b_ii");
        p.b_hi = bias("b_hi");
        p.w_ic = weight("w_ic", in_width);
        p.w_hc = weight("w_hc", hidden);
        p.b_ic = bias("b_ic");
        p.b_hc = bias("b_hc");
        p.w_io = weight("w_io", in_width);
        p.w_ho = weight("w_ho", hidden);
        p.b_io = bias("b_io");
        p.b_ho = bias("b_ho");
    }
    return p;
}

// The same layer bound once onto a tape so repeated steps share leaves.
struct BoundRecurrentLayer {
    CellKind kind;
    Var w_i, w_h, b_i, b_h;
    Var w_if, w_hf, b_if, b_hf;
    Var w_ii, w_hi, b_ii, b_hi;
    Var w_ic, w_hc, b_ic, b_hc;
    Var w_io, w_ho, b_io, b_ho;
};

inline BoundRecurrentLayer bind_layer(Tape& t, const RecurrentLayerParams& p, CellKind kind) {
    BoundRecurrentLayer b;
    b.kind = kind;
    if (kind == CellKind::rnn) {
        b.w_i = t.param(*p.w_i);
        b.w_h = t.param(*p.w_h);
        b.b_i = t.param(*p.b_i);
        b.b_h = t.param(*p.b_h);
    } else {
        b.w_if = t.param(*p.w_if);
        b.w_hf = t.param(*p.w_hf);
        b.b_if = t.param(*p.b_if);
        b.b_hf = t.param(*p.b_hf);
        b.w_ii = t.param(*p.w_ii);
        b.w_hi = t.param(*p.w_hi);
        b.b_ii = t.param(*p.b_ii);
        b.b_hi = t.param(*p.b_hi);
        b.w_ic = t.param(*p.w_ic);
        b.w_hc = t.param(*p.w_hc);
        b.b_ic = t.param(*p.b_ic);
        b.b_hc = t.param(*p.b_hc);
        b.w_io = t.param(*p.w_io);
        b.w_ho = t.param(*p.w_ho);
        b.b_io = t.param(*p.b_io);
        b.b_ho = t.param(*p.b_ho);
    }
    return b;
}

// h = tanh(x W_i + b_i + h_prev W_h + b_h)
inline Var rnn_cell_step(Tape& t, Var x, Var h_prev, const BoundRecurrentLayer& p) {
    Var a = t.add(t.matmul(x, p.w_i), p.b_i);
    Var b = t.add(t.matmul(h_prev, p.w_h), p.b_h);
    return t.tanh_op(t.add(a, b));
}

struct LstmState {
    Var h, c;
};

// Forget/input/output gates and the candidate cell, then
// c = f (.) c_prev + i (.) c~ and h = o (.) tanh(c).
inline LstmState lstm_cell_step(Tape& t, Var x, Var h_prev, Var c_prev,
                                const BoundRecurrentLayer& p) {
    auto gate = [&](Var wi, Var bi, Var wh, Var bh) {
        return t.add(t.add(t.matmul(x, wi), bi), t.add(t.matmul(h_prev, wh), bh));
    };
    Var f = t.sigmoid(gate(p.w_if, p.b_if, p.w_hf, p.b_hf));
    Var i = t.sigmoid(gate(p.w_ii, p.b_ii, p.w_hi, p.b_hi));
    Var ctilde = t.tanh_op(gate(p.w_ic, p.b_ic, p.w_hc, p.b_hc));
    Var c = t.add(t.hadamard(f, c_prev), t.hadamard(i, ctilde));
    Var o = t.sigmoid(gate(p.w_io, p.b_io, p.w_ho, p.b_ho));
    Var h = t.hadamard(o, t.tanh_op(c));
    return {h, c};
}

// Per-layer hidden (and for LSTM cell) state.
struct RecurrentState {
    std::vector<Var> h;
    std::vector<Var> c;
};

inline Var step_layer(Tape& t, Var x, RecurrentState& state, size_t layer,
                      const BoundRecurrentLayer& p) {
    if (p.kind == CellKind::rnn) {
        state.h[layer] = rnn_cell_step(t, x, state.h[layer], p);
    } else {
        LstmState s = lstm_cell_step(t, x, state.h[layer], state.c[layer], p);
        state.h[layer] = s.h;
        state.c[layer] = s.c;
    }
    return state.h[layer];
}

inline RecurrentState zero_state(Tape& t, size_t layers, int batch, int hidden) {
    RecurrentState s;
    for (size_t m = 0; m < layers; ++m) {
        s.h.push_back(t.input(Array::zeros(batch, hidden)));
        s.c.push_back(t.input(Array::zeros(batch, hidden)));
    }
    return s;
}

// Runs the stacked encoder over the step inputs. Dropout sits between layers,
// not after the last, with a fresh mask per step. Returns the per-layer
// states after the final step.
inline RecurrentState encode(Tape& t, const std::vector<Var>& step_inputs,
                             const std::vector<BoundRecurrentLayer>& layers, int hidden,
                             double dropout_p, bool train, Rng& rng) {
    if (step_inputs.empty()) throw std::runtime_error("encode: empty input sequence");
    const int batch = t.value(step_inputs[0]).rows();
    RecurrentState state = zero_state(t, layers.size(), batch, hidden);
    std::vector<Var> current = step_inputs;
    for (size_t m = 0; m < layers.size(); ++m) {
        for (auto& x : current) {
            x = step_layer(t, x, state, m, layers[m]);
            if (m + 1 < layers.size()) x = t.dropout(x, dropout_p, train, rng);
        }
    }
    return state;
}

// Supplies the decoder input for target step `next_step` given the previous
// step's prediction (B x 1).
using StepEmbedder = std::function<Var(Tape&, Var prev_prediction, size_t next_step)>;

// Recursive stepwise decoding: each step runs the stacked cells, projects the
// top hidden state to a scalar, and feeds that scalar (re-embedded) forward.
// When `teacher` is set the ground truth replaces the model's own prediction
// as the next input (diagnostic mode).
inline std::vector<Var> decode_recursive(Tape& t, RecurrentState state, size_t horizon,
                                         const std::vector<BoundRecurrentLayer>& layers,
                                         Var first_input, const StepEmbedder& embed_step,
                                         Var proj_w, Var proj_b, double dropout_p, bool train,
                                         Rng& rng, const Array* teacher = nullptr) {
    if (horizon < 1) throw std::runtime_error("decode: horizon must be >= 1");
    std::vector<Var> predictions;
    predictions.reserve(horizon);
    Var x = first_input;
    for (size_t k = 0; k < horizon; ++k) {
        Var top;
        for (size_t m = 0; m < layers.size(); ++m) {
            top = step_layer(t, x, state, m, layers[m]);
            if (m + 1 < layers.size()) top = t.dropout(top, dropout_p, train, rng);
            x = top;
        }
        Var pred = t.add(t.matmul(state.h[layers.size() - 1], proj_w), proj_b);
        predictions.push_back(pred);
        if (k + 1 < horizon) {
            Var feed = pred;
            if (teacher) {
                Array col(teacher->rows(), 1);
                for (int r = 0; r < teacher->rows(); ++r) col.at(r, 0) = teacher->at(r, static_cast<int>(k));
                feed = t.input(col);
            }
            x = embed_step(t, feed, k + 1);
        }
    }
    return predictions;
}

struct Seq2SeqConfig {
    CellKind cell_kind = CellKind::lstm;
    int layers = 3;
    int hidden = 512;
    double dropout_p = 0.1;
    bool time_embedding = false;

    void validate() const {
        if (layers < 1) throw std::runtime_error("seq2seq: layers must be >= 1");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw std::runtime_error("seq2seq: dropout must be in [0, 1)");
        if (hidden < 1) throw std::runtime_error("seq2seq: hidden width must be >= 1");
    }
};

// Multilayer Seq2Seq RNN/LSTM with optional time embedding. Plain variants
// lift the raw standardized scalar to the hidden width with a learned linear
// map; embedded variants run the shared input construction at width = hidden.
class RecurrentForecaster : public NeuralForecaster {
public:
    RecurrentForecaster(Seq2SeqConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int width = cfg_.hidden;
        if (cfg_.time_embedding) embedding_.emplace(store_, "input", width, rng);
        else {
            lift_w_ = &store_.create_fanin_uniform("input.lift.w", 1, 1, width, rng);
            lift_b_ = &store_.create_zeros("input.lift.b", 1, width);
        }
        for (int m = 0; m < cfg_.layers; ++m) {
            encoder_.push_back(create_recurrent_layer(store_, "enc.l" + std::to_string(m),
                                                      cfg_.cell_kind, width, cfg_.hidden, rng));
            decoder_.push_back(create_recurrent_layer(store_, "dec.l" + std::to_string(m),
                                                      cfg_.cell_kind, width, cfg_.hidden, rng));
        }
        proj_w_ = &store_.create_fanin_uniform("proj.w", cfg_.hidden, cfg_.hidden, 1, rng);
        proj_b_ = &store_.create_zeros("proj.b", 1, 1);
    }

    ParamStore& params() override { return store_; }
    bool wants_time_features() const override { return cfg_.time_embedding; }
    const Seq2SeqConfig& config() const { return cfg_; }

    Var forward(Tape& t, const WindowBatch& batch, bool train, Rng& rng) override {
        return run(t, batch, train, rng, nullptr);
    }

    // Teacher-forced decoding for diagnostics: step t's input comes from the
    // ground truth instead of the previous prediction.
    Var forward_teacher_forced(Tape& t, const WindowBatch& batch, bool train, Rng& rng) {
        return run(t, batch, train, rng, &batch.targets);
    }

private:
    Var run(Tape& t, const WindowBatch& batch, bool train, Rng& rng, const Array* teacher) {
        const int B = batch.batch_size();
        const int T = batch.input_len();
        const size_t Tp = static_cast<size_t>(batch.horizon());

        std::vector<BoundRecurrentLayer> enc, dec;
        for (auto& l : encoder_) enc.push_back(bind_layer(t, l, cfg_.cell_kind));
        for (auto& l : decoder_) dec.push_back(bind_layer(t, l, cfg_.cell_kind));
        Var proj_w = t.param(*proj_w_);
        Var proj_b = t.param(*proj_b_);

        // Encoder step inputs and the decoder's first input (the last encoder
        // step's embedded vector).
        std::vector<Var> steps;
        steps.reserve(static_cast<size_t>(T));
        Var lift_w, lift_b;
        if (cfg_.time_embedding) {
            if (batch.input_feats.empty())
                throw std::runtime_error("recurrent: batch lacks time features");
            std::vector<Var> window_tokens;
            window_tokens.reserve(static_cast<size_t>(B));
            for (int b = 0; b < B; ++b) {
                Array col(T, 1);
                for (int c = 0; c < T; ++c) col.at(c, 0) = batch.inputs.at(b, c);
                window_tokens.push_back(embedding_->encoder_tokens(
                    t, t.input(std::move(col)), batch.input_feats[static_cast<size_t>(b)],
                    cfg_.dropout_p, train, rng));
            }
            for (int c = 0; c < T; ++c) {
                std::vector<Var> rows;
                rows.reserve(static_cast<size_t>(B));
                for (int b = 0; b < B; ++b)
                    rows.push_back(t.slice(window_tokens[static_cast<size_t>(b)], 0, c, 1));
                steps.push_back(t.concat(rows, 0));
            }
        } else {
            lift_w = t.param(*lift_w_);
            lift_b = t.param(*lift_b_);
            Var inputs = t.input(batch.inputs);
            for (int c = 0; c < T; ++c)
                steps.push_back(t.add(t.matmul(t.slice(inputs, 1, c, 1), lift_w), lift_b));
        }

        RecurrentState state =
            encode(t, steps, enc, cfg_.hidden, cfg_.dropout_p, train, rng);

        // Rolling buffer of the last three decoder outputs for the
        // convolutional re-embedding; zero history at the start.
        std::deque<Var> recent;
        StepEmbedder embed_step = [&](Tape& tape, Var prev, size_t next_step) -> Var {
            if (!cfg_.time_embedding)
                return tape.add(tape.matmul(prev, lift_w), lift_b);
            recent.push_back(prev);
            while (recent.size() > 3) recent.pop_front();
            std::vector<Var> cols;
            for (size_t pad = recent.size(); pad < 3; ++pad)
                cols.push_back(tape.input(Array::zeros(B, 1)));
            for (Var v : recent) cols.push_back(v);
            Var buffer = tape.concat(cols, 1);
            std::vector<TimeFeatureVector> feats;
            feats.reserve(static_cast<size_t>(B));
            for (int b = 0; b < B; ++b)
                feats.push_back(batch.target_feats[static_cast<size_t>(b)][next_step]);
            return embedding_->decoder_step_tokens(tape, buffer, feats, cfg_.dropout_p, train,
                                                   rng);
        };

        Var first = steps.back();
        std::vector<Var> preds = decode_recursive(t, std::move(state), Tp, dec, first,
                                                  embed_step, proj_w, proj_b, cfg_.dropout_p,
                                                  train, rng, teacher);
        return t.concat(preds, 1);
    }

    Seq2SeqConfig cfg_;
    ParamStore store_;
    std::optional<TimeEmbedding> embedding_;
    Param* lift_w_ = nullptr;
    Param* lift_b_ = nullptr;
    std::vector<RecurrentLayerParams> encoder_;
    std::vector<RecurrentLayerParams> decoder_;
    Param* proj_w_ = nullptr;
    Param* proj_b_ = nullptr;
};

}  // namespace flowcast
