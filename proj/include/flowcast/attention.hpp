#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "flowcast/embedding.hpp"
#include "flowcast/model.hpp"

namespace flowcast {

// Sampling factor c and the derived query/key budgets u = ceil(c ln L_Q),
// U = ceil(c ln L_K), both clamped to [1, L]. With sample_full set the
// measurement uses every key, which makes evaluation runs deterministic.
struct SparsityConfig {
    double c = 5.0;
    bool sample_full = false;

    int top_queries(int l_q) const { return budget(l_q); }
    int sampled_keys(int l_k) const { return sample_full ? l_k : budget(l_k); }

private:
    static int clamp_budget(double v, int l) {
        int b = static_cast<int>(std::ceil(v));
        return std::max(1, std::min(b, l));
    }
    int budget(int l) const { return clamp_budget(c * std::log(static_cast<double>(l)), l); }
};

// Max-minus-mean measurement of one query against U sampled keys (all keys
// when U = L_K, which is the exact form).
inline double sparsity_measure(std::span<const double> q, const Array& keys, int sample_count,
                               Rng& rng) {
    const int l_k = keys.rows();
    const int d = keys.cols();
    if (static_cast<int>(q.size()) != d)
        throw std::runtime_error("sparsity_measure: query width mismatch");
    if (sample_count < 1 || sample_count > l_k)
        throw std::runtime_error("sparsity_measure: sample count outside [1, L_K]");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<int> sample;
    if (sample_count == l_k) {
        sample.resize(static_cast<size_t>(l_k));
        std::iota(sample.begin(), sample.end(), 0);
    } else {
        sample = rng.sample_without_replacement(l_k, sample_count);
    }
    double best = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int j : sample) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += q[static_cast<size_t>(k)] * keys.at(j, k);
        dot *= inv_sqrt_d;
        best = std::max(best, dot);
        sum += dot;
    }
    return best - sum / static_cast<double>(sample.size());
}

// Indices of the top-u queries under the sparsity measurement, ascending.
// Ties keep the lower row so the selection is order-independent.
inline std::vector<int> select_top_queries(const Array& queries, const Array& keys, int top_u,
                                           int sample_count, Rng& rng) {
    const int l_q = queries.rows();
    top_u = std::min(top_u, l_q);
    std::vector<double> score(static_cast<size_t>(l_q));
    for (int i = 0; i < l_q; ++i) {
        std::span<const double> q(queries.data.data() + static_cast<size_t>(i) * queries.cols(),
                                  static_cast<size_t>(queries.cols()));
        score[static_cast<size_t>(i)] = sparsity_measure(q, keys, sample_count, rng);
    }
    std::vector<int> order(static_cast<size_t>(l_q));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)]; });
    order.resize(static_cast<size_t>(std::max(top_u, 0)));
    std::sort(order.begin(), order.end());
    return order;
}

// Scaled dot-product attention with an optional additive mask (0 or a large
// negative number per logit).
inline Var dense_attention(Tape& t, Var q, Var k, Var v, const Array* mask = nullptr) {
    const int d = t.value(q).cols();
    Var logits = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    if (mask) logits = t.add(logits, t.input(*mask));
    return t.matmul(t.softmax(logits, 1), v);
}

// ProbSparse attention: only the top-u queries by sparsity measurement get
// softmax attention rows; the rest receive the mean of V, preserving the
// row-stochastic expectation. With u = L_Q and U = L_K this reduces exactly
// to dense attention.
inline Var probsparse_attention(Tape& t, Var q, Var k, Var v, int top_u, int sample_count,
                                Rng& rng) {
    const Array& Q = t.value(q);
    const int l_q = Q.rows();
    Var filler = t.repeat_rows(t.mean_rows(v), l_q);
    if (top_u <= 0) return filler;

    std::vector<int> selected = select_top_queries(Q, t.value(k), top_u, sample_count, rng);
    Var q_bar = t.row_gather(q, selected);
    const int d = Q.cols();
    Var logits =
        t.scale(t.matmul(q_bar, t.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    Var rows = t.matmul(t.softmax(logits, 1), v);
    return t.scatter_rows(filler, selected, rows);
}

struct AttentionParams {
    Param *w_q, *b_q, *w_k, *b_k, *w_v, *b_v, *w_o, *b_o;
};

inline AttentionParams create_attention(ParamStore& store, const std::string& prefix, int d,
                                        Rng& rng) {
    AttentionParams p;
    p.w_q = &store.create_fanin_uniform(prefix + ".w_q", d, d, d, rng);
    p.b_q = &store.create_zeros(prefix + ".b_q", 1, d);
    p.w_k = &store.create_fanin_uniform(prefix + ".w_k", d, d, d, rng);
    p.b_k = &store.create_zeros(prefix + ".b_k", 1, d);
    p.w_v = &store.create_fanin_uniform(prefix + ".w_v", d, d, d, rng);
    p.b_v = &store.create_zeros(prefix + ".b_v", 1, d);
    p.w_o = &store.create_fanin_uniform(prefix + ".w_o", d, d, d, rng);
    p.b_o = &store.create_zeros(prefix + ".b_o", 1, d);
    return p;
}

enum class AttentionMode { probsparse, dense, causal };

inline Array causal_mask(int rows, int cols) {
    Array m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (c > r) m.at(r, c) = -1e30;
    return m;
}

// Heads are independent column slices of shared Q/K/V projections; their
// outputs concatenate back to width d before the output projection.
inline Var multi_head_attention(Tape& t, Var q_in, Var kv_in, const AttentionParams& p,
                                int heads, AttentionMode mode, const SparsityConfig& sparsity,
                                Rng& rng) {
    const int d = t.value(q_in).cols();
    if (d % heads != 0)
        throw std::runtime_error("multi_head: width " + std::to_string(d) +
                                 " not divisible by " + std::to_string(heads) + " heads");
    const int dh = d / heads;
    Var q_all = t.add(t.matmul(q_in, t.param(*p.w_q)), t.param(*p.b_q));
    Var k_all = t.add(t.matmul(kv_in, t.param(*p.w_k)), t.param(*p.b_k));
    Var v_all = t.add(t.matmul(kv_in, t.param(*p.w_v)), t.param(*p.b_v));

    const int l_q = t.value(q_all).rows();
    const int l_k = t.value(k_all).rows();
    Array mask;
    if (mode == AttentionMode::causal) mask = causal_mask(l_q, l_k);

    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var qh = t.slice(q_all, 1, h * dh, dh);
        Var kh = t.slice(k_all, 1, h * dh, dh);
        Var vh = t.slice(v_all, 1, h * dh, dh);
        switch (mode) {
            case AttentionMode::probsparse:
                outs.push_back(probsparse_attention(t, qh, kh, vh, sparsity.top_queries(l_q),
                                                    sparsity.sampled_keys(l_k), rng));
                break;
            case AttentionMode::dense:
                outs.push_back(dense_attention(t, qh, kh, vh));
                break;
            case AttentionMode::causal:
                outs.push_back(dense_attention(t, qh, kh, vh, &mask));
                break;
        }
    }
    Var cat = heads == 1 ? outs[0] : t.concat(outs, 1);
    return t.add(t.matmul(cat, t.param(*p.w_o)), t.param(*p.b_o));
}

struct LayerNormParams {
    Param *gamma, *beta;
};

inline LayerNormParams create_layer_norm(ParamStore& store, const std::string& prefix, int d) {
    LayerNormParams p;
    p.gamma = &store.create(prefix + ".gamma", Array::full(1, d, 1.0));
    p.beta = &store.create_zeros(prefix + ".beta", 1, d);
    return p;
}

inline Var apply_layer_norm(Tape& t, Var x, const LayerNormParams& p) {
    return t.layer_norm(x, t.param(*p.gamma), t.param(*p.beta));
}

struct FeedForwardParams {
    Param *w1, *b1, *w2, *b2;
};

inline FeedForwardParams create_feed_forward(ParamStore& store, const std::string& prefix, int d,
                                             int d_ff, Rng& rng) {
    FeedForwardParams p;
    p.w1 = &store.create_fanin_uniform(prefix + ".w1", d, d, d_ff, rng);
    p.b1 = &store.create_zeros(prefix + ".b1", 1, d_ff);
    p.w2 = &store.create_fanin_uniform(prefix + ".w2", d_ff, d_ff, d, rng);
    p.b2 = &store.create_zeros(prefix + ".b2", 1, d);
    return p;
}

inline Var apply_feed_forward(Tape& t, Var x, const FeedForwardParams& p) {
    Var hidden = t.elu(t.add(t.matmul(x, t.param(*p.w1)), t.param(*p.b1)));
    return t.add(t.matmul(hidden, t.param(*p.w2)), t.param(*p.b2));
}

struct DistillParams {
    Param *conv_w, *conv_b;
};

inline DistillParams create_distill(ParamStore& store, const std::string& prefix, int d,
                                    Rng& rng) {
    DistillParams p;
    p.conv_w = &store.create_fanin_uniform(prefix + ".conv.w", 3 * d, 3 * d, d, rng);
    p.conv_b = &store.create_zeros(prefix + ".conv.b", 1, d);
    return p;
}

// Self-attention distilling: causal conv, activation, then max-pool with
// stride 2 along time. Halves the sequence length (ceiling).
inline Var distill(Tape& t, Var x, const DistillParams& p) {
    if (t.value(x).rows() < 2) throw std::runtime_error("distill: sequence length must be >= 2");
    Var conv = t.conv1d(x, t.param(*p.conv_w), t.param(*p.conv_b), 3, 1, 2);
    return t.max_pool_rows(t.elu(conv));
}

struct InformerConfig {
    int d_model = 512;
    int heads = 8;
    int enc_layers = 2;
    int dec_layers = 1;
    int d_ff = 2048;
    bool distill = true;
    int label_len = 48;
    double dropout_p = 0.1;
    SparsityConfig sparsity;
    bool time_embedding = false;

    void validate() const {
        if (d_model % heads != 0)
            throw std::runtime_error("informer: d_model must be divisible by heads");
        if (enc_layers < 1 || dec_layers < 1)
            throw std::runtime_error("informer: need at least one encoder and decoder layer");
        if (label_len < 0) throw std::runtime_error("informer: label length must be >= 0");
    }
};

struct InformerEncoderLayer {
    AttentionParams attn;
    LayerNormParams ln1, ln2;
    FeedForwardParams ffn;
};

struct InformerDecoderLayer {
    AttentionParams self_attn, cross_attn;
    LayerNormParams ln1, ln2, ln3;
    FeedForwardParams ffn;
};

struct InformerParams {
    std::vector<InformerEncoderLayer> encoder;
    std::vector<DistillParams> distills;
    std::vector<InformerDecoderLayer> decoder;
    LayerNormParams final_ln;
    Param *proj_w, *proj_b;
};

inline InformerParams create_informer(ParamStore& store, const InformerConfig& cfg, Rng& rng) {
    cfg.validate();
    InformerParams p;
    for (int i = 0; i < cfg.enc_layers; ++i) {
        std::string prefix = "enc.l" + std::to_string(i);
        p.encoder.push_back({create_attention(store, prefix + ".attn", cfg.d_model, rng),
                             create_layer_norm(store, prefix + ".ln1", cfg.d_model),
                             create_layer_norm(store, prefix + ".ln2", cfg.d_model),
                             create_feed_forward(store, prefix + ".ffn", cfg.d_model, cfg.d_ff,
                                                 rng)});
        if (cfg.distill && i + 1 < cfg.enc_layers)
            p.distills.push_back(
                create_distill(store, "enc.distill" + std::to_string(i), cfg.d_model, rng));
    }
    for (int i = 0; i < cfg.dec_layers; ++i) {
        std::string prefix = "dec.l" + std::to_string(i);
        p.decoder.push_back({create_attention(store, prefix + ".self", cfg.d_model, rng),
                             create_attention(store, prefix + ".cross", cfg.d_model, rng),
                             create_layer_norm(store, prefix + ".ln1", cfg.d_model),
                             create_layer_norm(store, prefix + ".ln2", cfg.d_model),
                             create_layer_norm(store, prefix + ".ln3", cfg.d_model),
                             create_feed_forward(store, prefix + ".ffn", cfg.d_model, cfg.d_ff,
                                                 rng)});
    }
    p.final_ln = create_layer_norm(store, "final_ln", cfg.d_model);
    p.proj_w = &store.create_fanin_uniform("proj.w", cfg.d_model, cfg.d_model, 1, rng);
    p.proj_b = &store.create_zeros("proj.b", 1, 1);
    return p;
}

// Encoder stack (ProbSparse self-attention, distilling between layers),
// decoder stack (masked self-attention + cross-attention; the mask keeps the
// generative decoder causal), final layer norm and linear projection. The
// last `horizon` positions are the predictions, produced in one pass.
inline Var informer_forward(Tape& t, Var encoder_tokens, Var decoder_tokens, size_t horizon,
                            const InformerParams& p, const InformerConfig& cfg, bool train,
                            Rng& rng) {
    if (horizon < 1) throw std::runtime_error("informer: horizon must be >= 1");
    const int l_dec = t.value(decoder_tokens).rows();
    if (static_cast<int>(horizon) > l_dec)
        throw std::runtime_error("informer: decoder tokens shorter than horizon");

    Var x = encoder_tokens;
    for (size_t i = 0; i < p.encoder.size(); ++i) {
        const auto& layer = p.encoder[i];
        Var a = multi_head_attention(t, x, x, layer.attn, cfg.heads, AttentionMode::probsparse,
                                     cfg.sparsity, rng);
        x = apply_layer_norm(t, t.add(x, t.dropout(a, cfg.dropout_p, train, rng)), layer.ln1);
        Var f = apply_feed_forward(t, x, layer.ffn);
        x = apply_layer_norm(t, t.add(x, t.dropout(f, cfg.dropout_p, train, rng)), layer.ln2);
        if (cfg.distill && i < p.distills.size()) x = distill(t, x, p.distills[i]);
    }

    Var y = decoder_tokens;
    for (const auto& layer : p.decoder) {
        Var a = multi_head_attention(t, y, y, layer.self_attn, cfg.heads, AttentionMode::causal,
                                     cfg.sparsity, rng);
        y = apply_layer_norm(t, t.add(y, t.dropout(a, cfg.dropout_p, train, rng)), layer.ln1);
        Var c = multi_head_attention(t, y, x, layer.cross_attn, cfg.heads, AttentionMode::dense,
                                     cfg.sparsity, rng);
        y = apply_layer_norm(t, t.add(y, t.dropout(c, cfg.dropout_p, train, rng)), layer.ln2);
        Var f = apply_feed_forward(t, y, layer.ffn);
        y = apply_layer_norm(t, t.add(y, t.dropout(f, cfg.dropout_p, train, rng)), layer.ln3);
    }
    y = apply_layer_norm(t, y, p.final_ln);
    Var out = t.add(t.matmul(y, t.param(*p.proj_w)), t.param(*p.proj_b));
    return t.slice(out, 0, l_dec - static_cast<int>(horizon), static_cast<int>(horizon));
}

// Informer with the one-shot generative decoder. Decoder tokens carry a
// label-length warm start copied from the end of the input window followed by
// zero placeholders for the horizon.
class InformerForecaster : public NeuralForecaster {
public:
    InformerForecaster(InformerConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        value_.emplace(store_, "input", cfg_.d_model, rng);
        if (cfg_.time_embedding) tables_.emplace(store_, "input", cfg_.d_model, rng);
        params_ = create_informer(store_, cfg_, rng);
    }

    ParamStore& params() override { return store_; }
    bool wants_time_features() const override { return cfg_.time_embedding; }
    const InformerConfig& config() const { return cfg_; }

    Var forward(Tape& t, const WindowBatch& batch, bool train, Rng& rng) override {
        const int B = batch.batch_size();
        const int T = batch.input_len();
        const int Tp = batch.horizon();
        if (cfg_.label_len > T)
            throw std::runtime_error("informer: label length exceeds the encoder span");
        if (cfg_.time_embedding && batch.input_feats.empty())
            throw std::runtime_error("informer: batch lacks time features");

        Var enc_pos = t.input(sinusoidal_positions(T, cfg_.d_model));
        Var dec_pos = t.input(sinusoidal_positions(cfg_.label_len + Tp, cfg_.d_model));

        std::vector<Var> rows;
        rows.reserve(static_cast<size_t>(B));
        for (int b = 0; b < B; ++b) {
            Array enc_vals(T, 1);
            for (int c = 0; c < T; ++c) enc_vals.at(c, 0) = batch.inputs.at(b, c);
            Array dec_vals(cfg_.label_len + Tp, 1);
            for (int c = 0; c < cfg_.label_len; ++c)
                dec_vals.at(c, 0) = batch.inputs.at(b, T - cfg_.label_len + c);

            Var enc_tok = value_->embed_sequence(t, t.input(std::move(enc_vals)));
            Var dec_tok = value_->embed_sequence(t, t.input(std::move(dec_vals)));
            if (cfg_.time_embedding) {
                const auto& in_f = batch.input_feats[static_cast<size_t>(b)];
                const auto& tg_f = batch.target_feats[static_cast<size_t>(b)];
                std::vector<TimeFeatureVector> dec_f(in_f.end() - cfg_.label_len, in_f.end());
                dec_f.insert(dec_f.end(), tg_f.begin(), tg_f.end());
                enc_tok = t.add(enc_tok, tables_->embed_sequence(t, in_f));
                dec_tok = t.add(dec_tok, tables_->embed_sequence(t, dec_f));
            }
            enc_tok = t.dropout(t.add(enc_tok, enc_pos), cfg_.dropout_p, train, rng);
            dec_tok = t.dropout(t.add(dec_tok, dec_pos), cfg_.dropout_p, train, rng);

            Var out = informer_forward(t, enc_tok, dec_tok, static_cast<size_t>(Tp), params_,
                                       cfg_, train, rng);
            rows.push_back(t.transpose(out));
        }
        return B == 1 ? rows[0] : t.concat(rows, 0);
    }

private:
    InformerConfig cfg_;
    ParamStore store_;
    std::optional<ValueEmbedder> value_;
    std::optional<EmbeddingTables> tables_;
    InformerParams params_;
};

}  // namespace flowcast
