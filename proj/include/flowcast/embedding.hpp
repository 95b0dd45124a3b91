#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "flowcast/autodiff.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/optim.hpp"

namespace flowcast {

// One learnable table per calendar feature: a one-hot lookup followed by a
// linear projection collapses to selecting the table row. Rows are drawn from
// the standard normal so summed features stay on the scale of standardized
// flow values.
class EmbeddingTables {
public:
    EmbeddingTables(ParamStore& store, const std::string& prefix, int width, Rng& rng)
        : width_(width) {
        for (int k = 0; k < TimeFeatureVector::kCount; ++k)
            tables_[static_cast<size_t>(k)] = &store.create_normal(
                prefix + ".embed." + TimeFeatureVector::name(k), TimeFeatureVector::kVocab[k],
                width, rng);
    }

    int width() const { return width_; }
    Param& table(int k) { return *tables_[static_cast<size_t>(k)]; }

    // The seven embedded vectors for one timestamp, each 1 x d.
    std::vector<Var> entity_embed(Tape& tape, const TimeFeatureVector& f) {
        std::vector<Var> out;
        out.reserve(TimeFeatureVector::kCount);
        for (int k = 0; k < TimeFeatureVector::kCount; ++k) {
            int idx = f.vocab_index(k);
            if (idx < 0 || idx >= TimeFeatureVector::kVocab[k])
                throw std::runtime_error(std::string("entity_embed: ") + TimeFeatureVector::name(k) +
                                         " value out of vocabulary");
            out.push_back(tape.row_gather(tape.param(table(k)), {idx}));
        }
        return out;
    }

    // Sum of the seven feature vectors for each timestamp in a sequence,
    // L x d. One gather per table covers the whole sequence.
    Var embed_sequence(Tape& tape, std::span<const TimeFeatureVector> feats) {
        Var sum{};
        for (int k = 0; k < TimeFeatureVector::kCount; ++k) {
            std::vector<int> idx;
            idx.reserve(feats.size());
            for (const auto& f : feats) {
                int i = f.vocab_index(k);
                if (i < 0 || i >= TimeFeatureVector::kVocab[k])
                    throw std::runtime_error(std::string("entity_embed: ") +
                                             TimeFeatureVector::name(k) + " value out of vocabulary");
                idx.push_back(i);
            }
            Var rows = tape.row_gather(tape.param(table(k)), std::move(idx));
            sum = k == 0 ? rows : tape.add(sum, rows);
        }
        return sum;
    }

private:
    int width_;
    std::array<Param*, TimeFeatureVector::kCount> tables_{};
};

// 1-D convolutional value embedding: kernel width 3, stride 1, causal left
// padding so the token sequence keeps the input length.
class ValueEmbedder {
public:
    static constexpr int kKernelWidth = 3;

    ValueEmbedder(ParamStore& store, const std::string& prefix, int width, Rng& rng)
        : w_(&store.create_fanin_uniform(prefix + ".value_conv.w", kKernelWidth, kKernelWidth,
                                         width, rng)),
          b_(&store.create_zeros(prefix + ".value_conv.b", 1, width)) {}

    // values is L x 1; output is L x d.
    Var embed_sequence(Tape& tape, Var values) {
        return tape.conv1d(values, tape.param(*w_), tape.param(*b_), kKernelWidth, 1,
                           kKernelWidth - 1);
    }

    // One output position of the same convolution: buffer is B x 3 holding
    // [x_{t-2}, x_{t-1}, x_t] per row (zeros where history is short).
    Var embed_buffer(Tape& tape, Var buffer) {
        return tape.add(tape.matmul(buffer, tape.param(*w_)), tape.param(*b_));
    }

private:
    Param* w_;
    Param* b_;
};

// Per step: value token + sum of the seven feature vectors, then dropout.
inline Var compose_embedded_input(Tape& tape, Var value_tokens, Var feature_sum, double p,
                                  bool train, Rng& rng) {
    return tape.dropout(tape.add(value_tokens, feature_sum), p, train, rng);
}

// Fixed sinusoidal position encoding, L x d. Only the attention model carries
// it; recurrent input construction never consults the sequence index.
inline Array sinusoidal_positions(int length, int width) {
    Array pe(length, width);
    for (int pos = 0; pos < length; ++pos)
        for (int i = 0; i < width; ++i) {
            double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
            double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
            pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

// The full input construction shared by the sequence models: convolutional
// value tokens plus entity-embedded time features, summed and regularised.
class TimeEmbedding {
public:
    TimeEmbedding(ParamStore& store, const std::string& prefix, int width, Rng& rng)
        : tables_(store, prefix, width, rng), value_(store, prefix, width, rng) {}

    EmbeddingTables& tables() { return tables_; }
    ValueEmbedder& value_embedder() { return value_; }

    // values L x 1 and matching feature vectors -> L x d model-ready tokens.
    Var encoder_tokens(Tape& tape, Var values, std::span<const TimeFeatureVector> feats,
                       double dropout_p, bool train, Rng& rng) {
        Var tokens = value_.embed_sequence(tape, values);
        Var features = tables_.embed_sequence(tape, feats);
        return compose_embedded_input(tape, tokens, features, dropout_p, train, rng);
    }

    // Decoder-side re-embedding of recent predictions: buffer B x 3 through
    // the shared convolution weights plus this step's features (one vector
    // per batch row).
    Var decoder_step_tokens(Tape& tape, Var buffer, std::span<const TimeFeatureVector> feats,
                            double dropout_p, bool train, Rng& rng) {
        Var tokens = value_.embed_buffer(tape, buffer);
        Var features{};
        for (int k = 0; k < TimeFeatureVector::kCount; ++k) {
            std::vector<int> idx;
            idx.reserve(feats.size());
            for (const auto& f : feats) idx.push_back(f.vocab_index(k));
            Var rows = tape.row_gather(tape.param(tables_.table(k)), std::move(idx));
            features = k == 0 ? rows : tape.add(features, rows);
        }
        return tape.dropout(tape.add(tokens, features), dropout_p, train, rng);
    }

private:
    EmbeddingTables tables_;
    ValueEmbedder value_;
};

}  // namespace flowcast
