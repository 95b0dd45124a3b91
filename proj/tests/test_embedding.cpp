#include <catch_amalgamated.hpp>

#include "flowcast/embedding.hpp"
#include "support/gradcheck.hpp"

using namespace flowcast;

namespace {

TimeFeatureVector feature_vec(int dow, int quarter, int month, int dom, int hour, int doy,
                              int holiday) {
    TimeFeatureVector f{};
    f.day_of_week = dow;
    f.quarter = quarter;
    f.month = month;
    f.day_of_month = dom;
    f.hour_of_day = hour;
    f.day_of_year = doy;
    f.is_holiday = holiday;
    return f;
}

}  // namespace

TEST_CASE("entity embedding returns the indexed table rows") {
    Rng rng(1);
    ParamStore store;
    EmbeddingTables tables(store, "t", 4, rng);
    Tape tape;

    TimeFeatureVector f = feature_vec(2, 3, 8, 15, 7, 227, 1);
    auto vecs = tables.entity_embed(tape, f);
    REQUIRE(vecs.size() == 7);
    for (int k = 0; k < 7; ++k) {
        const Array& row = tape.value(vecs[static_cast<size_t>(k)]);
        REQUIRE(row.rows() == 1);
        REQUIRE(row.cols() == 4);
        const Array& table = tables.table(k).value;
        int idx = f.vocab_index(k);
        for (int c = 0; c < 4; ++c) REQUIRE(row.at(0, c) == table.at(idx, c));
    }
}

TEST_CASE("equal features embed identically") {
    Rng rng(2);
    ParamStore store;
    EmbeddingTables tables(store, "t", 8, rng);
    Tape tape;
    TimeFeatureVector f = feature_vec(0, 1, 2, 3, 4, 40, 0);
    std::vector<TimeFeatureVector> feats = {f, f};
    const Array& out = tape.value(tables.embed_sequence(tape, feats));
    REQUIRE(out.rows() == 2);
    for (int c = 0; c < 8; ++c) REQUIRE(out.at(0, c) == out.at(1, c));
}

TEST_CASE("out-of-vocabulary features are rejected") {
    Rng rng(3);
    ParamStore store;
    EmbeddingTables tables(store, "t", 4, rng);
    Tape tape;
    TimeFeatureVector f = feature_vec(0, 1, 1, 1, 24, 1, 0);  // hour 24
    CHECK_THROWS_WITH(tables.entity_embed(tape, f),
                      Catch::Matchers::ContainsSubstring("hour_of_day"));
}

TEST_CASE("value embedding is causal, length preserving and linear") {
    Rng rng(4);
    ParamStore store;
    ValueEmbedder emb(store, "v", 5, rng);
    Tape tape;

    SECTION("zero input with zero bias gives zero tokens") {
        Var out = emb.embed_sequence(tape, tape.input(Array::zeros(6, 1)));
        for (double v : tape.value(out).data) REQUIRE(v == 0.0);
        REQUIRE(tape.value(out).rows() == 6);
    }
    SECTION("doubling the input doubles the output") {
        Array x(7, 1);
        for (int i = 0; i < 7; ++i) x.at(i, 0) = 0.3 * i - 1.0;
        Array x2 = x;
        for (double& v : x2.data) v *= 2.0;
        const Array& a = tape.value(emb.embed_sequence(tape, tape.input(x)));
        const Array& b = tape.value(emb.embed_sequence(tape, tape.input(x2)));
        for (size_t i = 0; i < a.size(); ++i)
            REQUIRE_THAT(b.data[i], Catch::Matchers::WithinAbs(2.0 * a.data[i], 1e-9));
    }
}

TEST_CASE("kernel (0, 0, 1) copies the sequence") {
    Rng rng(5);
    ParamStore store;
    ValueEmbedder emb(store, "v", 1, rng);
    Param* w = store.find("v.value_conv.w");
    REQUIRE(w != nullptr);
    w->value.data = {0.0, 0.0, 1.0};  // taps ordered oldest to newest

    Tape tape;
    Array x(5, 1);
    x.data = {1.0, 2.0, 3.0, 4.0, 5.0};
    const Array& out = tape.value(emb.embed_sequence(tape, tape.input(x)));
    REQUIRE(out.rows() == 5);
    for (int i = 0; i < 5; ++i) REQUIRE(out.at(i, 0) == x.at(i, 0));
}

TEST_CASE("buffer embedding matches the convolution at one position") {
    Rng rng(6);
    ParamStore store;
    ValueEmbedder emb(store, "v", 3, rng);
    Tape tape;
    Array seq(4, 1);
    seq.data = {0.5, -1.0, 2.0, 0.25};
    const Array& full = tape.value(emb.embed_sequence(tape, tape.input(seq)));

    Array buffer(1, 3);
    buffer.data = {-1.0, 2.0, 0.25};  // x_{t-2}, x_{t-1}, x_t for t = 3
    const Array& one = tape.value(emb.embed_buffer(tape, tape.input(buffer)));
    for (int c = 0; c < 3; ++c)
        REQUIRE_THAT(one.at(0, c), Catch::Matchers::WithinAbs(full.at(3, c), 1e-12));
}

TEST_CASE("composition adds value tokens and features") {
    Rng rng(7);
    Tape tape;
    Array tokens = testsupport::random_array(4, 6, rng);
    SECTION("zero features give the value tokens back") {
        Var out = compose_embedded_input(tape, tape.input(tokens), tape.input(Array::zeros(4, 6)),
                                         0.0, true, rng);
        CHECK(tape.value(out).data == tokens.data);
    }
    SECTION("p = 0 is a deterministic sum") {
        Array feats = testsupport::random_array(4, 6, rng);
        Var out =
            compose_embedded_input(tape, tape.input(tokens), tape.input(feats), 0.0, true, rng);
        for (size_t i = 0; i < tokens.size(); ++i)
            REQUIRE(tape.value(out).data[i] == tokens.data[i] + feats.data[i]);
    }
}

TEST_CASE("composition keeps its expectation under dropout") {
    Rng data_rng(8);
    Array tokens = testsupport::random_array(1, 8, data_rng);
    Array feats = testsupport::random_array(1, 8, data_rng);
    Rng rng(9);
    std::vector<double> mean(8, 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        Tape tape;
        Var out =
            compose_embedded_input(tape, tape.input(tokens), tape.input(feats), 0.1, true, rng);
        for (int c = 0; c < 8; ++c) mean[static_cast<size_t>(c)] += tape.value(out).at(0, c);
    }
    for (int c = 0; c < 8; ++c) {
        double expected = tokens.at(0, c) + feats.at(0, c);
        REQUIRE_THAT(mean[static_cast<size_t>(c)] / draws,
                     Catch::Matchers::WithinAbs(expected, 0.02 * std::max(1.0, std::abs(expected))));
    }
}

TEST_CASE("composition is permutation invariant in the feature vectors") {
    Rng rng(10);
    ParamStore store;
    EmbeddingTables tables(store, "t", 5, rng);
    Tape tape;
    TimeFeatureVector f = feature_vec(4, 2, 5, 20, 13, 140, 1);
    auto vecs = tables.entity_embed(tape, f);

    auto sum_in_order = [&](const std::vector<size_t>& order) {
        Var acc = vecs[order[0]];
        for (size_t i = 1; i < order.size(); ++i) acc = tape.add(acc, vecs[order[i]]);
        return tape.value(acc);
    };
    Array fwd = sum_in_order({0, 1, 2, 3, 4, 5, 6});
    Array rev = sum_in_order({6, 5, 4, 3, 2, 1, 0});
    for (size_t i = 0; i < fwd.size(); ++i)
        REQUIRE_THAT(fwd.data[i], Catch::Matchers::WithinAbs(rev.data[i], 1e-12));
}

TEST_CASE("gradient reaches every table used in a forward pass") {
    Rng rng(11);
    ParamStore store;
    TimeEmbedding emb(store, "in", 6, rng);
    Tape tape;

    std::vector<TimeFeatureVector> feats = {feature_vec(1, 1, 2, 10, 6, 41, 0),
                                            feature_vec(2, 1, 2, 11, 7, 42, 1)};
    Array values(2, 1);
    values.data = {0.4, -0.2};
    Var tokens = emb.encoder_tokens(tape, tape.input(values), feats, 0.0, true, rng);
    Var loss = tape.mse_loss(tokens, tape.input(Array::full(2, 6, 0.7)));
    tape.backward(loss);

    for (int k = 0; k < TimeFeatureVector::kCount; ++k) {
        const Array& g = emb.tables().table(k).grad;
        double norm = 0.0;
        for (double v : g.data) norm += std::abs(v);
        REQUIRE(norm > 0.0);
    }
    double conv_norm = 0.0;
    for (double v : store.find("in.value_conv.w")->grad.data) conv_norm += std::abs(v);
    REQUIRE(conv_norm > 0.0);
}

TEST_CASE("recurrent input construction never consults the sequence index") {
    // identical (value history, features) at different positions embed
    // identically; only the convolution warm-up rows differ
    Rng rng(12);
    ParamStore store;
    TimeEmbedding emb(store, "in", 4, rng);
    Tape tape;
    TimeFeatureVector f = feature_vec(3, 2, 6, 7, 11, 158, 0);
    std::vector<TimeFeatureVector> feats(9, f);
    Var tokens = emb.encoder_tokens(tape, tape.input(Array::full(9, 1, 0.8)), feats, 0.0, false,
                                    rng);
    const Array& v = tape.value(tokens);
    for (int r = 3; r < v.rows(); ++r)
        for (int c = 0; c < v.cols(); ++c) REQUIRE(v.at(r, c) == v.at(2, c));
}

TEST_CASE("positional encoding shape and range") {
    Array pe = sinusoidal_positions(10, 8);
    CHECK(pe.rows() == 10);
    CHECK(pe.cols() == 8);
    CHECK(pe.at(0, 0) == 0.0);  // sin(0)
    CHECK(pe.at(0, 1) == 1.0);  // cos(0)
    for (double v : pe.data) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
}
