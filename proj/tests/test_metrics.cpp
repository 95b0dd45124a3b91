#include <catch_amalgamated.hpp>

#include "flowcast/array.hpp"
#include "flowcast/metrics.hpp"

using namespace flowcast;

TEST_CASE("clamp_nonnegative") {
    std::vector<double> in = {-3.0, 0.0, 7.0};
    CHECK(clamp_nonnegative(in) == std::vector<double>{0.0, 0.0, 7.0});

    std::vector<double> pos = {1.0, 2.5};
    CHECK(clamp_nonnegative(pos) == pos);

    std::vector<double> negzero = {-0.0};
    auto out = clamp_nonnegative(negzero);
    CHECK(!std::signbit(out[0]));

    std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS(clamp_nonnegative(bad));
}

TEST_CASE("geh scalar values") {
    CHECK(geh(100.0, 100.0) == 0.0);
    CHECK_THAT(geh(110.0, 100.0), Catch::Matchers::WithinAbs(0.9759, 1e-4));
    CHECK(geh(0.0, 0.0) == 0.0);
    CHECK_THROWS(geh(-1.0, 5.0));
}

TEST_CASE("geh is symmetric and scales with sqrt(k)") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        double a = rng.uniform(0.0, 2000.0);
        double b = rng.uniform(0.0, 2000.0);
        double k = rng.uniform(0.01, 50.0);
        REQUIRE_THAT(geh(a, b), Catch::Matchers::WithinAbs(geh(b, a), 1e-12));
        REQUIRE_THAT(geh(k * a, k * b),
                     Catch::Matchers::WithinRel(std::sqrt(k) * geh(a, b) + 1e-300, 1e-9));
    }
}

TEST_CASE("geh classification bands") {
    CHECK(geh_classify(4.9) == GehBand::acceptable);
    CHECK(geh_classify(5.0) == GehBand::acceptable);
    CHECK(geh_classify(5.1) == GehBand::attention);
    CHECK(geh_classify(10.0) == GehBand::attention);
    CHECK(geh_classify(10.1) == GehBand::unacceptable);
}

TEST_CASE("error_metrics on exact predictions") {
    std::vector<double> truth = {10.0, 200.0, 55.0};
    MetricReport r = error_metrics(truth, truth);
    CHECK(r.mae == 0.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.geh_mean == 0.0);
    CHECK(r.geh_acceptable_frac == 1.0);
    CHECK(r.geh_unacceptable_frac == 0.0);
    CHECK(r.n == 3);
}

TEST_CASE("mape_100 filters ground truth at 100 strictly") {
    SECTION("only the pair above 100 qualifies") {
        std::vector<double> truth = {50.0, 200.0};
        std::vector<double> preds = {60.0, 180.0};
        MetricReport r = error_metrics(preds, truth);
        CHECK(r.n_mape == 1);
        REQUIRE(r.mape_100.has_value());
        CHECK_THAT(*r.mape_100, Catch::Matchers::WithinAbs(10.0, 1e-12));
    }
    SECTION("exactly 100 does not exceed 100") {
        std::vector<double> truth = {100.0};
        std::vector<double> preds = {140.0};
        MetricReport r = error_metrics(preds, truth);
        CHECK(r.n_mape == 0);
        CHECK_FALSE(r.mape_100.has_value());
    }
}

TEST_CASE("error_metrics rejects bad input") {
    std::vector<double> a = {1.0, 2.0};
    std::vector<double> b = {1.0};
    CHECK_THROWS(error_metrics(a, b));
    CHECK_THROWS(error_metrics(std::vector<double>{}, std::vector<double>{}));
    std::vector<double> neg = {-1.0, 2.0};
    CHECK_THROWS(error_metrics(neg, a));
}

TEST_CASE("rmse dominates mae on random vectors") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        size_t n = 1 + rng.uniform_int(40);
        std::vector<double> truth(n), preds(n);
        for (size_t i = 0; i < n; ++i) {
            truth[i] = rng.uniform(0.0, 500.0);
            preds[i] = rng.uniform(0.0, 500.0);
        }
        MetricReport r = error_metrics(preds, truth);
        REQUIRE(r.rmse >= r.mae - 1e-12);
    }
}

TEST_CASE("metrics are permutation invariant") {
    Rng rng(123);
    size_t n = 64;
    std::vector<double> truth(n), preds(n);
    for (size_t i = 0; i < n; ++i) {
        truth[i] = rng.uniform(0.0, 400.0);
        preds[i] = rng.uniform(0.0, 400.0);
    }
    MetricReport base = error_metrics(preds, truth);

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<double> truth2(n), preds2(n);
    for (size_t i = 0; i < n; ++i) {
        truth2[i] = truth[order[i]];
        preds2[i] = preds[order[i]];
    }
    MetricReport shuffled = error_metrics(preds2, truth2);
    CHECK_THAT(shuffled.mae, Catch::Matchers::WithinRel(base.mae, 1e-12));
    CHECK_THAT(shuffled.rmse, Catch::Matchers::WithinRel(base.rmse, 1e-12));
    CHECK_THAT(shuffled.geh_mean, Catch::Matchers::WithinRel(base.geh_mean, 1e-12));
    CHECK(shuffled.n_mape == base.n_mape);
}

TEST_CASE("geh fractions count bands") {
    // geh(105,100) ~ 0.35, geh(200,100) ~ 8.16, geh(400,100) ~ 18.97
    std::vector<double> truth = {100.0, 100.0, 100.0};
    std::vector<double> preds = {105.0, 200.0, 400.0};
    MetricReport r = error_metrics(preds, truth);
    CHECK_THAT(r.geh_acceptable_frac, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(r.geh_unacceptable_frac, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}
