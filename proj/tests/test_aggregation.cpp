#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "san/aggregation.hpp"
#include "test_helpers.hpp"

using namespace san;
using namespace san::testing;

namespace {

FeatureSet make_set(std::size_t n, std::size_t k, std::vector<double> values) {
    return FeatureSet(Tensor({n, k}, std::move(values)));
}

FeatureSet permute_rows(const FeatureSet& set, const std::vector<std::size_t>& perm) {
    Tensor out({set.cardinality(), set.feature_dim()});
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t c = 0; c < set.feature_dim(); ++c)
            out.at(i, c) = set.elements().at(perm[i], c);
    return FeatureSet(std::move(out), set.source_shape());
}

}  // namespace

TEST_CASE("empty and non-finite sets are rejected") {
    CHECK_THROWS_AS(FeatureSet(Tensor({0, 3})), contract_error);
    CHECK_THROWS_AS(FeatureSet(Tensor({1, 1}, {std::nan("")})), domain_error);
}

TEST_CASE("san_aggregate hand-evaluated example") {
    FeatureSet set = make_set(2, 2, {1, 0, 0, 2});
    SanLayer layer{Tensor::matrix(2, 2, {1, 1, -1, 0}), Tensor::vector({0, 1}),
                   Activation::relu};
    Tensor e = san_aggregate(set, layer);
    CHECK(e[0] == doctest::Approx(3.0));
    CHECK(e[1] == doctest::Approx(1.0));

    FeatureSet swapped = make_set(2, 2, {0, 2, 1, 0});
    Tensor e2 = san_aggregate(swapped, layer);
    CHECK(e2[0] == e[0]);
    CHECK(e2[1] == e[1]);
}

TEST_CASE("san_aggregate of the zero singleton with zero bias is zero") {
    FeatureSet set = make_set(1, 2, {0, 0});
    SanLayer layer = SanLayer::glorot(4, 2, Activation::relu, 3);
    Tensor e = san_aggregate(set, layer);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == 0.0);
}

TEST_CASE("san_aggregate rejects mismatched feature dims") {
    FeatureSet set = make_set(2, 3, {1, 2, 3, 4, 5, 6});
    SanLayer layer = SanLayer::glorot(2, 2, Activation::relu, 0);
    CHECK_THROWS_AS(san_aggregate(set, layer), dimension_error);
}

TEST_CASE("pool examples") {
    FeatureSet set = make_set(2, 2, {1, 5, 3, 2});
    Tensor mx = pool(set, PoolKind::max);
    CHECK(mx[0] == 3.0);
    CHECK(mx[1] == 5.0);
    Tensor av = pool(set, PoolKind::avg);
    CHECK(av[0] == 2.0);
    CHECK(av[1] == 3.5);
    Tensor sm = pool(set, PoolKind::sum);
    CHECK(sm[0] == 4.0);
    CHECK(sm[1] == 7.0);
}

TEST_CASE("flatten and conv1x1 baselines") {
    FeatureSet set = make_set(2, 2, {1, 2, 3, 4});
    Tensor flat = flatten_set(set);
    CHECK(flat.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(flat[i] == static_cast<double>(i + 1));

    std::vector<double> w = {1.0, 1.0};
    Tensor c = conv1x1_set(set, w, 0.0);
    CHECK(c[0] == 3.0);
    CHECK(c[1] == 7.0);
    std::vector<double> bad = {1.0};
    CHECK_THROWS_AS(conv1x1_set(set, bad, 0.0), dimension_error);
}

TEST_CASE("attach_positions normalized index") {
    FeatureSet set = make_set(3, 1, {4, 5, 6});
    FeatureSet out = attach_positions(set, PositionalMode::normalized_index);
    CHECK(out.feature_dim() == 2);
    CHECK(out.elements().at(0, 1) == 0.0);
    CHECK(out.elements().at(1, 1) == 0.5);
    CHECK(out.elements().at(2, 1) == 1.0);

    FeatureSet single = make_set(1, 1, {9});
    CHECK(attach_positions(single, PositionalMode::normalized_index).elements().at(0, 1) == 0.0);
}

TEST_CASE("attach_positions normalized 2d grid") {
    FeatureSet set(Tensor({4, 1}, {1, 2, 3, 4}), std::array<std::size_t, 2>{2, 2});
    FeatureSet out = attach_positions(set, PositionalMode::normalized_2d);
    double want[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(out.elements().at(i, 1) == want[i][0]);
        CHECK(out.elements().at(i, 2) == want[i][1]);
    }
    FeatureSet no_shape = make_set(4, 1, {1, 2, 3, 4});
    CHECK_THROWS_AS(attach_positions(no_shape, PositionalMode::normalized_2d), contract_error);
}

TEST_CASE("attach_positions sinusoidal at index 0") {
    FeatureSet set = make_set(2, 1, {1, 2});
    FeatureSet out = attach_positions(set, PositionalMode::sinusoidal, 2);
    CHECK(out.elements().at(0, 1) == 0.0);  // sin 0
    CHECK(out.elements().at(0, 2) == 1.0);  // cos 0
    CHECK_THROWS_AS(attach_positions(set, PositionalMode::sinusoidal, 3), contract_error);
}

TEST_CASE("power_max_approx examples") {
    std::vector<double> v12 = {1.0, 2.0};
    CHECK(power_max_approx(v12, 10.0, MaxApproxMode::power) ==
          doctest::Approx(std::pow(1025.0, 0.1)).epsilon(1e-12));

    std::vector<double> v01 = {0.0, 1.0};
    CHECK(power_max_approx(v01, 10.0, MaxApproxMode::log_sum_exp) ==
          doctest::Approx(0.1 * std::log(1.0 + std::exp(10.0))).epsilon(1e-12));

    std::vector<double> single = {5.0};
    CHECK(power_max_approx(single, 7.0, MaxApproxMode::power) == doctest::Approx(5.0));
    CHECK(power_max_approx(single, 7.0, MaxApproxMode::log_sum_exp) == doctest::Approx(5.0));
}

TEST_CASE("power mode rejects non-positive values, LSE survives large p*x") {
    std::vector<double> v = {1.0, -1.0};
    CHECK_THROWS_AS(power_max_approx(v, 2.0, MaxApproxMode::power), domain_error);
    std::vector<double> big = {500.0, 900.0};
    double lse = power_max_approx(big, 10.0, MaxApproxMode::log_sum_exp);
    CHECK(std::isfinite(lse));
    CHECK(lse >= 900.0);
}

TEST_CASE("permutation invariance over random sets") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> nd(1, 64), kd(1, 32);
    for (int rep = 0; rep < 300; ++rep) {
        std::size_t n = nd(rng), k = kd(rng);
        FeatureSet set(random_tensor({n, k}, rng));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        FeatureSet shuffled = permute_rows(set, perm);

        SanLayer layer = SanLayer::glorot(8, k, Activation::relu, rep);
        Tensor a = san_aggregate(set, layer);
        Tensor b = san_aggregate(shuffled, layer);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(std::abs(a[i] - b[i]) <= 1e-9);

        for (PoolKind kind : {PoolKind::max, PoolKind::avg, PoolKind::sum}) {
            Tensor pa = pool(set, kind);
            Tensor pb = pool(shuffled, kind);
            for (std::size_t i = 0; i < pa.size(); ++i)
                CHECK(std::abs(pa[i] - pb[i]) <= 1e-9);
        }
    }
}

TEST_CASE("appending a nonnegative-activation row never decreases ReLU SAN coordinates") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n = 1 + rng() % 10;
        FeatureSet set(random_tensor({n, 3}, rng));
        SanLayer layer = SanLayer::glorot(6, 3, Activation::relu, rep + 1000);
        Tensor before = san_aggregate(set, layer);

        Tensor extended({n + 1, 3});
        for (std::size_t i = 0; i < set.elements().size(); ++i)
            extended[i] = set.elements()[i];
        Tensor row = random_tensor({1, 3}, rng);
        for (std::size_t c = 0; c < 3; ++c) extended.at(n, c) = row[c];
        Tensor after = san_aggregate(FeatureSet(std::move(extended)), layer);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(after[i] >= before[i] - 1e-12);
    }
}

TEST_CASE("power_max_approx sandwich and monotone error in p") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n = 1 + rng() % 12;
        std::vector<double> values(n);
        std::uniform_real_distribution<double> dist(0.1, 5.0);
        for (double& v : values) v = dist(rng);
        double mx = *std::max_element(values.begin(), values.end());

        double prev_err = std::numeric_limits<double>::infinity();
        for (double p : {2.0, 4.0, 8.0, 16.0, 32.0}) {
            double r = power_max_approx(values, p, MaxApproxMode::power);
            CHECK(r >= mx - 1e-12);
            CHECK(r <= mx * std::pow(static_cast<double>(n), 1.0 / p) + 1e-12);
            double err = r - mx;
            CHECK(err <= prev_err + 1e-12);
            prev_err = err;

            double lse = power_max_approx(values, p, MaxApproxMode::log_sum_exp);
            CHECK(lse >= mx - 1e-12);
            CHECK(lse <= mx + std::log(static_cast<double>(n)) / p + 1e-12);
        }
    }
}

TEST_CASE("san_aggregate gradients match finite differences") {
    std::mt19937_64 rng(23);
    const std::size_t n = 5, k = 3, m = 4;
    for (int rep = 0; rep < 20; ++rep) {
        Tensor elements = random_tensor_off_kinks({n, k}, rng);
        Tensor weights = random_tensor_off_kinks({m, k}, rng);
        Tensor bias = random_tensor({m}, rng);

        auto loss_of = [&](const Tensor& e, const Tensor& w, const Tensor& b) {
            Tape tape;
            auto agg = san_aggregate(tape, tape.leaf(e), tape.leaf(w), tape.leaf(b),
                                     Activation::relu);
            return tape.value(tape.sum_all(agg))[0];
        };

        Tape tape;
        auto en = tape.leaf(elements);
        auto wn = tape.leaf(weights);
        auto bn = tape.leaf(bias);
        tape.backward(tape.sum_all(san_aggregate(tape, en, wn, bn, Activation::relu)));

        CHECK(grads_close(tape.grad(en),
                          finite_diff_gradient(
                              [&](const Tensor& e) { return loss_of(e, weights, bias); },
                              elements, 1e-5)));
        CHECK(grads_close(tape.grad(wn),
                          finite_diff_gradient(
                              [&](const Tensor& w) { return loss_of(elements, w, bias); },
                              weights, 1e-5)));
        CHECK(grads_close(tape.grad(bn),
                          finite_diff_gradient(
                              [&](const Tensor& b) { return loss_of(elements, weights, b); },
                              bias, 1e-5)));
    }
}

TEST_CASE("san output dimension is M for every cardinality") {
    std::mt19937_64 rng(31);
    SanLayer layer = SanLayer::glorot(12, 4, Activation::relu, 5);
    for (std::size_t n : {1, 2, 7, 64}) {
        FeatureSet set(random_tensor({n, 4}, rng));
        CHECK(san_aggregate(set, layer).size() == 12);
    }
}
