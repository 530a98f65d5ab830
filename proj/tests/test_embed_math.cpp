#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ariapipe/embed_math.hpp"
#include "ntxent_oracle.hpp"

using namespace ariapipe::embed;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows random_rows(std::mt19937_64& rng, std::size_t count, std::size_t dim) {
    std::normal_distribution<double> g;
    Rows rows(count, std::vector<double>(dim));
    for (auto& r : rows) {
        for (auto& x : r) x = g(rng);
    }
    return rows;
}

std::vector<double> flatten(const Rows& rows) {
    std::vector<double> out;
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
}

const Rows kOrthogonal{{1, 0}, {0, 1}, {1, 0}, {0, 1}};

}  // namespace

TEST_CASE("cosine examples") {
    const std::vector<double> a{0.6, 0.8};
    const std::vector<double> neg{-0.6, -0.8};
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(cosine_sim(a, neg) == doctest::Approx(-1.0));
    CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_sim(a, a) <= 1.0);
    CHECK_THROWS_AS(cosine_sim(a, std::vector<double>{1, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize(std::vector<double>{0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize(std::vector<double>{NAN, 1}), std::invalid_argument);
}

TEST_CASE("batch construction") {
    std::mt19937_64 rng(1);
    const EmbeddingBatch b(random_rows(rng, 6, 5));
    CHECK(b.pair_count() == 3);
    CHECK(b.partner(0) == 3);
    CHECK(b.partner(4) == 1);
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0;
        for (double x : b.row(i)) s += x * x;
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(EmbeddingBatch(Rows{{1, 0}, {0, 1}, {1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(EmbeddingBatch(Rows{}), std::invalid_argument);
    CHECK_THROWS_AS(EmbeddingBatch(Rows{{1, 0}, {0}}), std::invalid_argument);
}

TEST_CASE("single pair loses exactly zero") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const EmbeddingBatch b(random_rows(rng, 2, 7));
        for (double tau : {1e-3, 0.1, 1.0, 1e6}) {
            CHECK(nt_xent_pairloss(b, 0, 1, tau) == 0.0);
            CHECK(symmetric_loss(b, tau) == 0.0);
            for (double g : symmetric_loss_grad(b, tau).data) CHECK(g == 0.0);
        }
    }
}

TEST_CASE("orthogonal pairs at tau 0.1") {
    const EmbeddingBatch b(kOrthogonal);
    const double want = std::log1p(2 * std::exp(-10.0));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(nt_xent_pairloss(b, i, b.partner(i), 0.1) - want) <= 1e-12 * want);
    }
    CHECK(want == doctest::Approx(9.0800e-5).epsilon(1e-4));
    CHECK(symmetric_loss(b, 0.1) == doctest::Approx(2 * want).epsilon(1e-12));
    CHECK(symmetric_loss(b, 0.1) == doctest::Approx(1.8160e-4).epsilon(1e-4));
}

TEST_CASE("identical vectors give a uniform softmax") {
    const EmbeddingBatch b(Rows(4, {0.3, -0.2, 0.9}));
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (i != j) CHECK(nt_xent_pairloss(b, i, j, 0.5) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(nt_xent_pairloss(b, 1, 1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(nt_xent_pairloss(b, 0, 4, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(nt_xent_pairloss(b, 0, 1, 0.0), std::invalid_argument);
}

TEST_CASE("duplicated files raise the loss") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto base = random_rows(rng, 6, 8);
        Rows dup;
        for (std::size_t k = 0; k < 3; ++k) dup.push_back(base[k]);
        for (std::size_t k = 0; k < 3; ++k) dup.push_back(base[k]);
        for (std::size_t k = 3; k < 6; ++k) dup.push_back(base[k]);
        for (std::size_t k = 3; k < 6; ++k) dup.push_back(base[k]);
        CHECK(symmetric_loss(EmbeddingBatch(dup), 0.1) > symmetric_loss(EmbeddingBatch(base), 0.1));
    }
}

TEST_CASE("matches the long-double oracle") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = static_cast<std::size_t>(1 + rng() % 8);
        const std::size_t d = static_cast<std::size_t>(1 + rng() % 32);
        const auto rows = random_rows(rng, 2 * n, d);
        const EmbeddingBatch b(rows);
        for (double tau : {0.05, 0.1, 0.5, 2.0}) {
            const auto per = pair_losses(b, tau);
            for (std::size_t i = 0; i < 2 * n; ++i) {
                const double want = static_cast<double>(oracle::pairloss(rows, i, b.partner(i), tau));
                CHECK(per[i] == doctest::Approx(want).epsilon(1e-10).scale(1e-12));
            }
            CHECK(symmetric_loss(b, tau) ==
                  doctest::Approx(static_cast<double>(oracle::symmetric(rows, tau))).epsilon(1e-10).scale(1e-12));
        }
    }
}

TEST_CASE("non-negative when the positive is the nearest neighbour") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.01);
    for (int trial = 0; trial < 100; ++trial) {
        auto rows = random_rows(rng, 4, 16);
        for (auto& r : rows) {
            for (auto& x : r) x *= 100;
        }
        for (std::size_t k = 0; k < 4; ++k) {
            rows.push_back(rows[k]);
            for (auto& x : rows.back()) x += g(rng);
        }
        const EmbeddingBatch b(rows);
        for (double l : pair_losses(b, 0.1)) CHECK(l >= 0.0);
    }
}

TEST_CASE("analytic gradient agrees with finite differences") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = static_cast<std::size_t>(2 + rng() % 15);
        const std::size_t d = static_cast<std::size_t>(2 + rng() % 63);
        const auto raw = flatten(random_rows(rng, 2 * n, d));
        const auto r = check_gradient(raw, 2 * n, d, 0.1);
        CHECK(r.max_rel_error <= 1e-5);
        CHECK(r.evaluations == 2 * raw.size());
    }
    // Fixed case: 8 pairs in 16 dimensions.
    std::mt19937_64 fixed(8);
    CHECK(check_gradient(flatten(random_rows(fixed, 16, 16)), 16, 16, 0.1).max_rel_error <= 1e-5);
}

TEST_CASE("gradient of a negation-symmetric batch sums to zero") {
    std::mt19937_64 rng(7);
    auto rows = random_rows(rng, 4, 6);
    for (std::size_t k = 0; k < 4; ++k) {
        rows.push_back(rows[k]);
        for (auto& x : rows.back()) x = -x;
    }
    const auto g = symmetric_loss_grad(EmbeddingBatch(rows), 0.2);
    for (std::size_t t = 0; t < 6; ++t) {
        double s = 0;
        for (std::size_t i = 0; i < 8; ++i) s += g.row(i)[t];
        CHECK(std::abs(s) < 1e-12);
    }
}

TEST_CASE("gradient is orthogonal to each input row") {
    std::mt19937_64 rng(8);
    const auto rows = random_rows(rng, 10, 12);
    const auto g = symmetric_loss_grad(EmbeddingBatch(rows), 0.1);
    for (std::size_t i = 0; i < 10; ++i) {
        double dot = 0;
        for (std::size_t t = 0; t < 12; ++t) dot += g.row(i)[t] * rows[i][t];
        CHECK(std::abs(dot) < 1e-10);
    }
}

TEST_CASE("large temperature approaches the uniform limit") {
    // l = log(2N-1) + (mean_{k != i} s_ik - s_ij) / tau + O(1/tau^2).
    std::mt19937_64 rng(9);
    const double tau = 1e6;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = static_cast<std::size_t>(1 + rng() % 16);
        const EmbeddingBatch b(random_rows(rng, 2 * n, 1 + rng() % 64));
        const auto sim = b.similarity();
        const auto losses = pair_losses(b, tau);
        const double uniform = std::log(2.0 * static_cast<double>(n) - 1.0);
        for (std::size_t i = 0; i < 2 * n; ++i) {
            double mean = 0;
            for (std::size_t k = 0; k < 2 * n; ++k) {
                if (k != i) mean += sim[i * 2 * n + k];
            }
            mean /= static_cast<double>(2 * n - 1);
            const double first_order = (mean - sim[i * 2 * n + b.partner(i)]) / tau;
            CHECK(std::abs(losses[i] - uniform) <= 2.0 / tau + 1e-12);
            CHECK(std::abs(losses[i] - uniform - first_order) <= 1e-11);
        }
    }
}

TEST_CASE("small temperatures stay finite") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = static_cast<std::size_t>(1 + rng() % 16);
        const EmbeddingBatch b(random_rows(rng, 2 * n, 1 + rng() % 64));
        for (double tau : {1e-3, 2e-3, 0.01}) {
            for (double l : pair_losses(b, tau)) {
                CHECK(std::isfinite(l));
            }
            for (double x : symmetric_loss_grad(b, tau).data) CHECK(std::isfinite(x));
        }
    }
}

TEST_CASE("relabelling pairs permutes per-row losses") {
    std::mt19937_64 rng(11);
    const std::size_t n = 6;
    const auto rows = random_rows(rng, 2 * n, 10);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Rows shuffled(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        shuffled[k] = rows[perm[k]];
        shuffled[k + n] = rows[perm[k] + n];
    }
    const EmbeddingBatch a(rows);
    const EmbeddingBatch b(shuffled);
    const auto la = pair_losses(a, 0.1);
    const auto lb = pair_losses(b, 0.1);
    for (std::size_t k = 0; k < n; ++k) {
        CHECK(lb[k] == doctest::Approx(la[perm[k]]).epsilon(1e-12));
        CHECK(lb[k + n] == doctest::Approx(la[perm[k] + n]).epsilon(1e-12));
    }
    CHECK(symmetric_loss(b, 0.1) == doctest::Approx(symmetric_loss(a, 0.1)).epsilon(1e-12));
}

TEST_CASE("mean pooling") {
    const std::vector<double> v{0.6, 0.8};
    CHECK(mean_pool_file_embedding({v}) == v);
    const auto k = mean_pool_file_embedding({v, v, v, v});
    CHECK(k[0] == doctest::Approx(0.6));
    CHECK(k[1] == doctest::Approx(0.8));
    const auto m = mean_pool_file_embedding({{1, 0}, {0, 1}});
    CHECK(m[0] == doctest::Approx(std::sqrt(0.5)));
    CHECK_THROWS_AS(mean_pool_file_embedding({{1, 0}, {-1, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(mean_pool_file_embedding({}), std::invalid_argument);
    CHECK_THROWS_AS(mean_pool_file_embedding({{1, 0}, {1}}), std::invalid_argument);
}
