#include <doctest.h>

#include <cmath>
#include <numeric>

#include "compgen/error.hpp"
#include "compgen/metrics.hpp"
#include "test_support.hpp"

using namespace compgen;
using compgen::testing::factored_table;
using compgen::testing::full_grid_table;
using compgen::testing::random_factors;

namespace {

EmbeddingTable squared_fixture() {
    // u1[i][t] = sin(1.3 i + 0.7 t + 0.1), u2[j][t] = cos(0.9 j - 0.4 t + 0.2), f = (u1 + u2)^2
    const int n = 4;
    const int d = 6;
    EmbeddingTable t;
    t.n = n;
    t.matrix.resize(n * n, d);
    int r = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j, ++r) {
            for (int c = 0; c < d; ++c) {
                const double v = std::sin(1.3 * i + 0.7 * c + 0.1) + std::cos(0.9 * j - 0.4 * c + 0.2);
                t.matrix(r, c) = v * v;
            }
            t.labels_c1.push_back(i);
            t.labels_c2.push_back(j);
        }
    }
    return t;
}

// permutes whole (c1, c2) pairs across rows so the table stays balanced
void shuffle_labels(EmbeddingTable& t, std::uint64_t seed) {
    std::vector<std::size_t> order(t.labels_c1.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    const auto c1 = t.labels_c1;
    const auto c2 = t.labels_c2;
    for (std::size_t r = 0; r < order.size(); ++r) {
        t.labels_c1[r] = c1[order[r]];
        t.labels_c2[r] = c2[order[r]];
    }
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("R2 is one on exactly factored embeddings") {
        for (int n : {2, 4, 7}) {
            const auto table = full_grid_table(random_factors(n, 9, n), 3, 0.0, 0);
            CHECK(std::abs(linearity_r2(table) - 1.0) <= 1e-9);
        }
    }

    TEST_CASE("R2 of squared factored embeddings matches the frozen estimate") {
        const double r2 = linearity_r2(squared_fixture());
        CHECK(r2 == doctest::Approx(0.446813100367927).epsilon(1e-12));
        CHECK(r2 < 0.99);
    }

    TEST_CASE("R2 is invariant under translation and orthogonal maps") {
        auto table = full_grid_table(random_factors(5, 8, 3), 4, 0.7, 1);
        const double base = linearity_r2(table);
        CHECK(base < 1.0);
        auto moved = table;
        moved.matrix.rowwise() += Eigen::RowVectorXd::Constant(8, 12.5);
        moved.matrix = moved.matrix * compgen::testing::random_orthogonal(8, 4).transpose();
        CHECK(std::abs(linearity_r2(moved) - base) <= 1e-9);
    }

    TEST_CASE("R2 rejects identical embeddings") {
        auto table = full_grid_table(random_factors(3, 4, 1), 2, 0.0, 0);
        table.matrix.setConstant(2.0);
        CHECK_THROWS_AS(linearity_r2(table), Error);
        try {
            linearity_r2(table);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegenerateVariance);
        }
    }

    TEST_CASE("orthogonality of block-disjoint vectors is zero") {
        FactoredModel m;
        m.global_mean = Eigen::VectorXd::Zero(6);
        m.u1 = Eigen::MatrixXd::Zero(3, 6);
        m.u2 = Eigen::MatrixXd::Zero(3, 6);
        m.u1.leftCols(3) = Eigen::MatrixXd::Random(3, 3);
        m.u2.rightCols(3) = Eigen::MatrixXd::Random(3, 3);
        CHECK(orthogonality(m) == 0.0);
        CHECK(orthogonality(m, true) == 0.0);
    }

    TEST_CASE("copied vectors give mean self-cosine") {
        FactoredModel one;
        one.global_mean = Eigen::VectorXd::Zero(3);
        one.u1 = Eigen::RowVector3d(1.0, -2.0, 0.5);
        one.u2 = one.u1;
        CHECK(orthogonality(one) == doctest::Approx(1.0).epsilon(1e-15));

        FactoredModel two;
        two.global_mean = Eigen::VectorXd::Zero(2);
        two.u1.resize(2, 2);
        two.u1 << 1.0, 0.0, -1.0, 0.0;
        two.u2 = two.u1;
        // cos pairs: 1, -1, -1, 1
        CHECK(orthogonality(two) == doctest::Approx(0.0));
        CHECK(orthogonality(two, true) == doctest::Approx(1.0));
    }

    TEST_CASE("orthogonality ignores positive rescaling of each vector") {
        const auto truth = random_factors(4, 5, 8);
        FactoredModel m{truth.mean, truth.u1, truth.u2, 0, 0.0};
        const double base = orthogonality(m);
        Rng rng(2);
        for (Eigen::Index r = 0; r < 4; ++r) {
            m.u1.row(r) *= rng.uniform(0.1, 10.0);
            m.u2.row(r) *= rng.uniform(0.1, 10.0);
        }
        CHECK(orthogonality(m) == doctest::Approx(base).epsilon(1e-12));
    }

    TEST_CASE("orthogonality rejects zero vectors") {
        FactoredModel m;
        m.global_mean = Eigen::VectorXd::Zero(2);
        m.u1 = Eigen::MatrixXd::Zero(2, 2);
        m.u2 = Eigen::MatrixXd::Identity(2, 2);
        try {
            orthogonality(m);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegenerateVector);
        }
    }

    TEST_CASE("zero-shot accuracy examples") {
        const std::vector<int> y1{0, 1, 2, 0, 1, 2};
        const std::vector<int> y2{1, 2, 0, 2, 0, 1};
        std::vector<Combo> perfect;
        std::vector<Combo> constant(6, Combo{0, 0});
        for (std::size_t i = 0; i < y1.size(); ++i) perfect.push_back({y1[i], y2[i]});
        const auto p = zero_shot_accuracy(perfect, y1, y2);
        CHECK(p.c1 == 1.0);
        CHECK(p.c2 == 1.0);
        CHECK(p.mean == 1.0);
        const auto c = zero_shot_accuracy(constant, y1, y2);
        CHECK(c.c1 == doctest::Approx(1.0 / 3.0));
        CHECK(c.c2 == doctest::Approx(1.0 / 3.0));
        CHECK(c.mean == doctest::Approx(1.0 / 3.0));

        std::vector<Combo> mixed = perfect;
        mixed[0].c1 = 2;
        mixed[3].c2 = 0;
        mixed[4].c2 = 1;
        const auto m = zero_shot_accuracy(mixed, y1, y2);
        CHECK(m.mean == (m.c1 + m.c2) / 2.0);

        const std::vector<Combo> none;
        const std::vector<int> empty;
        CHECK_THROWS_AS(zero_shot_accuracy(none, empty, empty), Error);
    }

    TEST_CASE("decodability on separable features") {
        // 450 rows so the default schedule gets enough optimizer steps
        const auto train = compgen::testing::separable_table(3, 50, 0.0);
        const auto heldout = compgen::testing::separable_table(3, 50, 0.5);
        const auto acc = decodability(train, heldout);
        CHECK(acc.c1 >= 0.99);
        CHECK(acc.c2 >= 0.99);
    }

    TEST_CASE("shuffled labels decode at chance") {
        const int n = 8;
        double sum1 = 0.0;
        double sum2 = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto truth = random_factors(n, 10, 300 + seed);
            auto train = full_grid_table(truth, 10, 0.5, seed);
            auto heldout = full_grid_table(truth, 10, 0.5, seed + 50);
            shuffle_labels(train, seed);
            DecodabilityConfig cfg;
            cfg.init_seed = seed;
            cfg.train.shuffle_seed = seed;
            const auto acc = decodability(train, heldout, cfg);
            sum1 += acc.c1;
            sum2 += acc.c2;
        }
        CHECK(std::abs(sum1 / 10.0 - 1.0 / n) <= 0.05);
        CHECK(std::abs(sum2 / 10.0 - 1.0 / n) <= 0.05);
    }

    TEST_CASE("decodability is at least zero-shot accuracy when probes see every combination") {
        const int n = 5;
        const int d = 12;
        double decode = 0.0;
        double zero_shot = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            // factored structure bent by a saturating nonlinearity
            const auto truth = random_factors(n, d, 700 + seed);
            auto bend = [](EmbeddingTable t) {
                t.matrix = (1.5 * t.matrix).array().tanh().matrix();
                return t;
            };
            const auto full = bend(full_grid_table(truth, 8, 0.3, seed));
            const auto heldout = bend(full_grid_table(truth, 8, 0.3, seed + 100));
            DecodabilityConfig cfg;
            cfg.init_seed = seed;
            decode += decodability(full, heldout, cfg).mean() / 10.0;

            const auto split = build_nk_split(n, 2);
            const auto train = bend(factored_table(truth, split.train_combos, 8, 0.3, seed));
            const auto test = bend(factored_table(truth, split.test_combos, 8, 0.3, seed + 200));
            const auto model = recover_from_split(joint_embeddings(train, split.train_combos), n, 2);
            zero_shot += zero_shot_accuracy([&](const Eigen::VectorXd& x) { return classify(model, x); }, test).mean /
                         10.0;
        }
        CHECK(decode >= zero_shot);
    }

    TEST_CASE("decodability rejects mismatched label spaces") {
        const auto a = compgen::testing::separable_table(3, 2, 0.0);
        auto b = compgen::testing::separable_table(3, 2, 0.5);
        b.n = 4;
        CHECK_THROWS_AS(decodability(a, b), Error);
    }

    TEST_CASE("metric report names values in a fixed order") {
        MetricReport r;
        r.zero_shot_acc_c1 = 0.5;
        r.linearity_r2 = 0.9;
        const auto v = r.named_values();
        REQUIRE(v.size() >= 6);
        CHECK(v.front().first == "zero_shot_acc_c1");
        CHECK(v.front().second == 0.5);
    }
}
