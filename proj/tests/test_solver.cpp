#include <catch2/catch.hpp>

#include <cmath>

#include "isobias/objective.hpp"
#include "isobias/solver.hpp"
#include "test_support.hpp"

using namespace isobias;
using test_support::make_instance;
using test_support::random_bias;
using test_support::random_theta;

TEST_CASE("default lambda is the square root of the largest count") {
    CHECK(default_lambda(ReadCounts{{4, 9, 16}}) == Approx(4.0));
    CHECK(default_lambda(ReadCounts{{0, 0}}) == 0.0);
    CHECK(default_lambda(ReadCounts{{25}}) == Approx(5.0));
}

TEST_CASE("EM update on a single isoform lands on the mean in one sweep") {
    const double N = 7.0;
    const auto A = SamplingRateMatrix::from_rows({{N, N, N, N}});
    const ReadCounts n{{3, 9, 6, 2}};
    const BiasVector b{{0.0, 0.0, 0.0, 0.0}};
    for (double start : {0.01, 1.0, 250.0}) {
        const auto next = em_update_theta(Abundance{{start}}, b, n, A);
        CHECK(next[0] == Approx(20.0 / (4.0 * N)).epsilon(1e-12));
    }
}

TEST_CASE("EM update with zero counts collapses theta to zero") {
    const auto A = SamplingRateMatrix::from_rows({{1.0, 2.0}, {3.0, 1.0}});
    const auto next = em_update_theta(Abundance{{1.0, 2.0}}, BiasVector{{0.0, 0.0}},
                                      ReadCounts{{0, 0}}, A);
    CHECK(next[0] == 0.0);
    CHECK(next[1] == 0.0);
}

TEST_CASE("EM update decouples disjoint categories") {
    const auto A = SamplingRateMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const auto next = em_update_theta(Abundance{{1.0, 1.0}}, BiasVector{{0.0, 0.0}},
                                      ReadCounts{{4, 6}}, A);
    CHECK(next[0] == Approx(4.0));
    CHECK(next[1] == Approx(6.0));
}

TEST_CASE("EM update flags an isoform with zero total rate") {
    const auto A = SamplingRateMatrix::from_rows({{1.0, 1.0}, {0.0, 0.0}});
    CHECK_THROWS_AS(em_update_theta(Abundance{{1.0, 1.0}}, BiasVector{{0.0, 0.0}},
                                    ReadCounts{{4, 6}}, A),
                    degenerate_isoform_error);
}

TEST_CASE("EM never decreases the likelihood with b fixed") {
    Rng rng(505);
    for (int k = 0; k < 100; ++k) {
        const auto inst = make_instance(rng);
        const BiasVector b{random_bias(rng, inst.A.categories, 0.5)};
        Abundance theta{random_theta(rng, inst.A.isoforms)};
        double before = log_likelihood(theta, b, inst.n, inst.A);
        for (int sweep = 0; sweep < 3; ++sweep) {
            theta = em_update_theta(theta, b, inst.n, inst.A);
            const double after = log_likelihood(theta, b, inst.n, inst.A);
            CHECK(after >= before - 1e-9);
            before = after;
        }
    }
}

TEST_CASE("bias update closed form") {
    const auto A = SamplingRateMatrix::from_rows({{10.0}});
    const Abundance theta{{1.0}};

    SECTION("count equal to the mean gives zero bias") {
        for (double lambda : {0.0, 1.0, 50.0}) {
            const auto b = update_b(theta, ReadCounts{{10}}, A, {lambda});
            CHECK(b[0] == 0.0);
        }
    }
    SECTION("unpenalized update is the exact log ratio") {
        const auto b = update_b(theta, ReadCounts{{20}}, A, {0.0});
        CHECK(b[0] == Approx(std::log(2.0)).epsilon(1e-12));
    }
    SECTION("penalized update solves the stationarity equation") {
        const double lambda = 4.0;
        const auto b = update_b(theta, ReadCounts{{20}}, A, {lambda});
        CHECK(b[0] == Approx(std::log(1.6)).epsilon(1e-12));
        const double fitted = 10.0 * std::exp(b[0]);
        CHECK(20.0 - fitted - lambda == Approx(0.0).margin(1e-9));
    }
    SECTION("zero mean with zero count stays at zero") {
        const auto A0 = SamplingRateMatrix::from_rows({{0.0, 5.0}});
        const auto b = update_b(Abundance{{2.0}}, ReadCounts{{0, 10}}, A0, {1.0});
        CHECK(b[0] == 0.0);
    }
    SECTION("zero mean with a positive count is infeasible") {
        const auto A0 = SamplingRateMatrix::from_rows({{0.0, 5.0}});
        CHECK_THROWS_AS(update_b(Abundance{{2.0}}, ReadCounts{{3, 10}}, A0, {1.0}),
                        infeasible_model_error);
    }
}

TEST_CASE("bias update maximizes each separable coordinate") {
    Rng rng(606);
    for (int k = 0; k < 60; ++k) {
        const auto inst = make_instance(rng);
        const Abundance theta{random_theta(rng, inst.A.isoforms)};
        const PenaltyConfig pen{0.3 + rng.exponential(), PenaltyMode::uniform};
        const auto best = update_b(theta, inst.n, inst.A, pen);
        const double best_value = penalized_objective(theta, best, inst.n, inst.A, pen);
        for (int probe = 0; probe < 10; ++probe) {
            BiasVector other = best;
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform01() * double(inst.A.categories));
            other.b[j] += rng.normal(0.0, 0.5);
            CHECK(penalized_objective(theta, other, inst.n, inst.A, pen) <=
                  best_value + 1e-9);
        }
    }
}

TEST_CASE("median centering examples") {
    SECTION("median already zero leaves the state alone") {
        const auto [theta, b] = median_center(Abundance{{1.0}},
                                              BiasVector{{2.0, 0.0, 0.0, 0.0, 0.0}});
        CHECK(theta[0] == 1.0);
        CHECK(b[0] == 2.0);
        CHECK(b[1] == 0.0);
    }
    SECTION("constant bias is absorbed into theta") {
        const auto [theta, b] = median_center(Abundance{{1.0}}, BiasVector{{1.0, 1.0, 1.0}});
        CHECK(theta[0] == Approx(std::exp(1.0)).epsilon(1e-14));
        for (std::size_t j = 0; j < 3; ++j) CHECK(b[j] == 0.0);
    }
    SECTION("even length uses the mean of the two middle order statistics") {
        const auto [theta, b] =
            median_center(Abundance{{2.0}}, BiasVector{{-5.0, 0.0, 0.0, 1.0}});
        CHECK(theta[0] == 2.0);
        CHECK(b[0] == -5.0);
        CHECK(b[3] == 1.0);
    }
}

TEST_CASE("median centering preserves fitted means and the objective") {
    Rng rng(707);
    for (int k = 0; k < 100; ++k) {
        const auto inst = make_instance(rng);
        const Abundance theta{random_theta(rng, inst.A.isoforms)};
        const BiasVector b{random_bias(rng, inst.A.categories)};
        const auto [theta_c, b_c] = median_center(theta, b);

        for (std::size_t j = 0; j < inst.A.categories; ++j) {
            const double before = inst.A.column_dot(theta.theta, j) * std::exp(b[j]);
            const double after = inst.A.column_dot(theta_c.theta, j) * std::exp(b_c[j]);
            if (before > 0.0) CHECK(after == Approx(before).epsilon(1e-12));
        }

        const PenaltyConfig pen{0.5 + rng.exponential(), PenaltyMode::uniform};
        CHECK(penalized_objective(theta_c, b_c, inst.n, inst.A, pen) >=
              penalized_objective(theta, b, inst.n, inst.A, pen) - 1e-9);

        // re-centering is idempotent up to rounding dust
        const auto [theta_cc, b_cc] = median_center(theta_c, b_c);
        double scale = 0.0;
        for (double v : b.b) scale = std::max(scale, std::abs(v));
        for (std::size_t j = 0; j < b_cc.size(); ++j)
            CHECK(std::abs(b_cc[j] - b_c[j]) <= 1e-12 * (1.0 + scale));
    }
}

TEST_CASE("weighted centering never decreases the count-weighted objective") {
    Rng rng(808);
    for (int k = 0; k < 100; ++k) {
        const auto inst = make_instance(rng);
        const Abundance theta{random_theta(rng, inst.A.isoforms)};
        const BiasVector b{random_bias(rng, inst.A.categories)};
        const PenaltyConfig pen{0.2 + rng.exponential(), PenaltyMode::count_weighted};
        const Vec weights = penalty_weights(pen, inst.n);
        const auto [theta_c, b_c] = median_center_weighted(theta, b, weights);
        CHECK(penalized_objective(theta_c, b_c, inst.n, inst.A, pen) >=
              penalized_objective(theta, b, inst.n, inst.A, pen) - 1e-9);
    }
}

TEST_CASE("acs fit on all-zero counts converges immediately to zero") {
    const auto A = SamplingRateMatrix::from_rows({{1.0, 2.0}, {0.5, 1.0}});
    FitConfig cfg;
    const auto result = acs_fit(ReadCounts{{0, 0}}, A, cfg);
    CHECK(result.converged);
    CHECK(result.iterations <= 2);
    CHECK(result.theta_hat[0] == 0.0);
    CHECK(result.theta_hat[1] == 0.0);
    CHECK(result.b_hat[0] == 0.0);
    CHECK(result.support.empty());
}

TEST_CASE("acs fit flags non-convergence instead of throwing") {
    const auto A = SamplingRateMatrix::from_rows({{10.0, 10.0, 10.0, 10.0, 10.0}});
    const ReadCounts n{{74, 10, 9, 11, 8}};
    FitConfig cfg;
    cfg.max_iters = 2;
    const auto result = acs_fit(n, A, cfg);
    CHECK_FALSE(result.converged);
    CHECK(result.iterations == 2);
}

TEST_CASE("bias update satisfies stationarity under count weighting") {
    Rng rng(1313);
    for (int k = 0; k < 50; ++k) {
        const auto inst = make_instance(rng);
        const Abundance theta{random_theta(rng, inst.A.isoforms)};
        const PenaltyConfig pen{0.05 + 0.2 * rng.exponential(), PenaltyMode::count_weighted};
        const auto b = update_b(theta, inst.n, inst.A, pen);
        for (std::size_t j = 0; j < inst.A.categories; ++j) {
            const double mu = inst.A.column_dot(theta.theta, j);
            if (mu == 0.0) continue;
            const double count = static_cast<double>(inst.n[j]);
            const double threshold = pen.lambda * count;
            if (b[j] != 0.0 && b[j] > -max_abs_bias) {
                const double sign = b[j] > 0.0 ? 1.0 : -1.0;
                CHECK(std::abs(count - mu * std::exp(b[j]) - threshold * sign) < 1e-6);
            } else if (b[j] == 0.0) {
                CHECK(std::abs(count - mu) <= threshold + 1e-9);
            }
        }
    }
}

TEST_CASE("acs fit produces a monotone objective trace") {
    Rng rng(909);
    for (int k = 0; k < 60; ++k) {
        const auto inst = make_instance(rng);
        FitConfig cfg;
        cfg.mode = k % 3 == 0 ? FitMode::no_bias : FitMode::one_step;
        if (k % 5 == 0) cfg.penalty = PenaltyMode::count_weighted;
        const auto result = acs_fit(inst.n, inst.A, cfg);
        REQUIRE(result.objective_trace.size() >= 2);
        for (std::size_t s = 1; s < result.objective_trace.size(); ++s)
            CHECK(result.objective_trace[s] >= result.objective_trace[s - 1] - 1e-9);
        CHECK(result.converged);
    }
}

TEST_CASE("acs fit satisfies the stationarity conditions at convergence") {
    Rng rng(1010);
    for (int k = 0; k < 80; ++k) {
        const auto inst = make_instance(rng);
        FitConfig cfg;
        const auto result = acs_fit(inst.n, inst.A, cfg);
        const double lambda = result.lambda;
        for (std::size_t j = 0; j < inst.A.categories; ++j) {
            const double mu = inst.A.column_dot(result.theta_hat.theta, j);
            const double count = static_cast<double>(inst.n[j]);
            if (std::abs(result.b_hat[j]) > cfg.bias_zero_tol) {
                const double sign = result.b_hat[j] > 0.0 ? 1.0 : -1.0;
                CHECK(std::abs(count - mu * std::exp(result.b_hat[j]) - lambda * sign) <
                      1e-6);
            } else if (mu > 0.0) {
                CHECK(std::abs(count - mu) <= lambda + 1e-6);
            }
        }
    }
}

TEST_CASE("no-bias fit on the flat single-isoform design is the count mean") {
    const double N = 50.0;
    const auto A = SamplingRateMatrix::from_rows({{N, N, N, N, N}});
    const ReadCounts n{{370, 45, 52, 49, 61}};
    FitConfig cfg;
    cfg.mode = FitMode::no_bias;
    const auto result = acs_fit(n, A, cfg);
    CHECK(result.theta_hat[0] == Approx(577.0 / (5.0 * N)).epsilon(1e-10));
    CHECK(result.support.empty());
}

TEST_CASE("two-step refit equals plain EM on the column-deleted instance") {
    Rng rng(1111);
    int checked = 0;
    for (int k = 0; k < 120; ++k) {
        const auto inst = make_instance(rng, {.max_isoforms = 3, .max_categories = 8});
        FitConfig cfg;
        cfg.mode = FitMode::two_step;
        FitResult two;
        try {
            two = two_step_fit(inst.n, inst.A, cfg);
        } catch (const identifiability_error&) {
            continue;  // support too large for this draw; exercised elsewhere
        } catch (const degenerate_isoform_error&) {
            continue;  // deleting the support stranded an isoform
        }

        FitConfig first_cfg = cfg;
        first_cfg.mode = FitMode::one_step;
        const auto first = acs_fit(inst.n, inst.A, first_cfg);
        std::vector<bool> drop(inst.A.categories, false);
        for (std::size_t j : first.support) drop[j] = true;

        FitConfig em_cfg = cfg;
        em_cfg.mode = FitMode::no_bias;
        const auto oracle =
            acs_fit(inst.n.without_categories(drop), inst.A.without_categories(drop), em_cfg);
        REQUIRE(oracle.theta_hat.size() == two.theta_hat.size());
        for (std::size_t i = 0; i < oracle.theta_hat.size(); ++i)
            CHECK(std::abs(two.theta_hat[i] - oracle.theta_hat[i]) <= 1e-8);
        ++checked;
    }
    CHECK(checked > 60);
}

TEST_CASE("two-step with no detected outliers matches the plain EM fit") {
    const auto A = SamplingRateMatrix::from_rows({{10.0, 0.0}, {0.0, 10.0}});
    const ReadCounts n{{20, 30}};
    FitConfig cfg;
    cfg.mode = FitMode::two_step;
    const auto two = two_step_fit(n, A, cfg);
    CHECK(two.support.empty());

    cfg.mode = FitMode::no_bias;
    const auto em = acs_fit(n, A, cfg);
    CHECK(two.theta_hat[0] == Approx(em.theta_hat[0]).epsilon(1e-10));
    CHECK(two.theta_hat[1] == Approx(em.theta_hat[1]).epsilon(1e-10));
    CHECK(two.b_hat[0] == 0.0);
    CHECK(two.b_hat[1] == 0.0);
}

TEST_CASE("two-step removed-category bias equals the log count ratio") {
    const double N = 100.0;
    const auto A = SamplingRateMatrix::from_rows({{N, N, N, N, N}});
    const ReadCounts n{{740, 105, 95, 100, 98}};
    FitConfig cfg;
    cfg.mode = FitMode::two_step;
    const auto two = two_step_fit(n, A, cfg);
    REQUIRE(two.support == std::vector<std::size_t>{0});
    const double mu = two.theta_hat[0] * N;
    CHECK(two.b_hat[0] == Approx(std::log(740.0 / mu)).epsilon(1e-10));
}

TEST_CASE("two-step identifiability violation is a hard error") {
    const auto A = SamplingRateMatrix::from_rows({{10.0, 10.0}, {10.0, 20.0}});
    // one category wildly inflated; support {0} exceeds J - I = 0
    const ReadCounts n{{2000, 30}};
    FitConfig cfg;
    cfg.mode = FitMode::two_step;
    CHECK_THROWS_AS(two_step_fit(n, A, cfg), identifiability_error);
    try {
        two_step_fit(n, A, cfg);
    } catch (const identifiability_error& e) {
        CHECK(!e.offending_categories.empty());
    }
}

TEST_CASE("two-step error shrinks with depth on the flat design") {
    // single-isoform design with an inflated first category, as a quick
    // consistency spot check; the full sweep lives in the acceptance suite
    Rng rng(1212);
    double err_small = 0.0, err_large = 0.0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
        for (double N : {10.0, 1000.0}) {
            SamplingRateMatrix A = SamplingRateMatrix::from_rows({{N, N, N, N, N}});
            ReadCounts n;
            n.counts.resize(5);
            for (std::size_t j = 0; j < 5; ++j) {
                const double mean = j == 0 ? N * std::exp(2.0) : N;
                n.counts[j] = rng.poisson(mean);
            }
            FitConfig cfg;
            cfg.mode = FitMode::two_step;
            const auto result = two_step_fit(n, A, cfg);
            const double err = std::abs(result.theta_hat[0] - 1.0);
            (N == 10.0 ? err_small : err_large) += err / reps;
        }
    }
    CHECK(err_large < err_small);
    CHECK(err_large < 0.05);
}
