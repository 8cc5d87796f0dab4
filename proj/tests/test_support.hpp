#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "isobias/rng.hpp"
#include "isobias/solver.hpp"
#include "isobias/types.hpp"

namespace test_support {

using isobias::Abundance;
using isobias::BiasVector;
using isobias::ReadCounts;
using isobias::Rng;
using isobias::SamplingRateMatrix;
using isobias::Vec;

struct RandomInstance {
    SamplingRateMatrix A;
    ReadCounts n;
    Vec theta_true;
    Vec b_true;
};

struct InstanceOptions {
    std::size_t max_isoforms = 3;
    std::size_t max_categories = 10;
    double zero_rate_prob = 0.2;
    double bias_prob = 0.25;
    double bias_sd = 1.2;
    double depth = 40.0;
};

/// Random feasible instance: rates are sparse-ish and scaled by depth, theta
/// is exponential, a few categories carry a planted bias, counts are Poisson
/// draws from the implied means.
inline RandomInstance make_instance(Rng& rng, const InstanceOptions& opt = {}) {
    for (;;) {
        const std::size_t I = 1 + static_cast<std::size_t>(rng.uniform01() *
                                                           static_cast<double>(opt.max_isoforms));
        const std::size_t min_J = I > 2 ? I : 2;
        const std::size_t span = opt.max_categories - min_J + 1;
        const std::size_t J =
            min_J + static_cast<std::size_t>(rng.uniform01() * static_cast<double>(span));

        SamplingRateMatrix A(I, J);
        for (std::size_t i = 0; i < I; ++i)
            for (std::size_t j = 0; j < J; ++j) {
                const double gate = rng.uniform01();
                A.at(i, j) = gate < opt.zero_rate_prob
                                 ? 0.0
                                 : opt.depth * (0.2 + rng.uniform01());
            }

        Vec theta(I);
        for (double& t : theta) t = 0.2 + rng.exponential();
        Vec b(J, 0.0);
        for (double& v : b)
            if (rng.uniform01() < opt.bias_prob) v = rng.normal(0.0, opt.bias_sd);

        ReadCounts n;
        n.counts.resize(J);
        bool feasible = true;
        for (std::size_t j = 0; j < J; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < I; ++i) mu += theta[i] * A.at(i, j);
            n.counts[j] = rng.poisson(mu * std::exp(b[j]));
            if (n.counts[j] > 0 && mu == 0.0) feasible = false;
        }
        bool live_isoform = true;
        for (std::size_t i = 0; i < I; ++i)
            if (A.row_sum(i) == 0.0) live_isoform = false;
        if (feasible && live_isoform && n.total() > 0)
            return {std::move(A), std::move(n), std::move(theta), std::move(b)};
    }
}

inline Vec random_theta(Rng& rng, std::size_t I) {
    Vec theta(I);
    for (double& t : theta) t = 0.05 + rng.exponential();
    return theta;
}

inline Vec random_bias(Rng& rng, std::size_t J, double sd = 0.8) {
    Vec b(J);
    for (double& v : b) v = rng.normal(0.0, sd);
    return b;
}

/// Plain EM (b = 0) iterated from the standard initializer all the way to a
/// bitwise fixed point of the update map, so comparisons between equivalent
/// representations are not polluted by stopping-time differences.
inline Abundance em_fixed_point(const ReadCounts& n, const SamplingRateMatrix& A,
                                int max_iters = 200000) {
    double total_rate = 0.0;
    for (double r : A.rates) total_rate += r;
    const double start =
        total_rate > 0.0 ? static_cast<double>(n.total()) / total_rate : 0.0;
    Abundance theta{Vec(A.isoforms, start)};
    const BiasVector zero_bias{Vec(A.categories, 0.0)};
    for (int iter = 0; iter < max_iters; ++iter) {
        Abundance next = isobias::em_update_theta(theta, zero_bias, n, A);
        if (next.theta == theta.theta) break;
        theta = std::move(next);
    }
    return theta;
}

/// Independent scalar evaluation of the bias-extended Poisson log-likelihood,
/// kept deliberately separate from the library implementation.
inline double reference_log_likelihood(const Vec& theta, const Vec& b,
                                       const std::vector<std::int64_t>& n,
                                       const std::vector<Vec>& rate_rows) {
    long double total = 0.0L;
    const std::size_t J = n.size();
    for (std::size_t j = 0; j < J; ++j) {
        long double mean = 0.0L;
        for (std::size_t i = 0; i < rate_rows.size(); ++i)
            mean += static_cast<long double>(theta[i]) *
                    static_cast<long double>(rate_rows[i][j]) *
                    std::exp(static_cast<long double>(b[j]));
        if (n[j] > 0)
            total += static_cast<long double>(n[j]) * std::log(mean) - mean;
        else
            total -= mean;
    }
    return static_cast<double>(total);
}

}  // namespace test_support
