#pragma once

#include <cmath>

#include "isobias/types.hpp"

namespace isobias {

/// S_t(x) = sign(x) * (|x| - t)_+ .
inline double soft_threshold(double x, double t) {
    const double mag = std::abs(x) - t;
    if (mag <= 0.0) return 0.0;
    return x < 0.0 ? -mag : mag;
}

/// Poisson log-likelihood with per-category bias,
///   sum_j { n_j ln(sum_i theta_i a_ij e^{b_j}) - sum_i theta_i a_ij e^{b_j} },
/// with the -ln(n_j!) constant dropped. A zero count contributes only the
/// negative mean term (0 * ln 0 == 0).
inline double log_likelihood(const Abundance& theta, const BiasVector& b,
                             const ReadCounts& n, const SamplingRateMatrix& A) {
    if (theta.size() != A.isoforms)
        throw dimension_error("abundance length does not match the number of isoforms");
    if (b.size() != A.categories)
        throw dimension_error("bias length does not match the number of categories");
    if (n.size() != A.categories)
        throw dimension_error("count length does not match the number of categories");

    double ll = 0.0;
    for (std::size_t j = 0; j < A.categories; ++j) {
        const double mean = A.column_dot(theta.theta, j) * std::exp(b[j]);
        if (n[j] > 0) {
            if (!(mean > 0.0))
                throw infeasible_model_error("category " + std::to_string(j) +
                                             " has a positive count but zero fitted mean");
            ll += static_cast<double>(n[j]) * std::log(mean) - mean;
        } else {
            ll -= mean;
        }
    }
    return ll;
}

/// log_likelihood minus lambda * sum_j w_j |b_j|.
inline double penalized_objective(const Abundance& theta, const BiasVector& b,
                                  const ReadCounts& n, const SamplingRateMatrix& A,
                                  const PenaltyConfig& pen) {
    double penalty = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j)
        penalty += penalty_weight(pen, n, j) * std::abs(b[j]);
    return log_likelihood(theta, b, n, A) - pen.lambda * penalty;
}

}  // namespace isobias
