#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "isobias/objective.hpp"
#include "isobias/types.hpp"

namespace isobias {

enum class FitMode { no_bias, one_step, two_step };
enum class LambdaRule { fixed, max_count_sqrt };

/// Bias magnitudes are clamped here so exp(b) stays inside double range; the
/// clamp is reachable only for unpenalized updates of zero-count categories,
/// whose exact optimum is b = -infinity.
inline constexpr double max_abs_bias = 700.0;

struct FitConfig {
    LambdaRule lambda_rule = LambdaRule::max_count_sqrt;
    double lambda = 0.0;  // used when lambda_rule == fixed
    PenaltyMode penalty = PenaltyMode::uniform;
    int max_iters = 10000;
    double tol = 1e-8;
    double bias_zero_tol = 1e-6;
    FitMode mode = FitMode::one_step;
};

struct FitResult {
    Abundance theta_hat;
    BiasVector b_hat;
    std::vector<std::size_t> support;  // categories with |b_hat| > bias_zero_tol
    Vec objective_trace;               // for two-step fits, the second stage
    bool converged = false;
    int iterations = 0;
    double lambda = 0.0;  // resolved value actually used
};

/// lambda = sqrt(max_j n_j); zero when every count is zero.
inline double default_lambda(const ReadCounts& n) {
    return std::sqrt(static_cast<double>(n.max()));
}

inline double resolve_lambda(const FitConfig& cfg, const ReadCounts& n) {
    return cfg.lambda_rule == LambdaRule::fixed ? cfg.lambda : default_lambda(n);
}

/// One full EM sweep for theta with b fixed. E-step:
/// nhat_ij = n_j theta_i a_ij / sum_i theta_i a_ij (the bias factor cancels);
/// M-step: theta_i' = sum_j nhat_ij / sum_j a_ij e^{b_j}.
inline Abundance em_update_theta(const Abundance& theta, const BiasVector& b,
                                 const ReadCounts& n, const SamplingRateMatrix& A) {
    if (theta.size() != A.isoforms || b.size() != A.categories || n.size() != A.categories)
        throw dimension_error("EM update called with inconsistent dimensions");

    Vec numerator(A.isoforms, 0.0);
    for (std::size_t j = 0; j < A.categories; ++j) {
        if (n[j] == 0) continue;
        const double denom = A.column_dot(theta.theta, j);
        if (!(denom > 0.0))
            throw infeasible_model_error("category " + std::to_string(j) +
                                         " has a positive count but zero expected reads");
        const double scale = static_cast<double>(n[j]) / denom;
        for (std::size_t i = 0; i < A.isoforms; ++i)
            numerator[i] += scale * theta.theta[i] * A.at(i, j);
    }

    Vec next(A.isoforms, 0.0);
    for (std::size_t i = 0; i < A.isoforms; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < A.categories; ++j)
            denom += A.at(i, j) * std::exp(b[j]);
        if (numerator[i] == 0.0) {
            next[i] = 0.0;
            if (denom == 0.0 && A.row_sum(i) == 0.0)
                throw degenerate_isoform_error("isoform " + std::to_string(i) +
                                               " has zero total sampling rate");
            continue;
        }
        if (!(denom > 0.0))
            throw degenerate_isoform_error("isoform " + std::to_string(i) +
                                           " has zero total effective rate");
        next[i] = std::max(numerator[i] / denom, 0.0);
    }
    return Abundance{std::move(next)};
}

/// Closed-form maximizer of the penalized objective in b with theta fixed:
/// b_j = ln(1 + S_{lambda w_j}(n_j - mu_j) / mu_j) with mu_j = sum_i theta_i a_ij.
/// mu_j = 0 with n_j = 0 yields b_j = 0 by convention.
inline BiasVector update_b(const Abundance& theta, const ReadCounts& n,
                           const SamplingRateMatrix& A, const PenaltyConfig& pen) {
    if (theta.size() != A.isoforms || n.size() != A.categories)
        throw dimension_error("bias update called with inconsistent dimensions");
    if (!(pen.lambda >= 0.0))
        throw validation_error("penalty level must be non-negative");

    Vec b(A.categories, 0.0);
    for (std::size_t j = 0; j < A.categories; ++j) {
        const double mu = A.column_dot(theta.theta, j);
        if (!(mu > 0.0)) {
            if (n[j] > 0)
                throw infeasible_model_error("category " + std::to_string(j) +
                                             " has a positive count but zero expected reads");
            b[j] = 0.0;
            continue;
        }
        const double threshold = pen.lambda * penalty_weight(pen, n, j);
        const double shift = soft_threshold(static_cast<double>(n[j]) - mu, threshold);
        const double value = std::log1p(shift / mu);
        b[j] = std::clamp(value, -max_abs_bias, max_abs_bias);
    }
    return BiasVector{std::move(b)};
}

namespace detail {

/// Sample median; even lengths average the two middle order statistics.
inline double median(Vec values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t half = values.size() / 2;
    if (values.size() % 2 == 1) return values[half];
    return 0.5 * (values[half - 1] + values[half]);
}

/// Weighted median minimizing sum_j w_j |b_j - m|. When the cumulative weight
/// hits exactly half the total, the two straddling values are averaged, which
/// reduces to the plain median convention under equal weights.
inline double weighted_median(const Vec& values, const Vec& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) return 0.0;

    std::vector<std::size_t> order(values.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b] || (values[a] == values[b] && a < b);
    });

    double cumulative = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        cumulative += weights[order[k]];
        if (cumulative > 0.5 * total) return values[order[k]];
        if (cumulative == 0.5 * total) {
            for (std::size_t m = k + 1; m < order.size(); ++m)
                if (weights[order[m]] > 0.0)
                    return 0.5 * (values[order[k]] + values[order[m]]);
            return values[order[k]];
        }
    }
    return values[order.back()];
}

inline std::pair<Abundance, BiasVector> shift_bias(const Abundance& theta,
                                                   const BiasVector& b, double m) {
    Abundance theta_out = theta;
    BiasVector b_out = b;
    if (m == 0.0) return {std::move(theta_out), std::move(b_out)};
    const double scale = std::exp(m);
    for (double& t : theta_out.theta) t *= scale;
    for (double& v : b_out.b) v -= m;
    return {std::move(theta_out), std::move(b_out)};
}

}  // namespace detail

/// Shifts b by its median and rescales theta by e^{median}, which preserves
/// every fitted mean and cannot decrease the uniformly penalized objective.
inline std::pair<Abundance, BiasVector> median_center(const Abundance& theta,
                                                      const BiasVector& b) {
    return detail::shift_bias(theta, b, detail::median(b.b));
}

/// Weighted variant for the count-weighted penalty; equal weights reproduce
/// median_center exactly.
inline std::pair<Abundance, BiasVector> median_center_weighted(const Abundance& theta,
                                                               const BiasVector& b,
                                                               const Vec& weights) {
    if (weights.size() != b.size())
        throw dimension_error("centering weights length does not match bias length");
    return detail::shift_bias(theta, b, detail::weighted_median(b.b, weights));
}

namespace detail {

inline std::vector<std::size_t> support_of(const BiasVector& b, double zero_tol) {
    std::vector<std::size_t> support;
    for (std::size_t j = 0; j < b.size(); ++j)
        if (std::abs(b[j]) > zero_tol) support.push_back(j);
    return support;
}

inline Abundance initial_theta(const ReadCounts& n, const SamplingRateMatrix& A) {
    double total_rate = 0.0;
    for (double r : A.rates) total_rate += r;
    const double total_counts = static_cast<double>(n.total());
    double start = 0.0;
    if (total_counts > 0.0) {
        if (!(total_rate > 0.0))
            throw infeasible_model_error("positive counts with an all-zero rate matrix");
        start = total_counts / total_rate;
    }
    return Abundance{Vec(A.isoforms, start)};
}

}  // namespace detail

/// Alternating concave search: one EM sweep for theta, the closed-form
/// soft-threshold update for b, then median re-centering, until the relative
/// change of the penalized objective drops below tol. FitMode::no_bias pins
/// b = 0 and runs plain EM.
inline FitResult acs_fit(const ReadCounts& n, const SamplingRateMatrix& A,
                         const FitConfig& cfg) {
    validate_instance(A, n);
    if (cfg.max_iters < 1 || !(cfg.tol > 0.0) || !(cfg.bias_zero_tol > 0.0))
        throw validation_error("fit configuration out of range");
    if (cfg.lambda_rule == LambdaRule::fixed && !(cfg.lambda >= 0.0))
        throw validation_error("penalty level must be non-negative");

    const PenaltyConfig pen{resolve_lambda(cfg, n), cfg.penalty};
    const Vec center_weights =
        cfg.penalty == PenaltyMode::uniform ? Vec(A.categories, 1.0) : penalty_weights(pen, n);
    const bool fit_bias = cfg.mode != FitMode::no_bias;

    Abundance theta = detail::initial_theta(n, A);
    BiasVector b{Vec(A.categories, 0.0)};

    FitResult result;
    result.lambda = pen.lambda;
    result.objective_trace.push_back(penalized_objective(theta, b, n, A, pen));

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        theta = em_update_theta(theta, b, n, A);
        if (fit_bias) {
            b = update_b(theta, n, A, pen);
            std::tie(theta, b) = median_center_weighted(theta, b, center_weights);
        }
        const double objective = penalized_objective(theta, b, n, A, pen);
        const double previous = result.objective_trace.back();
        result.objective_trace.push_back(objective);
        result.iterations = iter;
        if (std::abs(objective - previous) <= cfg.tol * (1.0 + std::abs(previous))) {
            result.converged = true;
            break;
        }
    }

    result.theta_hat = std::move(theta);
    result.b_hat = std::move(b);
    result.support = detail::support_of(result.b_hat, cfg.bias_zero_tol);
    return result;
}

/// Penalized fit for support selection, then an unpenalized refit with the
/// flagged categories removed; the removed categories' biases are set by the
/// unpenalized closed form b_j = ln(n_j / sum_i theta_i a_ij).
inline FitResult two_step_fit(const ReadCounts& n, const SamplingRateMatrix& A,
                              const FitConfig& cfg) {
    FitConfig first_cfg = cfg;
    first_cfg.mode = FitMode::one_step;
    const FitResult first = acs_fit(n, A, first_cfg);

    const auto isoforms = static_cast<std::ptrdiff_t>(A.isoforms);
    const auto categories = static_cast<std::ptrdiff_t>(A.categories);
    if (static_cast<std::ptrdiff_t>(first.support.size()) > categories - isoforms) {
        std::string ids;
        for (std::size_t j : first.support) {
            if (!ids.empty()) ids += ", ";
            ids += j < A.category_ids.size() ? A.category_ids[j] : std::to_string(j);
        }
        throw identifiability_error("bias support {" + ids + "} exceeds J - I = " +
                                        std::to_string(categories - isoforms) +
                                        "; the unpenalized refit is not identifiable",
                                    first.support);
    }

    std::vector<bool> drop(A.categories, false);
    for (std::size_t j : first.support) drop[j] = true;
    if (std::all_of(drop.begin(), drop.end(), [](bool d) { return d; }))
        throw degenerate_isoform_error("every category was flagged as biased");

    FitConfig second_cfg = cfg;
    second_cfg.mode = FitMode::no_bias;
    const FitResult second =
        acs_fit(n.without_categories(drop), A.without_categories(drop), second_cfg);

    FitResult result;
    result.theta_hat = second.theta_hat;
    result.lambda = first.lambda;
    result.converged = first.converged && second.converged;
    result.iterations = first.iterations + second.iterations;
    result.objective_trace = second.objective_trace;

    Vec b(A.categories, 0.0);
    for (std::size_t j : first.support) {
        const double mu = A.column_dot(result.theta_hat.theta, j);
        double value;
        if (n[j] == 0) {
            value = -max_abs_bias;
        } else if (!(mu > 0.0)) {
            value = max_abs_bias;
        } else {
            value = std::log(static_cast<double>(n[j]) / mu);
        }
        b[j] = std::clamp(value, -max_abs_bias, max_abs_bias);
    }
    result.b_hat = BiasVector{std::move(b)};
    result.support = detail::support_of(result.b_hat, cfg.bias_zero_tol);
    return result;
}

inline FitResult fit(const ReadCounts& n, const SamplingRateMatrix& A, const FitConfig& cfg) {
    return cfg.mode == FitMode::two_step ? two_step_fit(n, A, cfg) : acs_fit(n, A, cfg);
}

struct TProcedureResult {
    std::size_t t = 0;               // number of kept smallest counts; 0 keeps all
    double theta_hat = 0.0;
    std::vector<std::size_t> kept;   // original indices of the kept categories
};

namespace detail {

/// Profile value of the single-isoform penalized objective when the given
/// sorted prefix is kept at b = 0 and every later count gets
/// theta e^{b_j} = (n_j - lambda) / N.
inline double prefix_profile_objective(const std::vector<std::int64_t>& sorted_counts,
                                       std::size_t kept_count, double prefix_sum, double N,
                                       double lambda) {
    const double theta = prefix_sum / (static_cast<double>(kept_count) * N);
    const double mean = theta * N;
    const std::size_t total = sorted_counts.size();
    if (!(mean > 0.0))
        return kept_count == total ? 0.0 : -std::numeric_limits<double>::infinity();

    double value = prefix_sum * std::log(mean) - static_cast<double>(kept_count) * mean;
    for (std::size_t k = kept_count; k < total; ++k) {
        const double excess = static_cast<double>(sorted_counts[k]) - lambda;
        if (!(excess > mean)) return -std::numeric_limits<double>::infinity();
        const double bias = std::log(excess / mean);
        value += static_cast<double>(sorted_counts[k]) * std::log(excess) - excess -
                 lambda * bias;
    }
    return value;
}

}  // namespace detail

/// Single-isoform outlier scan over order statistics, for the regime
/// a_1j = N. Counts are sorted ascending, theta_hat_t is the prefix mean
/// over N, and a prefix of size t is a removal candidate when
/// n_(t+1) > N theta_hat_t + lambda. Among the candidates (plus keeping
/// everything) the one maximizing the profile objective wins; the literal
/// first crossing can stop one index early on small samples, where it is not
/// a fixed point of the EM update.
inline TProcedureResult t_procedure(const ReadCounts& n, double N, double lambda) {
    const std::size_t total = n.size();
    if (total == 0) throw validation_error("t-procedure needs at least one category");
    if (!(N > 0.0)) throw validation_error("sequencing depth must be positive");
    if (lambda < 0.0) throw validation_error("lambda must be non-negative");

    std::vector<std::size_t> order(total);
    for (std::size_t k = 0; k < total; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return n[a] < n[b] || (n[a] == n[b] && a < b);
    });
    std::vector<std::int64_t> sorted_counts(total);
    for (std::size_t k = 0; k < total; ++k) sorted_counts[k] = n[order[k]];

    std::vector<double> prefix_sums(total + 1, 0.0);
    for (std::size_t k = 0; k < total; ++k)
        prefix_sums[k + 1] = prefix_sums[k] + static_cast<double>(sorted_counts[k]);

    std::size_t best_t = 0;
    double best_value =
        detail::prefix_profile_objective(sorted_counts, total, prefix_sums[total], N, lambda);
    for (std::size_t t = 1; t < total; ++t) {
        const double prefix_mean = prefix_sums[t] / (static_cast<double>(t) * N);
        if (!(static_cast<double>(sorted_counts[t]) > N * prefix_mean + lambda)) continue;
        const double value =
            detail::prefix_profile_objective(sorted_counts, t, prefix_sums[t], N, lambda);
        if (value > best_value) {
            best_value = value;
            best_t = t;
        }
    }

    TProcedureResult result;
    result.t = best_t;
    const std::size_t kept_count = best_t == 0 ? total : best_t;
    result.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept_count));
    std::sort(result.kept.begin(), result.kept.end());
    result.theta_hat = prefix_sums[kept_count] / (static_cast<double>(kept_count) * N);
    return result;
}

}  // namespace isobias
