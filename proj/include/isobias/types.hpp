#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "isobias/errors.hpp"

namespace isobias {

using Vec = std::vector<double>;

/// I x J matrix of expected reads per unit isoform abundance per read
/// category, stored row-major (row = isoform, column = category).
struct SamplingRateMatrix {
    std::size_t isoforms = 0;
    std::size_t categories = 0;
    Vec rates;
    std::vector<std::string> isoform_ids;
    std::vector<std::string> category_ids;

    SamplingRateMatrix() = default;

    SamplingRateMatrix(std::size_t n_isoforms, std::size_t n_categories, double fill = 0.0)
        : isoforms(n_isoforms),
          categories(n_categories),
          rates(n_isoforms * n_categories, fill) {}

    static SamplingRateMatrix from_rows(const std::vector<Vec>& rows) {
        SamplingRateMatrix m;
        m.isoforms = rows.size();
        m.categories = rows.empty() ? 0 : rows.front().size();
        m.rates.reserve(m.isoforms * m.categories);
        for (const auto& row : rows) {
            if (row.size() != m.categories)
                throw dimension_error("rate rows have inconsistent lengths");
            m.rates.insert(m.rates.end(), row.begin(), row.end());
        }
        return m;
    }

    double at(std::size_t i, std::size_t j) const { return rates[i * categories + j]; }
    double& at(std::size_t i, std::size_t j) { return rates[i * categories + j]; }

    /// Sum_j a_ij.
    double row_sum(std::size_t i) const {
        double s = 0.0;
        for (std::size_t j = 0; j < categories; ++j) s += at(i, j);
        return s;
    }

    /// Sum_i theta_i * a_ij.
    double column_dot(const Vec& theta, std::size_t j) const {
        double s = 0.0;
        for (std::size_t i = 0; i < isoforms; ++i) s += theta[i] * at(i, j);
        return s;
    }

    /// A = factor * C, used to scale relative rates by sequencing depth.
    SamplingRateMatrix scaled(double factor) const {
        SamplingRateMatrix m = *this;
        for (double& r : m.rates) r *= factor;
        return m;
    }

    /// Copy with the flagged categories removed.
    SamplingRateMatrix without_categories(const std::vector<bool>& drop) const {
        SamplingRateMatrix m;
        m.isoforms = isoforms;
        m.isoform_ids = isoform_ids;
        for (std::size_t j = 0; j < categories; ++j) {
            if (drop[j]) continue;
            ++m.categories;
            if (j < category_ids.size()) m.category_ids.push_back(category_ids[j]);
        }
        m.rates.reserve(isoforms * m.categories);
        for (std::size_t i = 0; i < isoforms; ++i)
            for (std::size_t j = 0; j < categories; ++j)
                if (!drop[j]) m.rates.push_back(at(i, j));
        return m;
    }
};

/// Observed read counts per category.
struct ReadCounts {
    std::vector<std::int64_t> counts;

    ReadCounts() = default;
    explicit ReadCounts(std::vector<std::int64_t> c) : counts(std::move(c)) {}

    std::size_t size() const { return counts.size(); }
    std::int64_t operator[](std::size_t j) const { return counts[j]; }

    std::int64_t total() const {
        return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
    }

    std::int64_t max() const {
        std::int64_t m = 0;
        for (auto c : counts) m = std::max(m, c);
        return m;
    }

    ReadCounts without_categories(const std::vector<bool>& drop) const {
        ReadCounts out;
        for (std::size_t j = 0; j < counts.size(); ++j)
            if (!drop[j]) out.counts.push_back(counts[j]);
        return out;
    }
};

/// Non-negative abundance per isoform, in the units induced by the rate matrix.
struct Abundance {
    Vec theta;

    Abundance() = default;
    explicit Abundance(Vec t) : theta(std::move(t)) {}

    std::size_t size() const { return theta.size(); }
    double operator[](std::size_t i) const { return theta[i]; }
};

/// Log-scale multiplicative bias per category; beta_j = exp(b_j).
struct BiasVector {
    Vec b;

    BiasVector() = default;
    explicit BiasVector(Vec values) : b(std::move(values)) {}

    std::size_t size() const { return b.size(); }
    double operator[](std::size_t j) const { return b[j]; }
};

enum class PenaltyMode { uniform, count_weighted };

/// L1 penalty lambda * sum_j w_j |b_j|; w_j = 1 (uniform) or n_j (count-weighted).
struct PenaltyConfig {
    double lambda = 0.0;
    PenaltyMode mode = PenaltyMode::uniform;
};

inline double penalty_weight(const PenaltyConfig& pen, const ReadCounts& n, std::size_t j) {
    return pen.mode == PenaltyMode::uniform ? 1.0 : static_cast<double>(n[j]);
}

inline Vec penalty_weights(const PenaltyConfig& pen, const ReadCounts& n) {
    Vec w(n.size());
    for (std::size_t j = 0; j < n.size(); ++j) w[j] = penalty_weight(pen, n, j);
    return w;
}

/// Checks the invariants a fit relies on; throws on the first violation.
inline void validate_instance(const SamplingRateMatrix& A, const ReadCounts& n) {
    if (A.isoforms < 1 || A.categories < 1)
        throw validation_error("rate matrix must have at least one isoform and one category");
    if (A.rates.size() != A.isoforms * A.categories)
        throw dimension_error("rate matrix storage does not match its dimensions");
    if (n.size() != A.categories)
        throw dimension_error("count vector length does not match the number of categories");
    for (double r : A.rates) {
        if (!(r >= 0.0) || !std::isfinite(r))
            throw validation_error("sampling rates must be finite and non-negative");
    }
    for (std::size_t j = 0; j < n.size(); ++j) {
        if (n[j] < 0) throw validation_error("read counts must be non-negative");
        if (n[j] > 0) {
            bool any_positive = false;
            for (std::size_t i = 0; i < A.isoforms; ++i)
                if (A.at(i, j) > 0.0) { any_positive = true; break; }
            if (!any_positive)
                throw infeasible_model_error(
                    "category " + std::to_string(j) +
                    " has a positive count but zero sampling rate in every isoform");
        }
    }
    if (!A.isoform_ids.empty() && A.isoform_ids.size() != A.isoforms)
        throw dimension_error("isoform id list does not match the number of isoforms");
    if (!A.category_ids.empty() && A.category_ids.size() != A.categories)
        throw dimension_error("category id list does not match the number of categories");
}

}  // namespace isobias
