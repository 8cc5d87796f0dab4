#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "isobias/types.hpp"

namespace isobias {

/// Pre-collapse table over raw read types, column per type.
struct ReadTypeTable {
    std::size_t isoforms = 0;
    std::size_t types = 0;
    Vec rates;  // row-major, isoforms x types
    std::vector<std::int64_t> counts;
    std::vector<std::string> type_ids;

    double at(std::size_t i, std::size_t m) const { return rates[i * types + m]; }
    double& at(std::size_t i, std::size_t m) { return rates[i * types + m]; }
};

struct CollapseResult {
    SamplingRateMatrix matrix;
    ReadCounts counts;
    std::vector<std::size_t> type_to_category;
};

namespace detail {

/// Column scaled by its maximum entry; empty for all-zero columns.
inline Vec normalized_column(const ReadTypeTable& table, std::size_t m) {
    double peak = 0.0;
    for (std::size_t i = 0; i < table.isoforms; ++i) peak = std::max(peak, table.at(i, m));
    if (peak == 0.0) return {};
    Vec out(table.isoforms);
    for (std::size_t i = 0; i < table.isoforms; ++i) out[i] = table.at(i, m) / peak;
    return out;
}

inline bool proportional(const Vec& a, const Vec& b, double tol) {
    if (a.empty() || b.empty()) return a.empty() && b.empty();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol * std::max(a[i], b[i])) return false;
    return true;
}

}  // namespace detail

/// Merges read types whose sampling-rate columns are proportional (u = c * v
/// for some c > 0, compared after normalizing each column by its maximum,
/// within relative tolerance prop_tol; all-zero columns form one class).
/// Each category's rate column is the sum of its member columns and its count
/// the sum of member counts, so the category-level model keeps the same
/// likelihood structure. Representatives are assigned in first-seen order.
inline CollapseResult collapse_read_types(const ReadTypeTable& table, double prop_tol = 0.0) {
    if (prop_tol < 0.0) throw validation_error("proportionality tolerance must be >= 0");
    if (table.rates.size() != table.isoforms * table.types)
        throw dimension_error("read-type table storage does not match its dimensions");
    if (table.counts.size() != table.types)
        throw dimension_error("read-type counts do not match the number of types");

    CollapseResult result;
    result.matrix.isoforms = table.isoforms;
    result.type_to_category.assign(table.types, 0);

    std::vector<Vec> representatives;
    std::vector<std::vector<std::size_t>> members;

    for (std::size_t m = 0; m < table.types; ++m) {
        const Vec normalized = detail::normalized_column(table, m);
        std::size_t category = representatives.size();
        for (std::size_t c = 0; c < representatives.size(); ++c) {
            if (detail::proportional(representatives[c], normalized, prop_tol)) {
                category = c;
                break;
            }
        }
        if (category == representatives.size()) {
            representatives.push_back(normalized);
            members.emplace_back();
        }
        members[category].push_back(m);
        result.type_to_category[m] = category;
    }

    const std::size_t n_categories = representatives.size();
    result.matrix.categories = n_categories;
    result.matrix.rates.assign(table.isoforms * n_categories, 0.0);
    result.counts.counts.assign(n_categories, 0);
    result.matrix.category_ids.resize(n_categories);

    for (std::size_t c = 0; c < n_categories; ++c) {
        std::string id;
        for (std::size_t m : members[c]) {
            for (std::size_t i = 0; i < table.isoforms; ++i)
                result.matrix.at(i, c) += table.at(i, m);
            result.counts.counts[c] += table.counts[m];
            const std::string type_id =
                m < table.type_ids.size() ? table.type_ids[m] : std::to_string(m);
            if (!id.empty()) id += "+";
            id += type_id;
        }
        result.matrix.category_ids[c] = id;
    }
    return result;
}

}  // namespace isobias
