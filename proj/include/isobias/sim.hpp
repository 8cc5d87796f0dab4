#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "isobias/rng.hpp"
#include "isobias/solver.hpp"
#include "isobias/types.hpp"

namespace isobias {

enum class SimDesign { example1, example2, example3, custom };

inline const char* design_name(SimDesign d) {
    switch (d) {
        case SimDesign::example1: return "example1";
        case SimDesign::example2: return "example2";
        case SimDesign::example3: return "example3";
        default: return "custom";
    }
}

/// Fixed design for custom studies: relative rates C plus the true parameters.
struct CustomDesign {
    SamplingRateMatrix C;
    Vec theta_true;
    Vec b_true;
};

struct SimulationSpec {
    SimDesign design = SimDesign::example1;
    CustomDesign custom;      // used when design == custom
    double depth = 10.0;      // N; the rate matrix is A = N * C
    int replicates = 100;
    std::uint64_t seed = 0;
    FitConfig fit;            // mode is ignored; all three approaches run
};

struct SimulatedInstance {
    SamplingRateMatrix A;
    ReadCounts n;
    Vec theta_true;
    Vec b_true;
};

namespace detail {

inline SamplingRateMatrix example1_rates() {
    return SamplingRateMatrix::from_rows({{1.0, 1.0, 1.0, 1.0, 1.0}});
}

inline SamplingRateMatrix example2_rates() {
    return SamplingRateMatrix::from_rows({{1.0, 2.0, 1.0, 2.0, 3.0, 2.0},
                                          {1.0, 2.0, 0.0, 2.0, 3.0, 2.0}});
}

}  // namespace detail

/// Draws one replicate. The replicate stream is fully determined by
/// (seed, replicate_index); the draw order is fixed as C (row-major, where
/// random), then theta, then b, then the counts, so runs are reproducible.
inline SimulatedInstance generate_counts(const SimulationSpec& spec, int replicate_index) {
    if (replicate_index < 0 || replicate_index >= spec.replicates)
        throw validation_error("replicate index out of range");
    Rng rng(spec.seed, static_cast<std::uint64_t>(replicate_index));

    SimulatedInstance inst;
    SamplingRateMatrix C;
    switch (spec.design) {
        case SimDesign::example1:
            C = detail::example1_rates();
            inst.theta_true = {1.0};
            inst.b_true = {2.0, 0.0, 0.0, 0.0, 0.0};
            break;
        case SimDesign::example2:
            C = detail::example2_rates();
            inst.theta_true = {6.0, 3.0};
            inst.b_true = {-5.0, 0.0, 0.0, 0.0, 0.0, 0.0};
            break;
        case SimDesign::example3: {
            const std::size_t I = 5, J = 20;
            C = SamplingRateMatrix(I, J);
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t j = 0; j < J; ++j) {
                    const double gate = rng.uniform01();
                    const double value = gate < 0.1 ? 0.0 : rng.uniform01();
                    C.at(i, j) = value;
                }
            inst.theta_true.resize(I);
            for (double& t : inst.theta_true) t = rng.exponential();
            inst.b_true.resize(J);
            for (double& b : inst.b_true) {
                const double gate = rng.uniform01();
                b = gate < 0.9 ? 0.0 : rng.normal(0.0, 3.0);
            }
            break;
        }
        case SimDesign::custom:
            C = spec.custom.C;
            inst.theta_true = spec.custom.theta_true;
            inst.b_true = spec.custom.b_true;
            if (inst.theta_true.size() != C.isoforms || inst.b_true.size() != C.categories)
                throw dimension_error("custom design parameters do not match C");
            break;
    }

    inst.A = C.scaled(spec.depth);
    inst.n.counts.resize(inst.A.categories);
    for (std::size_t j = 0; j < inst.A.categories; ++j) {
        const double mean = inst.A.column_dot(inst.theta_true, j) * std::exp(inst.b_true[j]);
        inst.n.counts[j] = rng.poisson(mean);
    }
    return inst;
}

/// L2 estimation error and the number of categories whose zero/non-zero bias
/// status disagrees with the truth.
inline std::pair<double, int> evaluate_fit(const FitResult& result, const Vec& theta_true,
                                           const Vec& b_true, double zero_tol) {
    if (result.theta_hat.size() != theta_true.size() || result.b_hat.size() != b_true.size())
        throw dimension_error("fit result does not match the true parameter sizes");
    double sq = 0.0;
    for (std::size_t i = 0; i < theta_true.size(); ++i) {
        const double d = result.theta_hat[i] - theta_true[i];
        sq += d * d;
    }
    int misidentified = 0;
    for (std::size_t j = 0; j < b_true.size(); ++j) {
        const bool truly_zero = b_true[j] == 0.0;
        const bool estimated_zero = std::abs(result.b_hat[j]) <= zero_tol;
        if (truly_zero != estimated_zero) ++misidentified;
    }
    return {std::sqrt(sq), misidentified};
}

struct MethodOutcome {
    bool ok = false;
    double l2 = 0.0;
    int misidentified = 0;
    std::string error;
};

/// One row per replicate; methods indexed no-bias, one-step, two-step.
struct ReplicateRecord {
    std::array<MethodOutcome, 3> methods;
};

struct MethodSummary {
    int successes = 0;
    int failures = 0;
    double l2_mean = 0.0;
    double l2_sd = 0.0;
    double mis_mean = 0.0;
    double mis_sd = 0.0;
};

struct SimulationReport {
    SimDesign design = SimDesign::example1;
    double depth = 0.0;
    int replicates = 0;
    std::uint64_t seed = 0;
    std::array<MethodSummary, 3> methods;  // no-bias, one-step, two-step
    std::vector<ReplicateRecord> records;
};

inline const char* method_name(std::size_t index) {
    static const char* names[3] = {"no-bias", "one-step", "two-step"};
    return names[index];
}

namespace detail {

/// Sample mean and sd (n-1 denominator; sd = 0 below two samples).
inline std::pair<double, double> mean_sd(const Vec& values) {
    if (values.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

}  // namespace detail

/// Runs the no-bias, one-step and two-step fits on identical per-replicate
/// data and aggregates paired accuracy summaries. Replicates where a fit
/// fails are excluded from that method's aggregates and counted as failures.
inline SimulationReport run_study(const SimulationSpec& spec) {
    if (spec.replicates < 1) throw validation_error("replicate count must be >= 1");
    if (!(spec.depth > 0.0)) throw validation_error("depth must be positive");

    SimulationReport report;
    report.design = spec.design;
    report.depth = spec.depth;
    report.replicates = spec.replicates;
    report.seed = spec.seed;
    report.records.resize(static_cast<std::size_t>(spec.replicates));

    const std::array<FitMode, 3> modes = {FitMode::no_bias, FitMode::one_step,
                                          FitMode::two_step};
    std::array<Vec, 3> l2_values;
    std::array<Vec, 3> mis_values;

    for (int rep = 0; rep < spec.replicates; ++rep) {
        const SimulatedInstance inst = generate_counts(spec, rep);
        auto& record = report.records[static_cast<std::size_t>(rep)];
        for (std::size_t m = 0; m < modes.size(); ++m) {
            FitConfig cfg = spec.fit;
            cfg.mode = modes[m];
            MethodOutcome& outcome = record.methods[m];
            try {
                const FitResult fitted = fit(inst.n, inst.A, cfg);
                const auto [l2, mis] =
                    evaluate_fit(fitted, inst.theta_true, inst.b_true, cfg.bias_zero_tol);
                outcome.ok = true;
                outcome.l2 = l2;
                outcome.misidentified = mis;
                l2_values[m].push_back(l2);
                mis_values[m].push_back(static_cast<double>(mis));
            } catch (const error& e) {
                outcome.ok = false;
                outcome.error = e.what();
            }
        }
    }

    for (std::size_t m = 0; m < modes.size(); ++m) {
        MethodSummary& summary = report.methods[m];
        summary.successes = static_cast<int>(l2_values[m].size());
        summary.failures = spec.replicates - summary.successes;
        std::tie(summary.l2_mean, summary.l2_sd) = detail::mean_sd(l2_values[m]);
        std::tie(summary.mis_mean, summary.mis_sd) = detail::mean_sd(mis_values[m]);
    }
    return report;
}

namespace detail {

inline std::string cell(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", mean, sd);
    return buf;
}

}  // namespace detail

inline std::string report_tsv_header() {
    return "depth\tno_bias\tone_step\ttwo_step\tmisidentified\n";
}

/// One table row: depth, the three L2-error cells, and the misidentified
/// cell of the bias-corrected fits (one-step and two-step share the support).
inline std::string report_tsv_row(const SimulationReport& report) {
    char depth_buf[32];
    std::snprintf(depth_buf, sizeof depth_buf, "%g", report.depth);
    std::string row = depth_buf;
    for (std::size_t m = 0; m < 3; ++m)
        row += "\t" + detail::cell(report.methods[m].l2_mean, report.methods[m].l2_sd);
    row += "\t" + detail::cell(report.methods[1].mis_mean, report.methods[1].mis_sd);
    row += "\n";
    return row;
}

}  // namespace isobias
