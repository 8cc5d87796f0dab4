#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "isobias/isobias.hpp"

using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_fit_failure = 1;
constexpr int exit_usage = 2;
constexpr int exit_io = 3;

void emit_error_record(const std::string& type, const std::string& message) {
    json record;
    record["error"]["type"] = type;
    record["error"]["message"] = message;
    std::cerr << record.dump() << "\n";
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

bool valid_lambda(const std::string& text) {
    if (text == "auto") return true;
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        return used == text.size() && value >= 0.0 && std::isfinite(value);
    } catch (const std::exception&) {
        return false;
    }
}

std::string join_doubles(const isobias::Vec& values) {
    if (values.empty()) return ".";
    std::string out;
    for (double v : values) {
        if (!out.empty()) out += ",";
        out += format_double(v);
    }
    return out;
}

struct FitOptions {
    std::string input;
    std::string output_path;
    std::string mode = "one-step";
    std::string lambda = "auto";
    std::string penalty = "uniform";
    std::string output_format = "tsv";
    double tol = 1e-8;
    int max_iters = 10000;
    double bias_zero_tol = 1e-6;
};

isobias::FitMode parse_mode(const std::string& mode) {
    if (mode == "no-bias") return isobias::FitMode::no_bias;
    if (mode == "one-step") return isobias::FitMode::one_step;
    return isobias::FitMode::two_step;
}

isobias::FitConfig build_config(const FitOptions& opt) {
    isobias::FitConfig cfg;
    cfg.mode = parse_mode(opt.mode);
    cfg.penalty = opt.penalty == "count-weighted" ? isobias::PenaltyMode::count_weighted
                                                  : isobias::PenaltyMode::uniform;
    cfg.tol = opt.tol;
    cfg.max_iters = opt.max_iters;
    cfg.bias_zero_tol = opt.bias_zero_tol;
    if (opt.lambda == "auto") {
        cfg.lambda_rule = isobias::LambdaRule::max_count_sqrt;
    } else {
        cfg.lambda_rule = isobias::LambdaRule::fixed;
        cfg.lambda = std::stod(opt.lambda);
    }
    return cfg;
}

/// Total expression used for the fold-change screen: the summed RPKM when the
/// inputs are present, otherwise the summed expected reads.
double total_expression(const isobias::GeneInstance& gene, const isobias::Abundance& theta) {
    if (gene.has_rpkm_inputs()) {
        double total = 0.0;
        for (double v : isobias::rpkm(theta, gene.rates, gene.lengths,
                                      gene.total_mapped_reads))
            total += v;
        return total;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < gene.rates.isoforms; ++i)
        total += theta[i] * gene.rates.row_sum(i);
    return total;
}

std::string support_ids(const isobias::GeneInstance& gene,
                        const std::vector<std::size_t>& support) {
    if (support.empty()) return ".";
    std::string out;
    for (std::size_t j : support) {
        if (!out.empty()) out += ",";
        out += j < gene.rates.category_ids.size() ? gene.rates.category_ids[j]
                                                  : std::to_string(j);
    }
    return out;
}

int run_fit(const FitOptions& opt) {
    std::vector<isobias::GeneInstance> genes;
    try {
        genes = isobias::parse_gene_file(opt.input);
    } catch (const isobias::parse_error& e) {
        emit_error_record("parse", e.what());
        return exit_io;
    }

    std::ofstream file_out;
    if (!opt.output_path.empty()) {
        file_out.open(opt.output_path);
        if (!file_out) {
            emit_error_record("io", "cannot write '" + opt.output_path + "'");
            return exit_io;
        }
    }
    std::ostream& out = opt.output_path.empty() ? std::cout : file_out;

    const isobias::FitConfig cfg = build_config(opt);
    const bool tsv = opt.output_format == "tsv";
    if (tsv)
        out << "gene_id\tmode\tconverged\titerations\tlambda\tobjective\ttheta_hat\tb_hat"
               "\tsupport\ttotal_expression\tno_bias_theta\tno_bias_total\tfold_change"
               "\trpkm\terror\n";

    bool any_failed = false;
    for (const auto& gene : genes) {
        json record;
        record["gene_id"] = gene.gene_id;
        record["mode"] = opt.mode;
        std::string error_text;
        try {
            const isobias::FitResult result = isobias::fit(gene.counts, gene.rates, cfg);

            isobias::Abundance no_bias_theta = result.theta_hat;
            if (cfg.mode != isobias::FitMode::no_bias) {
                isobias::FitConfig base_cfg = cfg;
                base_cfg.mode = isobias::FitMode::no_bias;
                no_bias_theta = isobias::acs_fit(gene.counts, gene.rates, base_cfg).theta_hat;
            }
            const double no_bias_total = total_expression(gene, no_bias_theta);
            const double total = total_expression(gene, result.theta_hat);
            const double ratio = no_bias_total == 0.0 ? 0.0 : total / no_bias_total;
            const bool fold_change = cfg.mode != isobias::FitMode::no_bias &&
                                     (no_bias_total == 0.0 || ratio < 0.5 || ratio > 2.0);

            isobias::Vec rpkm_values;
            if (gene.has_rpkm_inputs())
                rpkm_values = isobias::rpkm(result.theta_hat, gene.rates, gene.lengths,
                                            gene.total_mapped_reads);

            if (tsv) {
                out << gene.gene_id << '\t' << opt.mode << '\t' << result.converged << '\t'
                    << result.iterations << '\t' << format_double(result.lambda) << '\t'
                    << format_double(result.objective_trace.back()) << '\t'
                    << join_doubles(result.theta_hat.theta) << '\t'
                    << join_doubles(result.b_hat.b) << '\t'
                    << support_ids(gene, result.support) << '\t' << format_double(total)
                    << '\t' << join_doubles(no_bias_theta.theta) << '\t'
                    << format_double(no_bias_total) << '\t' << fold_change << '\t'
                    << join_doubles(rpkm_values) << "\t.\n";
            } else {
                record["converged"] = result.converged;
                record["iterations"] = result.iterations;
                record["lambda"] = result.lambda;
                record["objective"] = result.objective_trace.back();
                record["theta_hat"] = result.theta_hat.theta;
                record["b_hat"] = result.b_hat.b;
                record["support"] = result.support;
                record["total_expression"] = total;
                record["no_bias_theta"] = no_bias_theta.theta;
                record["no_bias_total"] = no_bias_total;
                record["fold_change"] = fold_change;
                if (!rpkm_values.empty()) record["rpkm"] = rpkm_values;
                out << record.dump() << "\n";
            }
        } catch (const isobias::error& e) {
            any_failed = true;
            error_text = e.what();
            if (tsv) {
                out << gene.gene_id << '\t' << opt.mode
                    << "\t.\t.\t.\t.\t.\t.\t.\t.\t.\t.\t.\t.\t" << error_text << "\n";
            } else {
                record["error"] = error_text;
                out << record.dump() << "\n";
            }
        }
    }
    return any_failed ? exit_fit_failure : exit_ok;
}

struct SimulateOptions {
    std::string design = "example1";
    std::vector<double> depths = {10.0};
    int replicates = 100;
    std::uint64_t seed = 0;
    bool mode_all = true;
    std::string lambda = "auto";
    std::string output_format = "tsv";
    std::string output_path;
};

json summary_json(const isobias::MethodSummary& summary) {
    json out;
    out["successes"] = summary.successes;
    out["failures"] = summary.failures;
    out["l2_mean"] = summary.l2_mean;
    out["l2_sd"] = summary.l2_sd;
    out["misidentified_mean"] = summary.mis_mean;
    out["misidentified_sd"] = summary.mis_sd;
    return out;
}

int run_simulate(const SimulateOptions& opt) {
    isobias::SimulationSpec spec;
    if (opt.design == "example1") {
        spec.design = isobias::SimDesign::example1;
    } else if (opt.design == "example2") {
        spec.design = isobias::SimDesign::example2;
    } else if (opt.design == "example3") {
        spec.design = isobias::SimDesign::example3;
    } else if (opt.design.rfind("custom=", 0) == 0) {
        spec.design = isobias::SimDesign::custom;
        const std::string path = opt.design.substr(7);
        std::ifstream in(path);
        if (!in) {
            emit_error_record("io", "cannot open custom design '" + path + "'");
            return exit_io;
        }
        try {
            const json design = json::parse(in);
            std::vector<isobias::Vec> rows;
            for (const auto& row : design.at("C")) rows.push_back(row.get<isobias::Vec>());
            spec.custom.C = isobias::SamplingRateMatrix::from_rows(rows);
            spec.custom.theta_true = design.at("theta").get<isobias::Vec>();
            spec.custom.b_true = design.at("b").get<isobias::Vec>();
        } catch (const std::exception& e) {
            emit_error_record("parse", std::string("custom design: ") + e.what());
            return exit_io;
        }
    } else {
        emit_error_record("usage", "unknown design '" + opt.design + "'");
        return exit_usage;
    }

    spec.replicates = opt.replicates;
    spec.seed = opt.seed;
    if (opt.lambda == "auto") {
        spec.fit.lambda_rule = isobias::LambdaRule::max_count_sqrt;
    } else {
        spec.fit.lambda_rule = isobias::LambdaRule::fixed;
        spec.fit.lambda = std::stod(opt.lambda);
    }

    std::ofstream file_out;
    if (!opt.output_path.empty()) {
        file_out.open(opt.output_path, std::ios::binary);
        if (!file_out) {
            emit_error_record("io", "cannot write '" + opt.output_path + "'");
            return exit_io;
        }
    }
    std::ostream& out = opt.output_path.empty() ? std::cout : file_out;

    if (opt.output_format == "tsv") out << isobias::report_tsv_header();
    for (double depth : opt.depths) {
        spec.depth = depth;
        const auto report = isobias::run_study(spec);
        if (opt.output_format == "tsv") {
            out << isobias::report_tsv_row(report);
            continue;
        }
        json record;
        record["design"] = isobias::design_name(report.design);
        record["depth"] = report.depth;
        record["replicates"] = report.replicates;
        record["seed"] = report.seed;
        for (std::size_t m = 0; m < 3; ++m)
            record["methods"][isobias::method_name(m)] = summary_json(report.methods[m]);
        json reps = json::array();
        for (const auto& rec : report.records) {
            json row;
            for (std::size_t m = 0; m < 3; ++m) {
                json cell;
                cell["ok"] = rec.methods[m].ok;
                if (rec.methods[m].ok) {
                    cell["l2"] = rec.methods[m].l2;
                    cell["misidentified"] = rec.methods[m].misidentified;
                } else {
                    cell["error"] = rec.methods[m].error;
                }
                row[isobias::method_name(m)] = cell;
            }
            reps.push_back(row);
        }
        record["records"] = reps;
        out << record.dump() << "\n";
    }
    return exit_ok;
}

struct CollapseOptions {
    std::string input;
    std::string output_path;
    double prop_tol = 0.0;
};

int run_collapse(const CollapseOptions& opt) {
    std::vector<isobias::GeneInstance> genes;
    try {
        genes = isobias::parse_gene_file(opt.input);
    } catch (const isobias::parse_error& e) {
        emit_error_record("parse", e.what());
        return exit_io;
    }

    std::ofstream file_out;
    if (!opt.output_path.empty()) {
        file_out.open(opt.output_path, std::ios::binary);
        if (!file_out) {
            emit_error_record("io", "cannot write '" + opt.output_path + "'");
            return exit_io;
        }
    }
    std::ostream& out = opt.output_path.empty() ? std::cout : file_out;

    for (const auto& gene : genes) {
        isobias::ReadTypeTable table;
        table.isoforms = gene.rates.isoforms;
        table.types = gene.rates.categories;
        table.rates = gene.rates.rates;
        table.counts = gene.counts.counts;
        table.type_ids = gene.rates.category_ids;
        const auto collapsed = isobias::collapse_read_types(table, opt.prop_tol);

        isobias::GeneInstance merged;
        merged.gene_id = gene.gene_id;
        merged.rates = collapsed.matrix;
        merged.rates.isoform_ids = gene.rates.isoform_ids;
        merged.counts = collapsed.counts;
        merged.lengths = gene.lengths;
        merged.total_mapped_reads = gene.total_mapped_reads;
        out << isobias::write_gene_line(merged) << "\n";
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust isoform abundance estimation from read-category counts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "isobias 0.1.0");

    FitOptions fit_opt;
    auto* fit_cmd = app.add_subcommand("fit", "fit per-gene abundances from a gene file");
    fit_cmd->add_option("--input,-i,input", fit_opt.input, "gene file (JSON lines or TSV)")
        ->required();
    fit_cmd->add_option("--mode", fit_opt.mode, "estimation approach")
        ->check(CLI::IsMember({"no-bias", "one-step", "two-step"}));
    fit_cmd->add_option("--lambda", fit_opt.lambda,
                        "penalty level: 'auto' for sqrt(max count) or a number");
    fit_cmd->add_option("--penalty", fit_opt.penalty, "penalty weights")
        ->check(CLI::IsMember({"uniform", "count-weighted"}));
    fit_cmd->add_option("--tol", fit_opt.tol, "relative objective-change tolerance");
    fit_cmd->add_option("--max-iters", fit_opt.max_iters, "iteration cap");
    fit_cmd->add_option("--bias-zero-tol", fit_opt.bias_zero_tol,
                        "support classification threshold on |b|");
    fit_cmd->add_option("--output", fit_opt.output_format, "output format")
        ->check(CLI::IsMember({"tsv", "json"}));
    fit_cmd->add_option("--out", fit_opt.output_path, "output file (default stdout)");

    SimulateOptions sim_opt;
    auto* sim_cmd =
        app.add_subcommand("simulate", "run the simulation studies and report accuracy");
    sim_cmd->add_option("--design", sim_opt.design,
                        "example1 | example2 | example3 | custom=<file>");
    sim_cmd->add_option("--depth", sim_opt.depths, "sequencing depth(s), one row each");
    sim_cmd->add_option("--replicates", sim_opt.replicates, "replicates per depth");
    sim_cmd->add_option("--seed", sim_opt.seed, "RNG seed");
    sim_cmd->add_flag("--mode-all", sim_opt.mode_all,
                      "run all three approaches on paired data (always on)");
    sim_cmd->add_option("--lambda", sim_opt.lambda, "'auto' or a fixed value");
    sim_cmd->add_option("--output", sim_opt.output_format, "output format")
        ->check(CLI::IsMember({"tsv", "json"}));
    sim_cmd->add_option("--out", sim_opt.output_path, "output file (default stdout)");

    CollapseOptions collapse_opt;
    auto* collapse_cmd =
        app.add_subcommand("collapse", "merge proportional rate columns into categories");
    collapse_cmd
        ->add_option("--input,-i,input", collapse_opt.input, "gene file (JSON lines or TSV)")
        ->required();
    collapse_cmd->add_option("--prop-tol", collapse_opt.prop_tol,
                             "relative proportionality tolerance");
    collapse_cmd->add_option("--out", collapse_opt.output_path,
                             "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return exit_ok;  // --help / --version
        emit_error_record("usage", e.what());
        return exit_usage;
    }

    if ((fit_cmd->parsed() && !valid_lambda(fit_opt.lambda)) ||
        (sim_cmd->parsed() && !valid_lambda(sim_opt.lambda))) {
        emit_error_record("usage", "--lambda must be 'auto' or a non-negative number");
        return exit_usage;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit_opt);
        if (sim_cmd->parsed()) return run_simulate(sim_opt);
        if (collapse_cmd->parsed()) return run_collapse(collapse_opt);
    } catch (const isobias::error& e) {
        emit_error_record("fit", e.what());
        return exit_fit_failure;
    } catch (const std::exception& e) {
        emit_error_record("internal", e.what());
        return exit_io;
    }
    return exit_usage;
}
