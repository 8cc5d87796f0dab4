#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "isobias/types.hpp"

namespace isobias {

/// One gene record: rate matrix, counts, and optional RPKM inputs.
struct GeneInstance {
    std::string gene_id;
    SamplingRateMatrix rates;
    ReadCounts counts;
    std::vector<std::int64_t> lengths;   // bp per isoform; empty when absent
    std::int64_t total_mapped_reads = 0; // 0 when absent

    bool has_rpkm_inputs() const { return !lengths.empty() && total_mapped_reads > 0; }
};

/// Expected reads per isoform r_i = theta_i * sum_j a_ij, scaled to reads per
/// kilobase of transcript per million mapped reads.
inline Vec rpkm(const Abundance& theta, const SamplingRateMatrix& A,
                const std::vector<std::int64_t>& lengths, std::int64_t total_mapped_reads) {
    if (theta.size() != A.isoforms)
        throw dimension_error("abundance length does not match the number of isoforms");
    if (lengths.size() != A.isoforms || total_mapped_reads <= 0)
        throw validation_error("RPKM needs isoform lengths and total mapped reads");
    Vec out(A.isoforms);
    for (std::size_t i = 0; i < A.isoforms; ++i) {
        if (lengths[i] <= 0) throw validation_error("isoform lengths must be positive");
        const double expected_reads = theta[i] * A.row_sum(i);
        out[i] = expected_reads * 1e9 /
                 (static_cast<double>(lengths[i]) * static_cast<double>(total_mapped_reads));
    }
    return out;
}

namespace detail {

inline void validate_gene(const GeneInstance& gene, std::size_t line) {
    try {
        validate_instance(gene.rates, gene.counts);
        if (!gene.lengths.empty() || gene.total_mapped_reads > 0) {
            if (gene.lengths.size() != gene.rates.isoforms || gene.total_mapped_reads <= 0)
                throw validation_error(
                    "lengths and total_mapped_reads must be present together");
            for (auto length : gene.lengths)
                if (length <= 0) throw validation_error("isoform lengths must be positive");
        }
    } catch (const error& e) {
        throw parse_error("gene '" + gene.gene_id + "' (line " + std::to_string(line) +
                              "): " + e.what(),
                          line);
    }
}

}  // namespace detail

inline GeneInstance gene_from_json(const nlohmann::json& record, std::size_t line) {
    GeneInstance gene;
    try {
        gene.gene_id = record.at("gene_id").get<std::string>();
        const auto& rows = record.at("rates");
        std::vector<Vec> rate_rows;
        for (const auto& row : rows) rate_rows.push_back(row.get<Vec>());
        gene.rates = SamplingRateMatrix::from_rows(rate_rows);
        gene.counts.counts = record.at("counts").get<std::vector<std::int64_t>>();
        if (record.contains("isoform_ids"))
            gene.rates.isoform_ids = record.at("isoform_ids").get<std::vector<std::string>>();
        if (record.contains("category_ids"))
            gene.rates.category_ids =
                record.at("category_ids").get<std::vector<std::string>>();
        if (record.contains("lengths"))
            gene.lengths = record.at("lengths").get<std::vector<std::int64_t>>();
        if (record.contains("total_mapped_reads"))
            gene.total_mapped_reads = record.at("total_mapped_reads").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("gene record at line " + std::to_string(line) +
                              " is malformed: " + e.what(),
                          line);
    } catch (const error& e) {
        throw parse_error("gene record at line " + std::to_string(line) +
                              " is malformed: " + e.what(),
                          line);
    }
    detail::validate_gene(gene, line);
    return gene;
}

inline nlohmann::json gene_to_json(const GeneInstance& gene) {
    nlohmann::json record;
    record["gene_id"] = gene.gene_id;
    std::vector<Vec> rows(gene.rates.isoforms);
    for (std::size_t i = 0; i < gene.rates.isoforms; ++i) {
        rows[i].resize(gene.rates.categories);
        for (std::size_t j = 0; j < gene.rates.categories; ++j) rows[i][j] = gene.rates.at(i, j);
    }
    record["rates"] = rows;
    record["counts"] = gene.counts.counts;
    if (!gene.rates.isoform_ids.empty()) record["isoform_ids"] = gene.rates.isoform_ids;
    if (!gene.rates.category_ids.empty()) record["category_ids"] = gene.rates.category_ids;
    if (!gene.lengths.empty()) record["lengths"] = gene.lengths;
    if (gene.total_mapped_reads > 0) record["total_mapped_reads"] = gene.total_mapped_reads;
    return record;
}

/// Canonical single-line form: compact JSON with alphabetically ordered keys.
/// Parsing a canonical file and writing it back is byte-identical.
inline std::string write_gene_line(const GeneInstance& gene) {
    return gene_to_json(gene).dump();
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) fields.push_back(field);
    return fields;
}

inline double parse_double(const std::string& text, std::size_t line) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw parse_error("line " + std::to_string(line) + ": expected a number, got '" +
                              text + "'",
                          line);
    }
}

inline std::int64_t parse_int(const std::string& text, std::size_t line) {
    try {
        std::size_t used = 0;
        const std::int64_t value = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw parse_error("line " + std::to_string(line) + ": expected an integer, got '" +
                              text + "'",
                          line);
    }
}

/// Row-keyed single-gene TSV: rows gene_id, category_ids (optional),
/// isoform <id> <rates...>, counts <values...>, length <id> <bp>,
/// total_mapped_reads <value>.
inline GeneInstance parse_gene_tsv(std::istream& in) {
    GeneInstance gene;
    std::vector<Vec> rate_rows;
    std::vector<std::pair<std::string, std::int64_t>> lengths;
    std::string line;
    std::size_t line_no = 0;
    std::size_t last_line = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        last_line = line_no;
        const auto fields = split_tabs(line);
        const std::string& key = fields.front();
        if (key == "gene_id") {
            if (fields.size() != 2)
                throw parse_error("line " + std::to_string(line_no) + ": gene_id needs a value",
                                  line_no);
            if (!gene.gene_id.empty())
                throw parse_error("line " + std::to_string(line_no) +
                                      ": TSV input holds a single gene",
                                  line_no);
            gene.gene_id = fields[1];
        } else if (key == "category_ids") {
            gene.rates.category_ids.assign(fields.begin() + 1, fields.end());
        } else if (key == "isoform") {
            if (fields.size() < 3)
                throw parse_error("line " + std::to_string(line_no) +
                                      ": isoform rows need an id and at least one rate",
                                  line_no);
            gene.rates.isoform_ids.push_back(fields[1]);
            Vec row;
            for (std::size_t f = 2; f < fields.size(); ++f)
                row.push_back(parse_double(fields[f], line_no));
            rate_rows.push_back(std::move(row));
        } else if (key == "counts") {
            for (std::size_t f = 1; f < fields.size(); ++f)
                gene.counts.counts.push_back(parse_int(fields[f], line_no));
        } else if (key == "length") {
            if (fields.size() != 3)
                throw parse_error("line " + std::to_string(line_no) +
                                      ": length rows are 'length <isoform> <bp>'",
                                  line_no);
            lengths.emplace_back(fields[1], parse_int(fields[2], line_no));
        } else if (key == "total_mapped_reads") {
            if (fields.size() != 2)
                throw parse_error("line " + std::to_string(line_no) +
                                      ": total_mapped_reads needs a value",
                                  line_no);
            gene.total_mapped_reads = parse_int(fields[1], line_no);
        } else {
            throw parse_error("line " + std::to_string(line_no) + ": unknown row key '" +
                                  key + "'",
                              line_no);
        }
    }
    const std::vector<std::string> isoform_ids = gene.rates.isoform_ids;
    try {
        gene.rates = SamplingRateMatrix::from_rows(rate_rows);
    } catch (const error& e) {
        throw parse_error(std::string("gene '") + gene.gene_id + "': " + e.what(), last_line);
    }
    gene.rates.isoform_ids = isoform_ids;
    if (!lengths.empty()) {
        gene.lengths.resize(isoform_ids.size(), 0);
        for (const auto& [id, bp] : lengths) {
            bool found = false;
            for (std::size_t i = 0; i < isoform_ids.size(); ++i)
                if (isoform_ids[i] == id) {
                    gene.lengths[i] = bp;
                    found = true;
                }
            if (!found)
                throw parse_error("length row names unknown isoform '" + id + "'", last_line);
        }
    }
    validate_gene(gene, last_line);
    return gene;
}

}  // namespace detail

/// Parses a gene file. Lines starting with '{' are JSON records (one gene per
/// line); otherwise the file is treated as single-gene row-keyed TSV.
inline std::vector<GeneInstance> parse_gene_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open '" + path + "'", 0);

    std::string first_line;
    std::streampos start = in.tellg();
    while (std::getline(in, first_line)) {
        if (!first_line.empty() && first_line[0] != '#') break;
        start = in.tellg();
    }
    const bool json_lines = !first_line.empty() && first_line[0] == '{';
    in.clear();
    in.seekg(0);

    std::vector<GeneInstance> genes;
    if (json_lines) {
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            nlohmann::json record;
            try {
                record = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw parse_error("line " + std::to_string(line_no) + ": " + e.what(),
                                  line_no);
            }
            genes.push_back(gene_from_json(record, line_no));
        }
    } else {
        genes.push_back(detail::parse_gene_tsv(in));
    }
    return genes;
}

}  // namespace isobias
