#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace isobias {

class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix sizes.
class dimension_error : public error {
  public:
    using error::error;
};

/// A type invariant does not hold (negative rate, non-finite entry, ...).
class validation_error : public error {
  public:
    using error::error;
};

/// A category with a positive count has fitted mean zero.
class infeasible_model_error : public error {
  public:
    using error::error;
};

/// An isoform has zero total sampling rate and cannot be estimated.
class degenerate_isoform_error : public error {
  public:
    using error::error;
};

/// The bias support found in step one is too large for an identifiable refit.
class identifiability_error : public error {
  public:
    identifiability_error(const std::string& msg, std::vector<std::size_t> categories)
        : error(msg), offending_categories(std::move(categories)) {}

    std::vector<std::size_t> offending_categories;
};

class parse_error : public error {
  public:
    parse_error(const std::string& msg, std::size_t line_number)
        : error(msg), line(line_number) {}

    std::size_t line = 0;
};

}  // namespace isobias
