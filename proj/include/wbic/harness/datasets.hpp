#pragma once

// CSV ingestion for the case-study datasets. Every error message carries the
// offending row (1-based, header = row 1) and column.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wbic/conjugate_regression.hpp"
#include "wbic/glm_logistic.hpp"

namespace wbic::harness {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Schema { pine, pima, mixture };

struct SchemaInfo {
    std::vector<std::string> header;
    std::optional<std::size_t> expected_rows;
};

inline SchemaInfo schema_info(Schema s) {
    switch (s) {
    case Schema::pine: return {{"y", "x", "z"}, 42};
    case Schema::pima: return {{"NP", "PGC", "BP", "TST", "BMI", "DP", "AGE", "diabetes"}, 532};
    case Schema::mixture: return {{"y"}, std::nullopt};
    }
    throw std::invalid_argument("unknown schema");
}

/// Column-major numeric table.
struct Dataset {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    [[nodiscard]] const std::vector<double>& column(std::string_view name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw DatasetError("no column named '" + std::string(name) + "'");
        }
        return columns[static_cast<std::size_t>(it - header.begin())];
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\"");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

inline std::optional<double> parse_number(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::optional<double> parse_binary(const std::string& cell) {
    std::string lower(cell);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "yes") {
        return 1.0;
    }
    if (lower == "no") {
        return 0.0;
    }
    auto v = parse_number(cell);
    if (v && (*v == 0.0 || *v == 1.0)) {
        return v;
    }
    return std::nullopt;
}

}  // namespace detail

/// Reads and validates a CSV file against a schema. The Pima `diabetes`
/// column accepts 0/1 or Yes/No.
inline Dataset ingest_csv(const std::filesystem::path& path, Schema schema) {
    if (!std::filesystem::exists(path)) {
        throw DatasetError("dataset file not found: " + path.string());
    }
    std::ifstream in(path);
    if (!in) {
        throw DatasetError("cannot open dataset file: " + path.string());
    }
    const auto info = schema_info(schema);
    std::string line;
    if (!std::getline(in, line)) {
        throw DatasetError(path.string() + ": empty file, expected header");
    }
    const auto header = detail::split(line);
    if (header != info.header) {
        std::string expected;
        for (const auto& h : info.header) {
            expected += (expected.empty() ? "" : ",") + h;
        }
        throw DatasetError(path.string() + ": row 1: header mismatch, expected '" + expected + "', got '" +
                           detail::trim(line) + "'");
    }
    Dataset data{info.header, std::vector<std::vector<double>>(info.header.size())};
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto cells = detail::split(line);
        if (cells.size() != info.header.size()) {
            throw DatasetError(path.string() + ": row " + std::to_string(row) + ": expected " +
                               std::to_string(info.header.size()) + " columns, got " + std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const bool binary = schema == Schema::pima && info.header[c] == "diabetes";
            const auto v = binary ? detail::parse_binary(cells[c]) : detail::parse_number(cells[c]);
            if (!v) {
                throw DatasetError(path.string() + ": row " + std::to_string(row) + ", column " +
                                   std::to_string(c + 1) + " (" + info.header[c] + "): invalid value '" + cells[c] +
                                   "'");
            }
            data.columns[c].push_back(*v);
        }
    }
    if (info.expected_rows && data.rows() != *info.expected_rows) {
        throw DatasetError(path.string() + ": expected " + std::to_string(*info.expected_rows) +
                           " data rows, got " + std::to_string(data.rows()));
    }
    if (data.rows() == 0) {
        throw DatasetError(path.string() + ": no data rows");
    }
    return data;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Pine data: strength y with the two competing (centred) designs.
struct PineData {
    Eigen::VectorXd y;
    Eigen::MatrixXd design_density;   // Model 1: intercept + (x - xbar)
    Eigen::MatrixXd design_adjusted;  // Model 2: intercept + (z - zbar)
};

inline PineData pine_from(const Dataset& d) {
    return {to_vector(d.column("y")), linreg::centered_design(to_vector(d.column("x"))),
            linreg::centered_design(to_vector(d.column("z")))};
}

/// Pima data with standardized covariates for the two candidate models:
/// Model 1 = {NP, PGC, BMI, DP}, Model 2 = Model 1 + {AGE}, both with intercept.
struct PimaData {
    Eigen::VectorXd y;
    Eigen::MatrixXd design_model1;
    Eigen::MatrixXd design_model2;
};

inline PimaData pima_from(const Dataset& d) {
    const std::vector<std::string> m1 = {"NP", "PGC", "BMI", "DP"};
    auto build = [&](const std::vector<std::string>& cols) {
        Eigen::MatrixXd raw(static_cast<Eigen::Index>(d.rows()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) {
            raw.col(static_cast<Eigen::Index>(j)) = to_vector(d.column(cols[j]));
        }
        return logistic::standardized_design(raw);
    };
    auto m2 = m1;
    m2.push_back("AGE");
    return {to_vector(d.column("diabetes")), build(m1), build(m2)};
}

}  // namespace wbic::harness
