#pragma once

// CSV ingestion for design/response data and CSV/JSON emission of results.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selinf/errors.hpp"
#include "selinf/inference.hpp"

namespace selinf {

struct CsvOptions {
    bool header = false;
    // drop constant columns (no variation across rows) before fitting
    bool drop_constant_columns = true;
};

struct CsvTable {
    Matrix values;
    std::vector<std::string> column_names;
    std::vector<int> kept_columns; // original indices surviving preprocessing
};

namespace detail {

inline double parse_cell(const std::string& cell, const std::string& file, int line,
                         int column) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    // allow trailing whitespace only
    std::size_t tail = cell.find_last_not_of(" \t\r");
    if (pos == 0 || (tail != std::string::npos && pos <= tail) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << file << ":" << line << ": column " << column << ": cannot parse '" << cell
            << "' as a finite number";
        throw ParseError(msg.str());
    }
    return v;
}

} // namespace detail

/// Read a rectangular numeric CSV. Throws ParseError with file/line/column
/// on malformed cells and ShapeMismatch on ragged rows or empty input.
inline CsvTable ingest_csv(const std::string& path, const CsvOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");

    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");

        if (lineno == 1 && opt.header) {
            names = cells;
            width = cells.size();
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            std::ostringstream msg;
            msg << path << ":" << lineno << ": expected " << width << " columns, got "
                << cells.size();
            throw ShapeMismatch(msg.str());
        }
        std::vector<double> row;
        row.reserve(width);
        for (std::size_t c = 0; c < cells.size(); ++c)
            row.push_back(detail::parse_cell(cells[c], path, lineno, static_cast<int>(c) + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ShapeMismatch(path + ": no data rows");

    Matrix full(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) full(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];

    CsvTable table;
    if (names.empty())
        for (std::size_t j = 0; j < width; ++j) names.push_back("x" + std::to_string(j));

    if (opt.drop_constant_columns && width > 1) {
        for (int j = 0; j < full.cols(); ++j) {
            const double spread = full.col(j).maxCoeff() - full.col(j).minCoeff();
            if (spread > 0.0) table.kept_columns.push_back(j);
        }
        if (table.kept_columns.empty()) throw ShapeMismatch(path + ": all columns constant");
        table.values.resize(full.rows(), static_cast<int>(table.kept_columns.size()));
        for (std::size_t j = 0; j < table.kept_columns.size(); ++j) {
            table.values.col(static_cast<int>(j)) = full.col(table.kept_columns[j]);
            table.column_names.push_back(names[table.kept_columns[j]]);
        }
    } else {
        table.values = full;
        table.column_names = names;
        for (int j = 0; j < full.cols(); ++j) table.kept_columns.push_back(j);
    }
    return table;
}

inline nlohmann::json report_to_json(const InferenceReport& report) {
    nlohmann::json out;
    out["method"] = report.method;
    out["entries"] = nlohmann::json::array();
    for (const auto& e : report.entries) {
        out["entries"].push_back({{"index", e.index},
                                  {"estimate", e.estimate},
                                  {"p_value", e.p_value},
                                  {"ci_lower", e.ci_lower},
                                  {"ci_upper", e.ci_upper},
                                  {"boundary_stderr", e.boundary_stderr},
                                  {"ess_collapsed", e.ess_collapsed}});
    }
    return out;
}

inline std::string report_to_csv(const InferenceReport& report) {
    std::ostringstream out;
    out << std::setprecision(12);
    out << "index,estimate,p_value,ci_lower,ci_upper,boundary_stderr,ess_collapsed\n";
    for (const auto& e : report.entries)
        out << e.index << ',' << e.estimate << ',' << e.p_value << ',' << e.ci_lower << ','
            << e.ci_upper << ',' << e.boundary_stderr << ',' << (e.ess_collapsed ? 1 : 0)
            << '\n';
    return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << text;
}

} // namespace selinf
