#pragma once

// Minimal CSV ingestion for two-period panels: header row, comma separator,
// optional double-quoted fields, decimal-point numbers.

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trendtest/errors.hpp"
#include "trendtest/panel.hpp"

namespace trendtest {

// Maps panel roles to column names. When `covariates` is empty and
// `all_other_columns` is set, every column not claimed by a role becomes a
// covariate, in file order.
struct CsvSchema {
  std::string y0;
  std::string y1;
  std::string d;
  std::optional<std::string> id;
  std::vector<std::string> covariates;
  bool all_other_columns = true;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_number(const std::string& text, std::size_t row, const std::string& column) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(begin, &end);
  // allow surrounding spaces, nothing else
  const char* tail = end;
  while (tail && (*tail == ' ' || *tail == '\t')) ++tail;
  const char* head = begin;
  while (*head == ' ' || *head == '\t') ++head;
  if (end == begin || head == end || (tail && *tail != '\0') || errno == ERANGE) {
    throw ParseError("cannot parse '" + text + "' as a number (column '" + column +
                     "', data row " + std::to_string(row) + ")");
  }
  return value;
}

}  // namespace detail

inline PanelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open input file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("file '" + path + "' has no header row");
  const std::vector<std::string> header = detail::split_csv_line(line);

  auto column_index = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  auto required = [&](const std::string& name, const char* role) {
    const int idx = column_index(name);
    if (idx < 0) {
      throw SchemaError(std::string("column '") + name + "' (mapped to " + role +
                        ") not found in '" + path + "'");
    }
    return idx;
  };

  const int iy0 = required(schema.y0, "y0");
  const int iy1 = required(schema.y1, "y1");
  const int id_treat = required(schema.d, "d");
  int id_col = -1;
  if (schema.id) id_col = required(*schema.id, "id");

  std::vector<int> cov_idx;
  std::vector<std::string> cov_names;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) {
      cov_idx.push_back(required(name, "covariate"));
      cov_names.push_back(name);
    }
  } else if (schema.all_other_columns) {
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
      if (j == iy0 || j == iy1 || j == id_treat || j == id_col) continue;
      cov_idx.push_back(j);
      cov_names.push_back(header[static_cast<std::size_t>(j)]);
    }
  }

  std::vector<double> y0_vals, y1_vals;
  std::vector<int> d_vals;
  std::vector<std::string> ids;
  std::vector<double> x_vals;  // row-major
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("data row " + std::to_string(row) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(header.size()));
    }
    y0_vals.push_back(detail::parse_number(fields[static_cast<std::size_t>(iy0)], row, schema.y0));
    y1_vals.push_back(detail::parse_number(fields[static_cast<std::size_t>(iy1)], row, schema.y1));
    const double dv = detail::parse_number(fields[static_cast<std::size_t>(id_treat)], row, schema.d);
    if (dv != 0.0 && dv != 1.0) {
      throw ValidationError("treatment column '" + schema.d + "' must be 0 or 1, found '" +
                            fields[static_cast<std::size_t>(id_treat)] + "' in data row " +
                            std::to_string(row));
    }
    d_vals.push_back(static_cast<int>(dv));
    if (id_col >= 0) ids.push_back(fields[static_cast<std::size_t>(id_col)]);
    for (std::size_t k = 0; k < cov_idx.size(); ++k) {
      x_vals.push_back(detail::parse_number(fields[static_cast<std::size_t>(cov_idx[k])], row,
                                            cov_names[k]));
    }
  }

  PanelDataset ds;
  const Eigen::Index n = static_cast<Eigen::Index>(y0_vals.size());
  const Eigen::Index p = static_cast<Eigen::Index>(cov_idx.size());
  ds.y0 = Eigen::Map<Eigen::VectorXd>(y0_vals.data(), n);
  ds.y1 = Eigen::Map<Eigen::VectorXd>(y1_vals.data(), n);
  ds.d = Eigen::Map<Eigen::VectorXi>(d_vals.data(), n);
  ds.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) ds.X(i, j) = x_vals[static_cast<std::size_t>(i * p + j)];
  ds.covariate_names = cov_names;
  ds.unit_ids = ids;
  validate(ds);
  return ds;
}

// Inverse of load_csv for validated panels; numbers are written with 17
// significant digits so that a reload reproduces them exactly.
inline void write_csv(const PanelDataset& ds, const std::string& path,
                      const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open output file '" + path + "'");
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  if (schema.id && !ds.unit_ids.empty()) out << *schema.id << ",";
  out << schema.y0 << "," << schema.y1 << "," << schema.d;
  for (const auto& name : ds.covariate_names) out << "," << name;
  out << "\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (schema.id && !ds.unit_ids.empty()) out << ds.unit_ids[static_cast<std::size_t>(i)] << ",";
    out << num(ds.y0[i]) << "," << num(ds.y1[i]) << "," << ds.d[i];
    for (Eigen::Index j = 0; j < ds.p(); ++j) out << "," << num(ds.X(i, j));
    out << "\n";
  }
}

}  // namespace trendtest
