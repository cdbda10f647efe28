#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "ddtrx/error.hpp"

namespace ddtrx {

/// I x J responses: rows are treatments (tree leaves), columns are patients.
struct DataMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

  void check() const {
    if (row_labels.size() != rows() || col_labels.size() != cols())
      throw DomainError("data matrix labels do not match its shape");
    if (std::set<std::string>(row_labels.begin(), row_labels.end()).size() != row_labels.size())
      throw DomainError("duplicate row label in data matrix");
    if (std::set<std::string>(col_labels.begin(), col_labels.end()).size() != col_labels.size())
      throw DomainError("duplicate column label in data matrix");
    if (!values.allFinite()) throw DomainError("data matrix has non-finite entries");
  }
};

inline std::vector<std::string> numbered_labels(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline DataMatrix make_data(Eigen::MatrixXd values, std::vector<std::string> rows = {},
                            std::vector<std::string> cols = {}) {
  if (rows.empty()) rows = numbered_labels("T", static_cast<std::size_t>(values.rows()));
  if (cols.empty()) cols = numbered_labels("P", static_cast<std::size_t>(values.cols()));
  DataMatrix d{std::move(values), std::move(rows), std::move(cols)};
  d.check();
  return d;
}

}  // namespace ddtrx
