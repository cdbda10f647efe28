#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/io.hpp"

namespace ddtrx {

/// Treatments x patients responses with missing cells stored as NaN.
struct RawPdxTable {
  std::vector<std::string> treatments;
  std::vector<std::string> patients;
  Eigen::MatrixXd values;
  std::string untreated = "untreated";

  bool missing(Eigen::Index i, Eigen::Index j) const { return std::isnan(values(i, j)); }
  Eigen::Index untreated_row() const {
    auto it = std::find(treatments.begin(), treatments.end(), untreated);
    if (it == treatments.end()) throw DomainError("no untreated row named '" + untreated + "'");
    return static_cast<Eigen::Index>(it - treatments.begin());
  }
};

inline bool is_missing_cell(const std::string& s) {
  std::string t;
  for (char ch : s)
    if (ch != ' ' && ch != '\t') t += ch;
  return t.empty() || t == "NA" || t == "NaN" || t == "nan";
}

inline RawPdxTable parse_pdx_csv(std::string_view text, const std::string& untreated = "untreated") {
  const CsvRows rows = parse_csv(text);
  if (rows.size() < 2) throw ParseError("response table needs a header and at least one row", 0);
  const auto& header = rows.front();
  if (header.size() < 2) throw ParseError("response table needs at least one patient column", 0);
  RawPdxTable t;
  t.untreated = untreated;
  t.patients.assign(header.begin() + 1, header.end());
  if (std::set<std::string>(t.patients.begin(), t.patients.end()).size() != t.patients.size())
    throw ParseError("duplicate patient id in header", 0);
  t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(t.patients.size()));
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw ParseError("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) + " fields, expected " +
                           std::to_string(header.size()),
                       r + 1);
    if (!seen.insert(rows[r][0]).second) throw ParseError("duplicate treatment '" + rows[r][0] + "'", r + 1);
    t.treatments.push_back(rows[r][0]);
    for (std::size_t c = 1; c < header.size(); ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!is_missing_cell(rows[r][c])) {
        auto parsed = parse_number(rows[r][c]);
        if (!parsed || !std::isfinite(*parsed))
          throw ParseError("row " + std::to_string(r + 1) + ": '" + rows[r][c] + "' is not a number", r + 1);
        v = *parsed;
      }
      t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
    }
  }
  // An empty untreated name means the table carries no baseline row.
  if (!untreated.empty()) t.untreated_row();
  if (t.treatments.size() < (untreated.empty() ? 1u : 2u)) throw DomainError("no treatment rows");
  return t;
}

inline RawPdxTable load_csv(const fs::path& path, const std::string& untreated = "untreated") {
  return parse_pdx_csv(read_text(path), untreated);
}

/// Fills each missing cell with the mean of that column over the k nearest
/// rows observing it. Row distance is Euclidean over co-observed columns,
/// rescaled by sqrt(J / overlap); rows with no overlap are not neighbours,
/// and a cell with no neighbour at all gets its column mean.
inline RawPdxTable knn_impute(const RawPdxTable& table, std::size_t k = 10) {
  if (k < 1) throw DomainError("knn_impute: k must be at least 1");
  const Eigen::Index n = table.values.rows();
  const Eigen::Index m = table.values.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < m; ++j) any = any || !table.missing(i, j);
    if (!any) throw DomainError("knn_impute: row '" + table.treatments[static_cast<std::size_t>(i)] + "' is entirely missing");
  }
  RawPdxTable out = table;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> holes;
    for (Eigen::Index j = 0; j < m; ++j)
      if (table.missing(i, j)) holes.push_back(j);
    if (holes.empty()) continue;
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == i) continue;
      double s = 0.0;
      int overlap = 0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (table.missing(i, j) || table.missing(r, j)) continue;
        const double d = table.values(i, j) - table.values(r, j);
        s += d * d;
        ++overlap;
      }
      if (overlap > 0) dist[static_cast<std::size_t>(r)] = std::sqrt(s * static_cast<double>(m) / overlap);
    }
    for (Eigen::Index j : holes) {
      std::vector<Eigen::Index> cand;
      for (Eigen::Index r = 0; r < n; ++r)
        if (r != i && !table.missing(r, j) && std::isfinite(dist[static_cast<std::size_t>(r)])) cand.push_back(r);
      if (cand.empty()) {
        double s = 0.0;
        int cnt = 0;
        for (Eigen::Index r = 0; r < n; ++r)
          if (!table.missing(r, j)) {
            s += table.values(r, j);
            ++cnt;
          }
        if (cnt == 0) throw DomainError("knn_impute: column '" + table.patients[static_cast<std::size_t>(j)] + "' is entirely missing");
        out.values(i, j) = s / cnt;
        continue;
      }
      const auto take = std::min(k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
                          return da < db || (da == db && a < b);
                        });
      double s = 0.0;
      for (std::size_t q = 0; q < take; ++q) s += table.values(cand[q], j);
      out.values(i, j) = s / static_cast<double>(take);
    }
  }
  return out;
}

/// Standard deviation over every observed cell of the table.
inline double global_sd(const RawPdxTable& table) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < table.values.rows(); ++i)
    for (Eigen::Index j = 0; j < table.values.cols(); ++j)
      if (!table.missing(i, j)) v.push_back(table.values(i, j));
  if (v.size() < 2) throw DomainError("global standard deviation needs two observed cells");
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline RawPdxTable scale_by_global_sd(const RawPdxTable& table) {
  const double sd = global_sd(table);
  if (!(sd > 0.0)) throw DomainError("global standard deviation is zero");
  RawPdxTable out = table;
  out.values /= sd;
  return out;
}

/// Subtracts the untreated row from every treatment row and drops it.
inline DataMatrix subtract_untreated(const RawPdxTable& table) {
  if (!table.values.allFinite()) throw DomainError("subtract_untreated needs a complete table");
  const Eigen::Index u = table.untreated_row();
  const Eigen::Index n = table.values.rows();
  Eigen::MatrixXd x(n - 1, table.values.cols());
  std::vector<std::string> labels;
  for (Eigen::Index i = 0, r = 0; i < n; ++i) {
    if (i == u) continue;
    x.row(r++) = table.values.row(i) - table.values.row(u);
    labels.push_back(table.treatments[static_cast<std::size_t>(i)]);
  }
  return make_data(std::move(x), std::move(labels), table.patients);
}

/// Complete table: global-SD scaling, then baseline subtraction.
inline DataMatrix scale_and_center(const RawPdxTable& table) {
  if (!table.values.allFinite()) throw DomainError("scale_and_center needs a complete table");
  return subtract_untreated(scale_by_global_sd(table));
}

/// Scale, impute, subtract, in that order.
inline DataMatrix preprocess(const RawPdxTable& table, std::size_t k = 10) {
  return subtract_untreated(knn_impute(scale_by_global_sd(table), k));
}

struct QqPoint {
  double theoretical = 0.0;
  double sample = 0.0;
};

/// Squared Mahalanobis distances of the patient columns (ridge-regularized
/// sample covariance, ridge 1e-3 trace/I), sorted and paired with chi-square(I)
/// quantiles at (j - 0.5)/J.
inline std::vector<QqPoint> mvn_qq_points(const DataMatrix& data) {
  const auto rows = static_cast<Eigen::Index>(data.rows());
  const auto cols = static_cast<Eigen::Index>(data.cols());
  if (cols < 3) throw DomainError("mvn_qq_points needs at least three columns");
  const Eigen::VectorXd mu = data.values.rowwise().mean();
  const Eigen::MatrixXd centered = data.values.colwise() - mu;
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(cols - 1);
  const double ridge = 1e-3 * cov.trace() / static_cast<double>(rows);
  if (!(ridge > 0.0)) throw DomainError("mvn_qq_points: covariance is degenerate");
  cov.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError("mvn_qq_points: covariance is degenerate after ridge");
  const Eigen::MatrixXd z = llt.matrixL().solve(centered);
  std::vector<double> d2(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j) d2[static_cast<std::size_t>(j)] = z.col(j).squaredNorm();
  std::sort(d2.begin(), d2.end());
  boost::math::chi_squared dist(static_cast<double>(rows));
  std::vector<QqPoint> out;
  out.reserve(d2.size());
  for (std::size_t j = 0; j < d2.size(); ++j)
    out.push_back({boost::math::quantile(dist, (static_cast<double>(j) + 0.5) / static_cast<double>(cols)), d2[j]});
  return out;
}

}  // namespace ddtrx
