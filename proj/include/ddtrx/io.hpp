#pragma once

#include <openssl/evp.h>

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/tree.hpp"

namespace ddtrx {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

inline std::string file_sha256(const fs::path& path) { return sha256_hex(read_text(path)); }

using CsvRows = std::vector<std::vector<std::string>>;

/// RFC 4180 style: quoted fields may hold commas, doubled quotes and newlines.
inline CsvRows parse_csv(std::string_view text) {
  CsvRows rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += ch;
      field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field", text.size());
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string format_number(double x) { return detail::format_double(x); }

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Labeled matrix as CSV: header "label,c1,c2,...", then one labeled row each.
inline std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& rows,
                              const std::vector<std::string>& cols) {
  std::string out = "label";
  for (const auto& c : cols) out += "," + csv_field(c);
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += csv_field(rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += "," + format_number(m(i, j));
    out += "\n";
  }
  return out;
}

inline std::string data_csv(const DataMatrix& d) { return matrix_csv(d.values, d.row_labels, d.col_labels); }

/// Inverse of matrix_csv. Every cell must be a finite number.
inline DataMatrix parse_matrix_csv(std::string_view text) {
  const CsvRows rows = parse_csv(text);
  if (rows.size() < 2) throw ParseError("matrix CSV needs a header and at least one row", 0);
  const auto& header = rows.front();
  if (header.size() < 2) throw ParseError("matrix CSV header needs at least one column", 0);
  const auto nc = header.size() - 1;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(nc));
  std::vector<std::string> row_labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw ParseError("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) + " fields, expected " +
                           std::to_string(header.size()),
                       r + 1);
    row_labels.push_back(rows[r][0]);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto v = parse_number(rows[r][c + 1]);
      if (!v) throw ParseError("row " + std::to_string(r + 1) + ": '" + rows[r][c + 1] + "' is not a number", r + 1);
      values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  DataMatrix d{std::move(values), std::move(row_labels), std::vector<std::string>(header.begin() + 1, header.end())};
  d.check();
  return d;
}

}  // namespace ddtrx
