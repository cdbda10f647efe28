#pragma once

#include <filesystem>
#include <string>

#include "ddtrx/ddtrx.hpp"

namespace fixture {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ddtrx-" + tag + "-" + std::to_string(std::hash<std::string>{}(tag + std::to_string(::getpid()))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Response table with an untreated baseline row: DDT data for `rows`
// treatments plus a baseline, with one missing cell.
inline std::string response_csv(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  using namespace ddtrx;
  Rng rng(RngSeed{seed});
  Tree t = sample_tree(rows, 1.0, rng);
  auto data = diffuse(t, 1.0, cols, rng).data;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows + 1), static_cast<Eigen::Index>(cols));
  Eigen::RowVectorXd base(static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < base.size(); ++j) base(j) = 0.5 * rng.normal();
  x.row(0) = base;
  for (std::size_t i = 0; i < rows; ++i) x.row(static_cast<Eigen::Index>(i + 1)) = data.values.row(static_cast<Eigen::Index>(i)) + base;
  std::vector<std::string> labels{"untreated"};
  for (const auto& l : data.row_labels) labels.push_back("D" + l);
  std::string csv = matrix_csv(x, labels, data.col_labels);
  const auto pos = csv.find('\n', csv.find('\n') + 1) + 1;  // first treatment row
  const auto cell = csv.find(',', pos) + 1;
  csv.replace(cell, csv.find(',', cell) - cell, "NA");
  return csv;
}

inline ddtrx::RunConfig small_config(const std::filesystem::path& out) {
  ddtrx::RunConfig cfg;
  cfg.nsyn = 2000;
  cfg.d = 0.02;
  cfg.chains = 2;
  cfg.chain = {400, 200, 1};
  cfg.seed = 5;
  cfg.shard_size = 500;
  cfg.out = out;
  return cfg;
}

}  // namespace fixture
