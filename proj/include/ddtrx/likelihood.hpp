#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/tree.hpp"
#include "ddtrx/tree_cov.hpp"

namespace ddtrx {

struct EuclideanParams {
  double c = 1.0;       // divergence parameter
  double sigma2 = 1.0;  // diffusion variance

  void check() const {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("divergence parameter c must be positive");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw DomainError("diffusion variance must be positive");
  }
};

inline double harmonic(int n) {
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  return h;
}

/// H(l+r-1) - H(l-1) - H(r-1): the exponent weight for a node that splits
/// l leaves from r leaves.
inline double harmonic_J(int l, int r) {
  if (l < 1 || r < 1) throw DomainError("harmonic_J needs positive leaf counts");
  return harmonic(l + r - 1) - harmonic(l - 1) - harmonic(r - 1);
}

/// Log density of topology and divergence times under divergence function
/// a(t) = c / (1 - t). Sums, over non-root internal nodes v with l and r leaves
/// below its two children, log[(l-1)!(r-1)!/(l+r-1)!] + log c + (c J(l,r) - 1) log(1 - t_v).
inline double log_tree_prior(const Tree& tree, double c) {
  if (!(c > 0.0)) throw DomainError("log_tree_prior: c must be positive");
  const auto& counts = tree.leaf_counts();
  double total = 0.0;
  for (NodeId id : tree.preorder()) {
    const Node& v = tree[id];
    if (id == tree.root() || v.is_leaf()) continue;
    if (!(v.time < 1.0)) throw DomainError("log_tree_prior: internal divergence time must be below 1");
    const int l = counts[v.children[0]];
    const int r = counts[v.children[1]];
    total += std::lgamma(l) + std::lgamma(r) - std::lgamma(l + r);
    total += std::log(c) + (c * harmonic_J(l, r) - 1.0) * std::log1p(-v.time);
  }
  return total;
}

namespace detail {

[[noreturn]] inline void throw_singular(const TreeCov& cov) {
  std::size_t best_i = 0, best_j = cov.dim() > 1 ? 1 : 0;
  double best = -1.0;
  for (std::size_t i = 0; i < cov.dim(); ++i)
    for (std::size_t j = i + 1; j < cov.dim(); ++j)
      if (cov.entries(i, j) > best) {
        best = cov.entries(i, j);
        best_i = i;
        best_j = j;
      }
  throw SingularCovarianceError(cov.leaf_order[best_i], cov.leaf_order[best_j]);
}

}  // namespace detail

inline constexpr double kMinCholeskyPivot = 1e-12;

/// Log density of the columns of `data` as iid N_I(0, sigma2 * cov).
/// One Cholesky factor is shared by all J columns.
inline double log_likelihood(const DataMatrix& data, const TreeCov& cov, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("log_likelihood: sigma2 must be positive");
  if (cov.dim() != data.rows()) throw DomainError("log_likelihood: data rows do not match the tree leaves");
  const auto n = static_cast<double>(data.rows());
  const auto cols = static_cast<double>(data.cols());

  Eigen::LLT<Eigen::MatrixXd> llt(cov.entries);
  if (llt.info() != Eigen::Success) detail::throw_singular(cov);
  const Eigen::MatrixXd& lower = llt.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double pivot = lower(i, i);
    if (!(pivot * pivot > kMinCholeskyPivot)) detail::throw_singular(cov);
    log_det += 2.0 * std::log(pivot);
  }
  Eigen::MatrixXd z = llt.matrixL().solve(data.values);
  const double quad = z.squaredNorm() / sigma2;
  return -0.5 * cols * (n * std::log(2.0 * std::numbers::pi * sigma2) + log_det) - 0.5 * quad;
}

inline double log_likelihood(const DataMatrix& data, const Tree& tree, double sigma2) {
  if (data.rows() < 2) throw DomainError("log_likelihood needs at least two leaves");
  return log_likelihood(data, build_cov(tree, data.row_labels), sigma2);
}

}  // namespace ddtrx
