#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddtrx/error.hpp"
#include "ddtrx/tree.hpp"

namespace ddtrx {

/// Tree-structured correlation matrix: unit diagonal, entry (i, i') is the
/// time at which the paths to leaves i and i' separate.
struct TreeCov {
  Eigen::MatrixXd entries;
  std::vector<std::string> leaf_order;

  std::size_t dim() const { return leaf_order.size(); }
};

// Position of each leaf of `tree` within `order`; -1 marks leaves not listed.
inline std::vector<int> leaf_positions(const Tree& tree, const std::vector<std::string>& order) {
  if (order.size() != tree.leaf_count())
    throw DomainError("leaf order has " + std::to_string(order.size()) + " labels but the tree has " +
                      std::to_string(tree.leaf_count()) + " leaves");
  std::vector<int> pos(tree.node_count(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    NodeId id = tree.leaf(order[i]);
    if (pos[id] != -1) throw DomainError("duplicate label '" + order[i] + "' in leaf order");
    pos[id] = static_cast<int>(i);
  }
  return pos;
}

inline TreeCov build_cov(const Tree& tree, const std::vector<std::string>& order) {
  const auto pos = leaf_positions(tree, order);
  const auto n = static_cast<Eigen::Index>(order.size());
  TreeCov out{Eigen::MatrixXd::Identity(n, n), order};

  // Leaf positions below each node, accumulated bottom-up.
  std::vector<std::vector<int>> below(tree.node_count());
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const NodeId id = *it;
    const Node& v = tree[id];
    if (v.is_leaf()) {
      below[id].push_back(pos[id]);
      continue;
    }
    if (v.children[1] == kNoNode) {
      below[id] = std::move(below[v.children[0]]);
      continue;
    }
    auto& left = below[v.children[0]];
    auto& right = below[v.children[1]];
    for (int a : left)
      for (int b : right) {
        out.entries(a, b) = v.time;
        out.entries(b, a) = v.time;
      }
    below[id] = std::move(left);
    below[id].insert(below[id].end(), right.begin(), right.end());
    right.clear();
  }
  return out;
}

inline TreeCov build_cov(const Tree& tree) { return build_cov(tree, tree.leaf_labels()); }

// Most recent common ancestor of the given leaves.
inline NodeId mrca(const Tree& tree, const std::vector<NodeId>& leaves) {
  if (leaves.empty()) throw DomainError("mrca of an empty set");
  std::vector<char> marked(tree.node_count(), 0);
  NodeId current = leaves.front();
  for (NodeId v = current; v != kNoNode; v = tree[v].parent) marked[v] = 1;
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    NodeId v = leaves[i];
    while (!marked[v]) v = tree[v].parent;
    // `v` is the lowest marked ancestor; it replaces `current` when it is higher.
    if (tree[v].time < tree[current].time) {
      for (NodeId w = current; w != v; w = tree[w].parent) marked[w] = 0;
      current = v;
    }
  }
  return current;
}

inline double mrca_time(const Tree& tree, const std::vector<std::string>& subset) {
  std::set<std::string> unique(subset.begin(), subset.end());
  if (unique.size() < 2) throw DomainError("mrca_time needs at least two distinct leaves");
  std::vector<NodeId> ids;
  ids.reserve(unique.size());
  for (const auto& label : unique) ids.push_back(tree.leaf(label));
  return tree[mrca(tree, ids)].time;
}

struct UltrametricViolation {
  enum class Kind { asymmetric, diagonal, out_of_range, triangle };
  Kind kind;
  std::size_t i = 0, j = 0, k = 0;
  double amount = 0.0;
};

struct UltrametricReport {
  bool ok = true;
  std::optional<UltrametricViolation> worst;
};

/// Checks unit diagonal, symmetry, entries in [0,1] and the three-point
/// condition m(i,j) >= min(m(i,k), m(j,k)), all within `tol`. The report keeps
/// the largest violation; triangle violations name the offending triple.
inline UltrametricReport validate_ultrametric(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) throw DomainError("validate_ultrametric: matrix is not square");
  UltrametricReport report;
  auto note = [&](UltrametricViolation v) {
    if (v.amount <= tol) return;
    report.ok = false;
    if (!report.worst || v.amount > report.worst->amount) report.worst = v;
  };
  const auto n = static_cast<std::size_t>(m.rows());
  using K = UltrametricViolation::Kind;
  for (std::size_t i = 0; i < n; ++i) {
    note({K::diagonal, i, i, i, std::abs(m(i, i) - 1.0)});
    for (std::size_t j = i + 1; j < n; ++j) {
      note({K::asymmetric, i, j, j, std::abs(m(i, j) - m(j, i))});
      note({K::out_of_range, i, j, j, std::max(-m(i, j), m(i, j) - 1.0)});
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        double floor = std::min(m(i, k), m(j, k));
        note({K::triangle, i, j, k, floor - m(i, j)});
      }
  return report;
}

}  // namespace ddtrx
