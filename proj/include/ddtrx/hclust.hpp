#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/tree.hpp"

namespace ddtrx {

/// Agglomerative merge history. Ids below `leaf_count` are rows; id
/// leaf_count + k is the cluster formed by merges[k]. Merges are sorted by
/// nondecreasing height and every merge comes after the merges forming it.
struct Dendrogram {
  struct Merge {
    int left = 0;
    int right = 0;
    double height = 0.0;
    int size = 0;
  };
  int leaf_count = 0;
  std::vector<Merge> merges;
};

inline Eigen::MatrixXd squared_row_distances(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

/// Ward's minimum-variance clustering with heights on the distance scale
/// (Lance-Williams updates on squared distances, height = sqrt), computed with
/// the nearest-neighbour chain algorithm in O(n^2) time.
inline Dendrogram ward_linkage(Eigen::MatrixXd d2) {
  const auto n = static_cast<int>(d2.rows());
  if (n < 2) throw DomainError("ward_linkage needs at least two rows");
  std::vector<int> size(n, 1);
  std::vector<int> cluster(n);
  std::iota(cluster.begin(), cluster.end(), 0);
  std::vector<char> active(n, 1);
  std::vector<Dendrogram::Merge> made;
  made.reserve(n - 1);
  std::vector<int> chain;
  chain.reserve(n);
  int remaining = n;

  while (remaining > 1) {
    if (chain.empty()) {
      for (int i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    }
    const int a = chain.back();
    const int prev = chain.size() > 1 ? chain[chain.size() - 2] : -1;
    int best = prev;
    double best_d = prev >= 0 ? d2(a, prev) : std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == a) continue;
      if (d2(a, k) < best_d) {
        best_d = d2(a, k);
        best = k;
      }
    }
    if (best != prev) {
      chain.push_back(best);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const int b = prev;
    const double dab = d2(a, b);
    const int na = size[a], nb = size[b];
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const int nk = size[k];
      const double v = ((na + nk) * d2(a, k) + (nb + nk) * d2(b, k) - nk * dab) / (na + nb + nk);
      d2(a, k) = v;
      d2(k, a) = v;
    }
    made.push_back({cluster[a], cluster[b], std::sqrt(std::max(0.0, dab)), na + nb});
    size[a] = na + nb;
    cluster[a] = n + static_cast<int>(made.size()) - 1;
    active[b] = 0;
    --remaining;
  }

  // Creation order has children first; clamp heights so sorting keeps that.
  for (auto& m : made)
    for (int child : {m.left, m.right})
      if (child >= n) m.height = std::max(m.height, made[child - n].height);
  std::vector<int> order(made.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return made[x].height < made[y].height; });
  std::vector<int> rank(made.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
  Dendrogram out{n, {}};
  out.merges.reserve(made.size());
  auto relabel = [&](int id) { return id < n ? id : n + rank[id - n]; };
  for (int k : order) {
    auto m = made[k];
    m.left = relabel(m.left);
    m.right = relabel(m.right);
    out.merges.push_back(m);
  }
  return out;
}

inline Dendrogram ward_linkage(const DataMatrix& data) { return ward_linkage(squared_row_distances(data.values)); }

/// Height at which each row first joins a cluster (its leaf branch length).
inline std::vector<double> leaf_merge_heights(const Dendrogram& d) {
  std::vector<double> out(static_cast<std::size_t>(d.leaf_count), 0.0);
  for (const auto& m : d.merges)
    for (int child : {m.left, m.right})
      if (child < d.leaf_count) out[static_cast<std::size_t>(child)] = m.height;
  return out;
}

inline constexpr double kDendrogramRootTime = 0.05;

/// Converts a dendrogram into a Tree. The top merge maps to
/// kDendrogramRootTime and height zero to time 1, linearly in between; ties
/// and zero heights are nudged so times increase strictly toward the leaves.
inline Tree dendrogram_to_tree(const Dendrogram& d, const std::vector<std::string>& labels) {
  const int n = d.leaf_count;
  if (static_cast<int>(labels.size()) != n) throw DomainError("dendrogram_to_tree: label count mismatch");
  const double top = d.merges.back().height;
  std::vector<Node> nodes(static_cast<std::size_t>(2 * n));
  // Node 0 is the root, nodes 1..n the leaves, n+1.. the merges.
  auto node_of = [](int id) { return static_cast<NodeId>(id + 1); };
  for (int i = 0; i < n; ++i) {
    nodes[node_of(i)].time = 1.0;
    nodes[node_of(i)].label = labels[static_cast<std::size_t>(i)];
  }
  for (std::size_t k = 0; k < d.merges.size(); ++k) {
    const auto& m = d.merges[k];
    const NodeId id = node_of(n + static_cast<int>(k));
    nodes[id].children = {node_of(m.left), node_of(m.right)};
    nodes[node_of(m.left)].parent = id;
    nodes[node_of(m.right)].parent = id;
    const double frac = top > 0.0 ? m.height / top : 1.0;
    nodes[id].time = 1.0 - (1.0 - kDendrogramRootTime) * frac;
  }
  const NodeId top_id = node_of(n + static_cast<int>(d.merges.size()) - 1);
  nodes[0].children = {top_id, kNoNode};
  nodes[top_id].parent = 0;

  // Top-down: keep every internal time inside (parent, 1).
  std::vector<NodeId> stack{top_id};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    Node& v = nodes[id];
    if (v.is_leaf()) continue;
    const double floor = nodes[v.parent].time;
    v.time = std::max(std::min(v.time, 1.0 - 1e-6), floor + (1.0 - floor) * 1e-3);
    stack.push_back(v.children[0]);
    stack.push_back(v.children[1]);
  }
  return Tree(std::move(nodes), 0);
}

/// Default chain initialization: Ward dendrogram of the rows of `data`.
inline Tree ward_tree(const DataMatrix& data) { return dendrogram_to_tree(ward_linkage(data), data.row_labels); }

}  // namespace ddtrx
