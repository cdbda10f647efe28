#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/tree.hpp"
#include "ddtrx/tree_cov.hpp"

namespace ddtrx {

/// Possibly multifurcating hierarchy. Leaves sit at level 1; an internal
/// node's level is the similarity shared by leaves joined there.
struct MergeTree {
  struct Node {
    std::vector<int> children;
    double level = 1.0;
    std::string label;
  };
  std::vector<Node> nodes;
  int root = -1;
};

inline std::string merge_tree_newick(const MergeTree& t) {
  std::function<void(int, std::string&)> write = [&](int id, std::string& out) {
    const auto& v = t.nodes[static_cast<std::size_t>(id)];
    if (v.children.empty()) {
      out += detail::quote_label(v.label);
      return;
    }
    out += '(';
    for (std::size_t k = 0; k < v.children.size(); ++k) {
      if (k) out += ',';
      const int c = v.children[k];
      write(c, out);
      out += ':';
      out += detail::format_double(t.nodes[static_cast<std::size_t>(c)].level - v.level);
    }
    out += ')';
  };
  std::string out = "(";
  write(t.root, out);
  out += ':';
  out += detail::format_double(t.nodes[static_cast<std::size_t>(t.root)].level);
  out += ");";
  return out;
}

struct UltrametricProjection {
  TreeCov cov;
  MergeTree tree;
  double distance = 0.0;  // Frobenius distance to the input
  bool exact = false;     // exhaustive search was used
};

inline constexpr std::size_t kExhaustiveProjectionLimit = 7;
inline constexpr double kLevelTolerance = 1e-12;

namespace detail {

// Internal node of a binary hierarchy over leaf bitmasks.
struct Split {
  std::uint64_t left = 0;
  std::uint64_t right = 0;
  int parent = -1;
};

// Calls fn once per rooted binary topology on the leaves in `all`.
inline void for_each_topology(std::uint64_t all, const std::function<void(const std::vector<Split>&)>& fn) {
  std::vector<Split> splits;
  std::vector<std::pair<std::uint64_t, int>> pending{{all, -1}};
  std::function<void()> rec = [&] {
    if (pending.empty()) {
      fn(splits);
      return;
    }
    const auto [mask, parent] = pending.back();
    pending.pop_back();
    if (std::popcount(mask) == 1) {
      rec();
    } else {
      const std::uint64_t low = mask & (~mask + 1);
      const std::uint64_t rest = mask ^ low;
      // Subsets A of mask that contain the lowest leaf, A != mask.
      for (std::uint64_t sub = rest;; sub = (sub - 1) & rest) {
        const std::uint64_t a = sub | low;
        if (a != mask) {
          const int id = static_cast<int>(splits.size());
          splits.push_back({a, mask ^ a, parent});
          pending.emplace_back(a, id);
          pending.emplace_back(mask ^ a, id);
          rec();
          pending.pop_back();
          pending.pop_back();
          splits.pop_back();
        }
        if (sub == 0) break;
      }
    }
    pending.emplace_back(mask, parent);
  };
  rec();
}

struct NodeStats {
  double weight = 0.0;  // number of leaf pairs joined at the node
  double sum = 0.0;     // sum of their entries
  double sumsq = 0.0;
};

inline NodeStats cross_stats(const Eigen::MatrixXd& m, std::uint64_t a, std::uint64_t b) {
  NodeStats s;
  for (std::uint64_t x = a; x; x &= x - 1)
    for (std::uint64_t y = b; y; y &= y - 1) {
      const double v = m(std::countr_zero(x), std::countr_zero(y));
      s.weight += 1.0;
      s.sum += v;
      s.sumsq += v * v;
    }
  return s;
}

struct Levels {
  std::vector<double> h;
  double cost = std::numeric_limits<double>::infinity();
};

// Exact least squares under h(parent) <= h(child): the optimum pools
// connected blocks to their weighted means, so every block partition is tried.
inline Levels tree_isotonic_exact(const std::vector<Split>& splits, const std::vector<NodeStats>& st) {
  const auto n = splits.size();
  std::vector<int> edges;  // child index; the parent is splits[child].parent
  for (std::size_t i = 0; i < n; ++i)
    if (splits[i].parent >= 0) edges.push_back(static_cast<int>(i));
  Levels best;
  std::vector<int> block(n);
  std::vector<double> bw(n), bs(n), h(n);
  for (std::uint64_t merged = 0; merged < (1ull << edges.size()); ++merged) {
    std::iota(block.begin(), block.end(), 0);
    std::function<int(int)> find = [&](int x) { return block[x] == x ? x : block[x] = find(block[x]); };
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (merged >> e & 1ull) block[find(edges[e])] = find(splits[edges[e]].parent);
    std::fill(bw.begin(), bw.end(), 0.0);
    std::fill(bs.begin(), bs.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      bw[find(static_cast<int>(i))] += st[i].weight;
      bs[find(static_cast<int>(i))] += st[i].sum;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int b = find(static_cast<int>(i));
      h[i] = bs[b] / bw[b];
    }
    bool feasible = true;
    for (std::size_t e = 0; e < edges.size() && feasible; ++e)
      if (!(merged >> e & 1ull) && h[splits[edges[e]].parent] > h[edges[e]]) feasible = false;
    if (!feasible) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += st[i].sumsq - 2.0 * h[i] * st[i].sum + st[i].weight * h[i] * h[i];
    if (cost < best.cost - kLevelTolerance) best = {h, cost};
  }
  return best;
}

inline MergeTree merge_tree_from_splits(const std::vector<Split>& splits, const std::vector<double>& h,
                                        const std::vector<std::string>& labels) {
  // Leaves first, then internal nodes in split order; equal-level children collapse into the parent.
  const int leaves = static_cast<int>(labels.size());
  std::vector<MergeTree::Node> nodes(static_cast<std::size_t>(leaves) + splits.size());
  for (int i = 0; i < leaves; ++i) nodes[static_cast<std::size_t>(i)].label = labels[static_cast<std::size_t>(i)];
  std::vector<int> owner(splits.size());
  int root = -1;
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const int p = splits[k].parent;
    owner[k] = (p >= 0 && std::abs(h[k] - h[static_cast<std::size_t>(p)]) <= kLevelTolerance)
                   ? owner[static_cast<std::size_t>(p)]
                   : leaves + static_cast<int>(k);
    if (p < 0) root = leaves + static_cast<int>(k);
    nodes[static_cast<std::size_t>(leaves) + k].level = h[k];
  }
  // Splits are listed parent-first, so owner[] of a parent is already final.
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const int p = splits[k].parent;
    if (p >= 0 && owner[k] == leaves + static_cast<int>(k))
      nodes[static_cast<std::size_t>(owner[static_cast<std::size_t>(p)])].children.push_back(leaves + static_cast<int>(k));
    for (std::uint64_t side : {splits[k].left, splits[k].right})
      if (std::popcount(side) == 1)
        nodes[static_cast<std::size_t>(owner[k])].children.push_back(std::countr_zero(side));
  }
  // Children in order of their first leaf, so output does not depend on split order.
  auto first_leaf = [&](int id) {
    return id < leaves ? id
                       : std::countr_zero(splits[static_cast<std::size_t>(id - leaves)].left |
                                          splits[static_cast<std::size_t>(id - leaves)].right);
  };
  for (auto& v : nodes)
    std::sort(v.children.begin(), v.children.end(), [&](int a, int b) { return first_leaf(a) < first_leaf(b); });
  // Drop collapsed nodes and renumber.
  std::vector<int> keep(nodes.size(), -1);
  MergeTree out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const bool internal = i >= static_cast<std::size_t>(leaves);
    if (internal && owner[i - static_cast<std::size_t>(leaves)] != static_cast<int>(i)) continue;
    keep[i] = static_cast<int>(out.nodes.size());
    out.nodes.push_back(nodes[i]);
  }
  for (auto& v : out.nodes)
    for (auto& c : v.children) c = keep[static_cast<std::size_t>(c)];
  out.root = keep[static_cast<std::size_t>(root)];
  return out;
}

inline Eigen::MatrixXd matrix_from_splits(std::size_t n, const std::vector<Split>& splits, const std::vector<double>& h) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < splits.size(); ++k)
    for (std::uint64_t x = splits[k].left; x; x &= x - 1)
      for (std::uint64_t y = splits[k].right; y; y &= y - 1) {
        out(std::countr_zero(x), std::countr_zero(y)) = h[k];
        out(std::countr_zero(y), std::countr_zero(x)) = h[k];
      }
  return out;
}

inline void check_similarity_matrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DomainError("project_ultrametric: matrix is not square");
  if (m.rows() < 2) throw DomainError("project_ultrametric: need at least two rows");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m(i, i) - 1.0) > 1e-12) throw DomainError("project_ultrametric: diagonal must be 1");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!(m(i, j) >= 0.0 && m(i, j) <= 1.0)) throw DomainError("project_ultrametric: entries must lie in [0,1]");
      if (std::abs(m(i, j) - m(j, i)) > 1e-12) throw DomainError("project_ultrametric: matrix is not symmetric");
    }
  }
}

// Average-linkage agglomeration on similarities, then adjacent-violator
// pooling of levels along the tree. Splits come out parent-first.
inline std::pair<std::vector<Split>, std::vector<double>> agglomerative_projection(const Eigen::MatrixXd& m) {
  const auto n = static_cast<int>(m.rows());
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(i)] = {i};
  Eigen::MatrixXd sim = m;
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  struct Made {
    std::vector<int> left, right;
    int left_made = -1, right_made = -1;
    double level = 0.0;
    NodeStats stats;
  };
  std::vector<Made> made;
  std::vector<int> made_of(static_cast<std::size_t>(n), -1);
  for (int step = 0; step + 1 < n; ++step) {
    int bi = -1, bj = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j)
        if (active[static_cast<std::size_t>(j)] && sim(i, j) > best) {
          best = sim(i, j);
          bi = i;
          bj = j;
        }
    }
    const double ni = static_cast<double>(members[static_cast<std::size_t>(bi)].size());
    const double nj = static_cast<double>(members[static_cast<std::size_t>(bj)].size());
    Made mk{members[static_cast<std::size_t>(bi)], members[static_cast<std::size_t>(bj)],
            made_of[static_cast<std::size_t>(bi)], made_of[static_cast<std::size_t>(bj)], best, {}};
    for (int a : mk.left)
      for (int b : mk.right) {
        mk.stats.weight += 1.0;
        mk.stats.sum += m(a, b);
        mk.stats.sumsq += m(a, b) * m(a, b);
      }
    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
      const double v = (ni * sim(bi, k) + nj * sim(bj, k)) / (ni + nj);
      sim(bi, k) = v;
      sim(k, bi) = v;
    }
    auto& mem = members[static_cast<std::size_t>(bi)];
    mem.insert(mem.end(), members[static_cast<std::size_t>(bj)].begin(), members[static_cast<std::size_t>(bj)].end());
    active[static_cast<std::size_t>(bj)] = 0;
    made_of[static_cast<std::size_t>(bi)] = static_cast<int>(made.size());
    made.push_back(std::move(mk));
  }

  // Pool violators: a parent level above a child level merges both blocks.
  const auto count = made.size();
  std::vector<int> parent(count, -1);
  for (std::size_t k = 0; k < count; ++k)
    for (int c : {made[k].left_made, made[k].right_made})
      if (c >= 0) parent[static_cast<std::size_t>(c)] = static_cast<int>(k);
  std::vector<int> block(count);
  std::iota(block.begin(), block.end(), 0);
  std::function<int(int)> find = [&](int x) { return block[x] == x ? x : block[x] = find(block[x]); };
  std::vector<double> bw(count), bs(count);
  for (std::size_t k = 0; k < count; ++k) {
    bw[k] = made[k].stats.weight;
    bs[k] = made[k].stats.sum;
  }
  auto level = [&](int k) {
    const int b = find(k);
    return bs[b] / bw[b];
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < count; ++k) {
      const int p = parent[k];
      if (p < 0 || find(p) == find(static_cast<int>(k))) continue;
      if (level(p) > level(static_cast<int>(k)) + kLevelTolerance) {
        const int a = find(p), b = find(static_cast<int>(k));
        block[b] = a;
        bw[a] += bw[b];
        bs[a] += bs[b];
        changed = true;
      }
    }
  }

  // Emit parent-first.
  std::vector<Split> splits;
  std::vector<double> h;
  std::vector<int> index_of(count, -1);
  auto mask_of = [](const std::vector<int>& v) {
    std::uint64_t x = 0;
    for (int i : v) x |= 1ull << i;
    return x;
  };
  for (std::size_t r = count; r-- > 0;) {
    index_of[r] = static_cast<int>(splits.size());
    const int p = parent[r];
    splits.push_back({mask_of(made[r].left), mask_of(made[r].right), p >= 0 ? index_of[static_cast<std::size_t>(p)] : -1});
    h.push_back(level(static_cast<int>(r)));
  }
  return {splits, h};
}

}  // namespace detail

/// Nearest tree-structured matrix in Frobenius norm. Exhaustive over rooted
/// binary topologies (with optimal pooled levels, so multifurcations are
/// reachable) when I <= 7; agglomerative heuristic above that.
inline UltrametricProjection project_ultrametric(const Eigen::MatrixXd& m, std::vector<std::string> labels = {}) {
  detail::check_similarity_matrix(m);
  const auto n = static_cast<std::size_t>(m.rows());
  if (labels.empty()) labels = numbered_labels("T", n);
  if (labels.size() != n) throw DomainError("project_ultrametric: label count mismatch");
  if (n > 64) throw DomainError("project_ultrametric supports at most 64 rows");

  std::vector<detail::Split> best_splits;
  std::vector<double> best_h;
  bool exact = n <= kExhaustiveProjectionLimit;
  if (exact) {
    double best_cost = std::numeric_limits<double>::infinity();
    const std::uint64_t all = n == 64 ? ~0ull : (1ull << n) - 1ull;
    std::vector<detail::NodeStats> st;
    detail::for_each_topology(all, [&](const std::vector<detail::Split>& splits) {
      st.resize(splits.size());
      for (std::size_t k = 0; k < splits.size(); ++k) st[k] = detail::cross_stats(m, splits[k].left, splits[k].right);
      auto lv = detail::tree_isotonic_exact(splits, st);
      if (lv.cost < best_cost - kLevelTolerance) {
        best_cost = lv.cost;
        best_splits = splits;
        best_h = std::move(lv.h);
      }
    });
  } else {
    std::tie(best_splits, best_h) = detail::agglomerative_projection(m);
  }
  UltrametricProjection out{TreeCov{detail::matrix_from_splits(n, best_splits, best_h), labels},
                            detail::merge_tree_from_splits(best_splits, best_h, labels), 0.0, exact};
  out.distance = (out.cov.entries - m).norm();
  return out;
}

}  // namespace ddtrx
