#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/parallel.hpp"
#include "ddtrx/rng.hpp"
#include "ddtrx/tree.hpp"

namespace ddtrx {

/// Gamma(shape, rate).
struct GammaSpec {
  double shape = 1.0;
  double rate = 1.0;

  void check() const {
    if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("gamma prior needs positive shape and rate");
  }
  double mean() const { return shape / rate; }
};

/// First divergence after `t_start` on a branch already traversed by `m`
/// paths, by inverting the survival ((1 - t)/(1 - t_start))^(c/m) at `u`.
inline double next_divergence_time(double t_start, int m, double c, double u) {
  if (!(t_start >= 0.0 && t_start < 1.0)) throw DomainError("next_divergence_time: t_start outside [0,1)");
  if (m < 1) throw DomainError("next_divergence_time: m must be at least 1");
  if (!(c > 0.0)) throw DomainError("next_divergence_time: c must be positive");
  if (!(u > 0.0 && u < 1.0)) throw DomainError("next_divergence_time: u outside (0,1)");
  return 1.0 - (1.0 - t_start) * std::pow(u, static_cast<double>(m) / c);
}

/// DDT tree in the cumulative hazard coordinate s = -log(1 - t). Divergence
/// draws there are exact sums, so levels that double-precision time would
/// round onto 1 stay distinct. Node 0 is the root at s = 0; leaves have
/// s = +inf.
struct HazardTree {
  struct Node {
    NodeId parent = kNoNode;
    std::array<NodeId, 2> children{kNoNode, kNoNode};
    double s = 0.0;
    std::string label;
  };
  std::vector<Node> nodes;

  double time(NodeId id) const { return -std::expm1(-nodes[id].s); }

  /// Whether every divergence time is below 1 and above its parent's in
  /// double precision.
  bool representable() const {
    for (NodeId id = 1; id < static_cast<NodeId>(nodes.size()); ++id) {
      if (!nodes[id].label.empty()) continue;
      const double t = time(id);
      if (!(t < 1.0 && t > time(nodes[id].parent))) return false;
    }
    return true;
  }

  Tree to_tree() const {
    std::vector<ddtrx::Node> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& v = nodes[i];
      const bool leaf = !v.label.empty();
      out[i] = ddtrx::Node{v.parent, v.children, leaf ? 1.0 : time(static_cast<NodeId>(i)), v.label};
    }
    return Tree(std::move(out), 0);
  }
};

/// Sequential path construction. Path i walks existing branches, picks a
/// child at each internal node with probability proportional to its traversal
/// count, and diverges on a branch with count m at hazard a(t)/m.
inline HazardTree sample_hazard_tree(std::size_t leaf_count, double c, Rng& rng, std::vector<std::string> labels = {}) {
  if (leaf_count < 1) throw DomainError("sample_tree needs at least one leaf");
  if (!(c > 0.0)) throw DomainError("sample_tree: c must be positive");
  if (labels.empty()) labels = numbered_labels("T", leaf_count);
  if (labels.size() != leaf_count) throw DomainError("sample_tree: label count mismatch");
  for (const auto& l : labels)
    if (l.empty()) throw DomainError("sample_tree: empty leaf label");

  constexpr double inf = std::numeric_limits<double>::infinity();
  HazardTree h;
  auto& nodes = h.nodes;
  nodes.reserve(2 * leaf_count);
  std::vector<int> counts;
  counts.reserve(2 * leaf_count);
  nodes.push_back({kNoNode, {1, kNoNode}, 0.0, {}});
  nodes.push_back({0, {kNoNode, kNoNode}, inf, labels[0]});
  counts = {1, 1};

  for (std::size_t i = 1; i < leaf_count; ++i) {
    NodeId from = 0;
    NodeId to = nodes[0].children[0];
    for (;;) {
      const double s = nodes[from].s - static_cast<double>(counts[to]) / c * std::log(rng.uniform());
      if (s < nodes[to].s) {
        const auto split = static_cast<NodeId>(nodes.size());
        const auto leaf = split + 1;
        auto& parent = nodes[from];
        parent.children[parent.children[0] == to ? 0 : 1] = split;
        nodes.push_back({from, {to, leaf}, s, {}});
        nodes.push_back({split, {kNoNode, kNoNode}, inf, labels[i]});
        nodes[to].parent = split;
        counts.push_back(counts[to]);
        counts.push_back(1);
        for (NodeId v = split; v != kNoNode; v = nodes[v].parent) ++counts[v];
        break;
      }
      const auto& here = nodes[to];
      const double pick = rng.uniform() * counts[to];
      from = to;
      to = pick < counts[here.children[0]] ? here.children[0] : here.children[1];
    }
  }
  return h;
}

inline constexpr int kMaxTreeAttempts = 10000;

/// DDT tree with double-precision times. At small c some levels sit closer to
/// 1 than a double resolves; such draws are redrawn whole, so the result
/// follows the DDT law conditioned on every time being representable.
inline Tree sample_tree(std::size_t leaf_count, double c, Rng& rng, std::vector<std::string> labels = {}) {
  for (int attempt = 0; attempt < kMaxTreeAttempts; ++attempt) {
    HazardTree h = sample_hazard_tree(leaf_count, c, rng, labels);
    if (h.representable()) return h.to_tree();
  }
  throw NumericalError("sample_tree: divergence times do not resolve in double precision at c = " +
                       detail::format_double(c) + " with " + std::to_string(leaf_count) + " leaves");
}

inline Tree sample_tree(std::size_t leaf_count, double c, RngSeed seed, std::vector<std::string> labels = {}) {
  Rng rng(seed);
  return sample_tree(leaf_count, c, rng, std::move(labels));
}

// Leaves ordered by node id; for sampled trees that is insertion order.
inline std::vector<NodeId> leaves_by_id(const Tree& tree) {
  std::vector<NodeId> out = tree.leaves();
  std::sort(out.begin(), out.end());
  return out;
}

struct DdtSample {
  Tree tree;
  Eigen::MatrixXd internal_locations;  // one row per non-root internal node, preorder
  DataMatrix data;                     // one row per leaf, ordered by node id
};

/// Brownian motion down the tree from the origin: each node is its parent's
/// location plus N(0, sigma2 * dt) noise per coordinate.
inline DdtSample diffuse(const Tree& tree, double sigma2, std::size_t cols, Rng& rng) {
  if (!(sigma2 > 0.0)) throw DomainError("diffuse: sigma2 must be positive");
  if (cols < 1) throw DomainError("diffuse: need at least one column");
  const auto j = static_cast<Eigen::Index>(cols);
  Eigen::MatrixXd loc(static_cast<Eigen::Index>(tree.node_count()), j);
  loc.row(tree.root()).setZero();
  for (NodeId id : tree.preorder()) {
    if (id == tree.root()) continue;
    const Node& v = tree[id];
    const double sd = std::sqrt(sigma2 * (v.time - tree[v.parent].time));
    for (Eigen::Index k = 0; k < j; ++k) loc(id, k) = loc(v.parent, k) + sd * rng.normal();
  }
  const auto internal = tree.internal_nodes();
  Eigen::MatrixXd inner(static_cast<Eigen::Index>(internal.size()), j);
  for (std::size_t r = 0; r < internal.size(); ++r) inner.row(static_cast<Eigen::Index>(r)) = loc.row(internal[r]);

  const auto leaves = leaves_by_id(tree);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(leaves.size()), j);
  std::vector<std::string> rows;
  rows.reserve(leaves.size());
  for (std::size_t r = 0; r < leaves.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = loc.row(leaves[r]);
    rows.push_back(tree[leaves[r]].label);
  }
  return DdtSample{tree, std::move(inner), DataMatrix{std::move(x), std::move(rows), numbered_labels("P", cols)}};
}

inline DdtSample diffuse(const Tree& tree, double sigma2, std::size_t cols, RngSeed seed) {
  Rng rng(seed);
  return diffuse(tree, sigma2, cols, rng);
}

/// Leaf data diffused on a hazard-coordinate tree, rows ordered by node id.
/// Branch variances come from the exact levels, so unresolvable times are fine.
inline DataMatrix diffuse(const HazardTree& tree, double sigma2, std::size_t cols, Rng& rng) {
  if (!(sigma2 > 0.0)) throw DomainError("diffuse: sigma2 must be positive");
  if (cols < 1) throw DomainError("diffuse: need at least one column");
  const auto j = static_cast<Eigen::Index>(cols);
  const auto& nodes = tree.nodes;
  Eigen::MatrixXd loc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nodes.size()), j);
  std::vector<NodeId> stack{0};
  std::vector<NodeId> leaves;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const auto& v = nodes[id];
    if (id != 0) {
      // 1 - t = exp(-s); branch length is exp(-s_parent) - exp(-s_child).
      const double sp = nodes[v.parent].s;
      const double dt = std::isinf(v.s) ? std::exp(-sp) : -std::exp(-sp) * std::expm1(sp - v.s);
      const double sd = std::sqrt(sigma2 * dt);
      for (Eigen::Index k = 0; k < j; ++k) loc(id, k) = loc(v.parent, k) + sd * rng.normal();
    }
    if (!v.label.empty()) leaves.push_back(id);
    for (auto it = v.children.rbegin(); it != v.children.rend(); ++it)
      if (*it != kNoNode) stack.push_back(*it);
  }
  std::sort(leaves.begin(), leaves.end());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(leaves.size()), j);
  std::vector<std::string> rows;
  rows.reserve(leaves.size());
  for (std::size_t r = 0; r < leaves.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = loc.row(leaves[r]);
    rows.push_back(nodes[leaves[r]].label);
  }
  return DataMatrix{std::move(x), std::move(rows), numbered_labels("P", cols)};
}

/// One DDT dataset with I = rows leaves and J = cols columns, valid for any c.
inline DataMatrix simulate_ddt_data(std::size_t rows, double c, double sigma2, std::size_t cols, Rng& rng) {
  const HazardTree tree = sample_hazard_tree(rows, c, rng);
  return diffuse(tree, sigma2, cols, rng);
}

struct SyntheticDraw {
  double c = 0.0;
  double sigma2 = 0.0;
  DataMatrix data;
};

struct SyntheticSpec {
  std::size_t rows = 0;  // I
  std::size_t cols = 0;  // J
  GammaSpec prior_c{2.0, 2.0};
  GammaSpec prior_sigma2_inv{1.0, 1.0};

  void check() const {
    if (rows < 2 || cols < 1) throw DomainError("synthetic spec needs I >= 2 and J >= 1");
    prior_c.check();
    prior_sigma2_inv.check();
  }
};

/// Draw `index` of the synthetic stream under `seed`: c ~ Gamma, 1/sigma2 ~
/// Gamma, then a DDT tree and its diffused leaves. Depends only on
/// (spec, seed, index), so any partition of the index range into shards
/// reproduces the same stream.
inline SyntheticDraw synthetic_draw(const SyntheticSpec& spec, RngSeed seed, std::uint64_t index) {
  Rng rng = Rng::substream(seed, index);
  const double c = rng.gamma(spec.prior_c.shape, spec.prior_c.rate);
  const double sigma2 = 1.0 / rng.gamma(spec.prior_sigma2_inv.shape, spec.prior_sigma2_inv.rate);
  return SyntheticDraw{c, sigma2, simulate_ddt_data(spec.rows, c, sigma2, spec.cols, rng)};
}

inline std::vector<SyntheticDraw> generate_synthetic(const SyntheticSpec& spec, std::size_t n, RngSeed seed,
                                                     std::uint64_t first_index = 0) {
  spec.check();
  std::vector<SyntheticDraw> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = synthetic_draw(spec, seed, first_index + i); });
  return out;
}

}  // namespace ddtrx
