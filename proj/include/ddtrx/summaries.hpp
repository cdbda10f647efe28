#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ddtrx/error.hpp"
#include "ddtrx/mh.hpp"
#include "ddtrx/tree.hpp"
#include "ddtrx/tree_cov.hpp"

namespace ddtrx {

struct PosteriorTreeSet {
  std::vector<Tree> trees;
  std::vector<double> log_prior;
  std::vector<double> log_lik;
  std::vector<std::size_t> chain;
  std::vector<std::size_t> iter;

  std::size_t size() const { return trees.size(); }

  void add(Tree tree, double lp, double ll, std::size_t chain_id = 0, std::size_t iteration = 0) {
    trees.push_back(std::move(tree));
    log_prior.push_back(lp);
    log_lik.push_back(ll);
    chain.push_back(chain_id);
    iter.push_back(iteration);
  }

  // Leaf labels in the order of the first tree.
  std::vector<std::string> labels() const {
    if (trees.empty()) throw DomainError("empty posterior tree set");
    return trees.front().leaf_labels();
  }

  void check() const {
    if (trees.empty()) throw DomainError("posterior tree set is empty");
    if (log_prior.size() != trees.size() || log_lik.size() != trees.size())
      throw DomainError("posterior tree set: score count mismatch");
    std::vector<std::string> ref = labels();
    std::sort(ref.begin(), ref.end());
    for (const auto& t : trees) {
      auto l = t.leaf_labels();
      std::sort(l.begin(), l.end());
      if (l != ref) throw DomainError("posterior tree set: trees have different leaf sets");
    }
  }

  static PosteriorTreeSet from_chains(const std::vector<ChainResult>& chains) {
    PosteriorTreeSet out;
    for (const auto& ch : chains)
      for (const auto& s : ch.samples) out.add(s.tree, s.log_prior, s.log_lik, s.chain, s.iter);
    return out;
  }
};

/// Right-continuous step function: value v_k holds on [t_k, t_{k+1}).
struct PcpCurve {
  std::vector<std::pair<double, double>> breakpoints;

  double at(double t) const {
    double v = 1.0;
    for (const auto& [bt, bv] : breakpoints) {
      if (bt > t) break;
      v = bv;
    }
    return v;
  }

  // Exact area on [0, 1].
  double area() const {
    double a = 0.0;
    for (std::size_t k = 0; k < breakpoints.size(); ++k) {
      const double end = k + 1 < breakpoints.size() ? breakpoints[k + 1].first : 1.0;
      a += breakpoints[k].second * (end - breakpoints[k].first);
    }
    return a;
  }
};

inline std::vector<double> subset_mrca_times(const PosteriorTreeSet& ts, const std::vector<std::string>& subset) {
  if (ts.size() == 0) throw DomainError("posterior tree set is empty");
  std::vector<double> out;
  out.reserve(ts.size());
  for (const auto& t : ts.trees) out.push_back(mrca_time(t, subset));
  return out;
}

/// PCP(t) = fraction of sampled trees whose subset MRCA time exceeds t.
inline PcpCurve pcp_curve(const PosteriorTreeSet& ts, const std::vector<std::string>& subset) {
  auto times = subset_mrca_times(ts, subset);
  std::sort(times.begin(), times.end());
  const auto n = static_cast<double>(times.size());
  PcpCurve c;
  c.breakpoints.emplace_back(0.0, 1.0);
  for (std::size_t i = 0; i < times.size();) {
    std::size_t j = i;
    while (j < times.size() && times[j] == times[i]) ++j;
    c.breakpoints.emplace_back(times[i], static_cast<double>(times.size() - j) / n);
    i = j;
  }
  return c;
}

/// Area under the PCP curve, computed as the mean MRCA time.
inline double ipcp(const PosteriorTreeSet& ts, const std::vector<std::string>& subset) {
  const auto times = subset_mrca_times(ts, subset);
  double s = 0.0;
  for (double t : times) s += t;
  return s / static_cast<double>(times.size());
}

inline TreeCov pairwise_ipcp(const PosteriorTreeSet& ts, const std::vector<std::string>& order) {
  if (ts.size() == 0) throw DomainError("posterior tree set is empty");
  const auto n = static_cast<Eigen::Index>(order.size());
  TreeCov out{Eigen::MatrixXd::Zero(n, n), order};
  for (const auto& t : ts.trees) out.entries += build_cov(t, order).entries;
  out.entries /= static_cast<double>(ts.size());
  out.entries.diagonal().setOnes();
  return out;
}

inline TreeCov pairwise_ipcp(const PosteriorTreeSet& ts) { return pairwise_ipcp(ts, ts.labels()); }

struct MapEstimate {
  std::size_t index = 0;
  double log_score = 0.0;
};

/// Sample with the largest log prior + log likelihood; earliest wins ties.
inline MapEstimate map_index(const PosteriorTreeSet& ts) {
  if (ts.size() == 0) throw DomainError("posterior tree set is empty");
  MapEstimate best{0, ts.log_prior[0] + ts.log_lik[0]};
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double s = ts.log_prior[i] + ts.log_lik[i];
    if (s > best.log_score) best = {i, s};
  }
  return best;
}

inline const Tree& map_tree(const PosteriorTreeSet& ts) { return ts.trees[map_index(ts).index]; }

inline double frobenius_tree_distance(const TreeCov& a, const TreeCov& b) {
  if (a.dim() != b.dim() || a.entries.rows() != b.entries.rows())
    throw DomainError("frobenius_tree_distance: dimension mismatch");
  if (a.leaf_order != b.leaf_order) throw DomainError("frobenius_tree_distance: leaf orders differ");
  return (a.entries - b.entries).norm();
}

/// Leaf-label sets below every internal node except the root's child.
inline std::set<std::vector<std::string>> clades(const Tree& tree) {
  std::set<std::vector<std::string>> out;
  const NodeId top = tree[tree.root()].children[0];
  for (NodeId id : tree.preorder()) {
    if (id == tree.root() || id == top || tree[id].is_leaf()) continue;
    std::vector<std::string> labels;
    for (NodeId leaf : leaves_below(tree, id)) labels.push_back(tree[leaf].label);
    std::sort(labels.begin(), labels.end());
    out.insert(std::move(labels));
  }
  return out;
}

/// Rooted Robinson-Foulds distance: size of the symmetric difference of the
/// clade sets.
inline std::size_t robinson_foulds(const Tree& a, const Tree& b) {
  const auto ca = clades(a);
  const auto cb = clades(b);
  std::size_t d = 0;
  for (const auto& c : ca) d += cb.count(c) == 0;
  for (const auto& c : cb) d += ca.count(c) == 0;
  return d;
}

}  // namespace ddtrx
