#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "ddtrx/data_matrix.hpp"
#include "ddtrx/ddt_gen.hpp"
#include "ddtrx/error.hpp"
#include "ddtrx/likelihood.hpp"
#include "ddtrx/parallel.hpp"
#include "ddtrx/rng.hpp"
#include "ddtrx/tree.hpp"

namespace ddtrx {

/// Nodes whose parent is a non-root internal node: every node except the
/// root and the root's child.
inline std::vector<NodeId> detach_candidates(const Tree& tree) {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < static_cast<NodeId>(tree.node_count()); ++id) {
    const NodeId p = tree[id].parent;
    if (p != kNoNode && p != tree.root()) out.push_back(id);
  }
  return out;
}

/// Tree split at the parent of `subtree`. The remainder R is a compacted Tree
/// in which that parent is spliced out; `to_original` maps R ids back.
struct Detached {
  NodeId subtree;  // root of S, original id
  NodeId parent;   // spliced-out node, original id
  Tree remainder;
  std::vector<NodeId> to_original;
  std::vector<NodeId> to_remainder;  // kNoNode for nodes of S and the spliced parent
  NodeId u_branch = kNoNode;         // R id of the branch that held the detach point
  double t_u = 0.0;
  double subtree_time = 0.0;  // divergence time of the root of S
};

inline Detached detach_at(const Tree& tree, NodeId x) {
  if (tree.leaf_count() < 3) throw DomainError("detach needs at least three leaves");
  if (x < 0 || x >= static_cast<NodeId>(tree.node_count())) throw DomainError("detach: node id out of range");
  const NodeId p = tree[x].parent;
  if (p == kNoNode || p == tree.root()) throw DomainError("detach: node is not eligible");
  const NodeId g = tree[p].parent;
  const NodeId s = tree[p].children[0] == x ? tree[p].children[1] : tree[p].children[0];

  std::vector<char> removed(tree.node_count(), 0);
  removed[static_cast<std::size_t>(p)] = 1;
  std::vector<NodeId> stack{x};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    removed[static_cast<std::size_t>(v)] = 1;
    if (!tree[v].is_leaf()) {
      stack.push_back(tree[v].children[0]);
      stack.push_back(tree[v].children[1]);
    }
  }

  std::vector<NodeId> to_original;
  std::vector<NodeId> to_remainder(tree.node_count(), kNoNode);
  for (NodeId id = 0; id < static_cast<NodeId>(tree.node_count()); ++id) {
    if (removed[static_cast<std::size_t>(id)]) continue;
    to_remainder[static_cast<std::size_t>(id)] = static_cast<NodeId>(to_original.size());
    to_original.push_back(id);
  }
  auto map = [&](NodeId id) {
    if (id == kNoNode) return kNoNode;
    if (id == p) return to_remainder[static_cast<std::size_t>(s)];
    return to_remainder[static_cast<std::size_t>(id)];
  };
  std::vector<Node> nodes;
  nodes.reserve(to_original.size());
  for (NodeId id : to_original) {
    Node v = tree[id];
    v.parent = id == s ? map(g) : map(v.parent);
    v.children = {map(v.children[0]), map(v.children[1])};
    nodes.push_back(std::move(v));
  }
  Tree remainder(std::move(nodes), map(tree.root()));
  const NodeId u_branch = map(s);
  return Detached{x, p, std::move(remainder), std::move(to_original), std::move(to_remainder), u_branch,
                  tree[p].time, tree[x].time};
}

inline Detached detach(const Tree& tree, Rng& rng) {
  const auto candidates = detach_candidates(tree);
  if (tree.leaf_count() < 3 || candidates.empty()) throw DomainError("detach needs at least three leaves");
  return detach_at(tree, candidates[rng.index(candidates.size())]);
}

/// Reinserts S on R's branch `r_branch` (R id of the node below) at time t.
/// The spliced parent is reused with its original id and child slot, so
/// attaching at the detach point gives back the original tree exactly.
inline Tree attach(const Tree& tree, const Detached& d, NodeId r_branch, double t) {
  const Tree& r = d.remainder;
  if (r_branch < 0 || r_branch >= static_cast<NodeId>(r.node_count()) || r_branch == r.root())
    throw DomainError("attach: branch is not a branch of the remainder");
  const double lo = r[r[r_branch].parent].time;
  const double hi = r[r_branch].time;
  if (!(t > lo && t < hi)) throw DomainError("attach: time outside the branch interval");
  if (!(t < d.subtree_time)) throw DomainError("attach: time not earlier than the detached subtree");

  std::vector<Node> nodes = tree.nodes();
  const NodeId x = d.subtree;
  const NodeId p = d.parent;
  const int side = nodes[static_cast<std::size_t>(p)].children[0] == x ? 0 : 1;
  const NodeId s = nodes[static_cast<std::size_t>(p)].children[1 - side];
  const NodeId g = nodes[static_cast<std::size_t>(p)].parent;
  auto replace_child = [&](NodeId parent, NodeId from, NodeId to) {
    auto& ch = nodes[static_cast<std::size_t>(parent)].children;
    ch[ch[0] == from ? 0 : 1] = to;
  };
  replace_child(g, p, s);
  nodes[static_cast<std::size_t>(s)].parent = g;

  const NodeId b = d.to_original[static_cast<std::size_t>(r_branch)];
  const NodeId a = nodes[static_cast<std::size_t>(b)].parent;
  Node& pv = nodes[static_cast<std::size_t>(p)];
  pv.parent = a;
  pv.time = t;
  pv.children[side] = x;
  pv.children[1 - side] = b;
  replace_child(a, b, p);
  nodes[static_cast<std::size_t>(b)].parent = p;
  return Tree(std::move(nodes), tree.root());
}

/// Log density of a single new datum diverging from R on branch `branch` at
/// time t: no-divergence survival exp(-(A(t_b) - A(t_a))/m) on every
/// traversed segment, count-proportional child choices, then hazard a(t)/m
/// on the landing segment. A(t) = -c log(1 - t).
inline double attach_log_density(const Tree& r, NodeId branch, double t, double c) {
  if (!(c > 0.0)) throw DomainError("attach_log_density: c must be positive");
  if (branch < 0 || branch >= static_cast<NodeId>(r.node_count()) || branch == r.root())
    throw DomainError("attach_log_density: not a branch");
  const double lo = r[r[branch].parent].time;
  if (!(t > lo && t < r[branch].time)) throw DomainError("attach_log_density: time outside the branch interval");
  const auto& counts = r.leaf_counts();
  std::vector<NodeId> path;
  for (NodeId v = branch; v != r.root(); v = r[v].parent) path.push_back(v);
  double lp = 0.0;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const NodeId v = *it;
    const double m = counts[static_cast<std::size_t>(v)];
    const double ta = r[r[v].parent].time;
    if (v == branch) {
      lp += (c / m) * (std::log1p(-t) - std::log1p(-ta)) + std::log(c) - std::log1p(-t) - std::log(m);
      break;
    }
    lp += (c / m) * (std::log1p(-r[v].time) - std::log1p(-ta));
    lp += std::log(counts[static_cast<std::size_t>(*std::next(it))] / m);
  }
  return lp;
}

struct AttachPoint {
  NodeId branch = kNoNode;  // R id
  double time = 0.0;
};

inline constexpr int kMaxAttachDraws = 100000;

/// Simulates the single-datum DDT on R until the divergence time is below
/// `limit`. Returns nothing after kMaxAttachDraws rejected draws.
inline std::optional<AttachPoint> sample_attach(const Tree& r, double c, double limit, Rng& rng) {
  const auto& counts = r.leaf_counts();
  for (int attempt = 0; attempt < kMaxAttachDraws; ++attempt) {
    NodeId from = r.root();
    NodeId to = r[from].children[0];
    for (;;) {
      const double t = next_divergence_time(r[from].time, counts[static_cast<std::size_t>(to)], c, rng.uniform());
      if (t < r[to].time) {
        // A draw that rounds onto its parent's time has no representable branch.
        if (t < limit && t > r[from].time) return AttachPoint{to, t};
        break;
      }
      const Node& here = r[to];
      const double pick = rng.uniform() * counts[static_cast<std::size_t>(to)];
      from = to;
      to = pick < counts[static_cast<std::size_t>(here.children[0])] ? here.children[0] : here.children[1];
    }
  }
  return std::nullopt;
}

struct Proposal {
  Tree candidate;
  NodeId detached = kNoNode;  // root of S
  NodeId u_branch = kNoNode;  // original id of the node below the detach point
  double t_u = 0.0;
  NodeId v_branch = kNoNode;  // original id of the node below the attach point
  double t_v = 0.0;
  double log_q_u = 0.0;
  double log_q_v = 0.0;
};

inline Proposal make_proposal(const Tree& tree, const Detached& d, AttachPoint v, double c) {
  return Proposal{attach(tree, d, v.branch, v.time),
                  d.subtree,
                  d.to_original[static_cast<std::size_t>(d.u_branch)],
                  d.t_u,
                  d.to_original[static_cast<std::size_t>(v.branch)],
                  v.time,
                  attach_log_density(d.remainder, d.u_branch, d.t_u, c),
                  attach_log_density(d.remainder, v.branch, v.time, c)};
}

/// Detach a uniformly chosen subtree and reattach it by simulating S as a
/// single datum on R, truncated below the divergence time of S.
inline std::optional<Proposal> propose(const Tree& tree, double c, Rng& rng) {
  const Detached d = detach(tree, rng);
  const auto v = sample_attach(d.remainder, c, d.subtree_time, rng);
  if (!v) return std::nullopt;
  return make_proposal(tree, d, *v, c);
}

struct ChainState {
  Tree tree;
  double log_prior = 0.0;
  double log_lik = 0.0;
  std::size_t iteration = 0;

  double log_score() const { return log_prior + log_lik; }
};

inline ChainState make_state(const Tree& tree, const DataMatrix& data, double c, double sigma2) {
  return ChainState{tree, log_tree_prior(tree, c), log_likelihood(data, tree, sigma2), 0};
}

/// log of f(T')q(u|R) / (f(T)q(v|R)).
inline double log_acceptance_ratio(const ChainState& state, const Proposal& p, double cand_log_prior,
                                   double cand_log_lik) {
  return (cand_log_prior + cand_log_lik) - state.log_score() + p.log_q_u - p.log_q_v;
}

enum class StepOutcome { accepted, rejected, singular, proposal_failed };

inline StepOutcome mh_step(ChainState& state, const DataMatrix& data, double c, double sigma2, Rng& rng) {
  ++state.iteration;
  auto p = propose(state.tree, c, rng);
  if (!p) return StepOutcome::proposal_failed;
  double lp = 0.0, ll = 0.0;
  try {
    lp = log_tree_prior(p->candidate, c);
    ll = log_likelihood(data, p->candidate, sigma2);
  } catch (const SingularCovarianceError&) {
    return StepOutcome::singular;
  }
  const double log_alpha = log_acceptance_ratio(state, *p, lp, ll);
  if (std::log(rng.uniform()) < log_alpha) {
    state.tree = std::move(p->candidate);
    state.log_prior = lp;
    state.log_lik = ll;
    return StepOutcome::accepted;
  }
  return StepOutcome::rejected;
}

struct ChainConfig {
  std::size_t iters = 10000;
  std::size_t burn_in = 9000;
  std::size_t thin = 1;

  void check() const {
    if (thin < 1) throw DomainError("thin must be at least 1");
    if (iters > 0 && burn_in >= iters) throw DomainError("burn_in must be smaller than iters");
  }
};

struct TreeSample {
  std::size_t chain = 0;
  std::size_t iter = 0;
  Tree tree;
  double log_prior = 0.0;
  double log_lik = 0.0;
};

struct ChainResult {
  std::size_t chain = 0;
  std::vector<TreeSample> samples;  // retained after burn-in and thinning
  std::vector<double> log_score;    // log f at every retained iteration
  std::size_t accepted = 0;
  std::size_t singular = 0;
  std::size_t proposal_failures = 0;
  std::size_t iterations = 0;

  double acceptance_rate() const {
    return iterations ? static_cast<double>(accepted) / static_cast<double>(iterations) : 0.0;
  }
};

inline ChainResult run_chain(const DataMatrix& data, double c, double sigma2, const Tree& init,
                             const ChainConfig& config, RngSeed seed, std::size_t chain = 0) {
  config.check();
  ChainResult out;
  out.chain = chain;
  if (config.iters == 0) return out;
  if (init.leaf_count() != data.rows()) throw DomainError("run_chain: init tree does not match the data rows");
  Rng rng(seed);
  ChainState state = make_state(init, data, c, sigma2);
  for (std::size_t i = 1; i <= config.iters; ++i) {
    switch (mh_step(state, data, c, sigma2, rng)) {
      case StepOutcome::accepted: ++out.accepted; break;
      case StepOutcome::singular: ++out.singular; break;
      case StepOutcome::proposal_failed: ++out.proposal_failures; break;
      case StepOutcome::rejected: break;
    }
    if (i > config.burn_in && (i - config.burn_in) % config.thin == 0) {
      out.samples.push_back(TreeSample{chain, i, state.tree, state.log_prior, state.log_lik});
      out.log_score.push_back(state.log_score());
    }
  }
  out.iterations = config.iters;
  return out;
}

/// Independent chains from a shared init; chain k runs on derive_seed(seed, k).
inline std::vector<ChainResult> run_chains(const DataMatrix& data, double c, double sigma2, const Tree& init,
                                           const ChainConfig& config, std::size_t chains, RngSeed seed) {
  std::vector<ChainResult> out(chains);
  parallel_for(chains, [&](std::size_t k) { out[k] = run_chain(data, c, sigma2, init, config, derive_seed(seed, k), k); });
  return out;
}

}  // namespace ddtrx
