#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ddtrx/error.hpp"

namespace ddtrx {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

struct Node {
  NodeId parent = kNoNode;
  std::array<NodeId, 2> children{kNoNode, kNoNode};
  double time = 0.0;
  std::string label;

  bool is_leaf() const { return children[0] == kNoNode; }
  int child_count() const { return (children[0] != kNoNode) + (children[1] != kNoNode); }

  friend bool operator==(const Node&, const Node&) = default;
};

/// Rooted binary tree with divergence times.
///
/// The root sits at time 0 and has a single child; every other internal node
/// has exactly two children and leaves sit at time 1. Times increase strictly
/// along every root-to-leaf path. A tree is immutable once constructed; the
/// constructor validates all of the above and throws StructureError.
class Tree {
 public:
  Tree(std::vector<Node> nodes, NodeId root) : nodes_(std::move(nodes)), root_(root) {
    validate();
    index();
  }

  NodeId root() const { return root_; }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& operator[](NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaves_.size(); }

  // Leaves in depth-first order, first child before second.
  const std::vector<NodeId>& leaves() const { return leaves_; }
  // Parents before children.
  const std::vector<NodeId>& preorder() const { return preorder_; }
  // Number of leaves below (or at) each node, indexed by NodeId.
  const std::vector<int>& leaf_counts() const { return leaf_counts_; }

  std::vector<std::string> leaf_labels() const {
    std::vector<std::string> out;
    out.reserve(leaves_.size());
    for (NodeId id : leaves_) out.push_back(nodes_[id].label);
    return out;
  }

  std::optional<NodeId> find_leaf(std::string_view label) const {
    auto it = leaf_by_label_.find(std::string(label));
    if (it == leaf_by_label_.end()) return std::nullopt;
    return it->second;
  }

  NodeId leaf(std::string_view label) const {
    auto id = find_leaf(label);
    if (!id) throw NotFoundError("unknown leaf label '" + std::string(label) + "'");
    return *id;
  }

  // Non-root internal nodes.
  std::vector<NodeId> internal_nodes() const {
    std::vector<NodeId> out;
    for (NodeId id : preorder_)
      if (id != root_ && !nodes_[id].is_leaf()) out.push_back(id);
    return out;
  }

  friend bool operator==(const Tree& a, const Tree& b) { return a.root_ == b.root_ && a.nodes_ == b.nodes_; }

 private:
  void validate() const {
    const auto n = static_cast<NodeId>(nodes_.size());
    if (root_ < 0 || root_ >= n) throw StructureError("root id out of range");
    const Node& r = nodes_[root_];
    if (r.parent != kNoNode) throw StructureError("root has a parent");
    if (r.time != 0.0) throw StructureError("root divergence time must be 0");
    if (r.children[0] == kNoNode || r.children[1] != kNoNode)
      throw StructureError("root must have exactly one child");

    std::vector<char> seen(nodes_.size(), 0);
    std::vector<NodeId> stack{root_};
    std::size_t visited = 0;
    std::unordered_map<std::string, NodeId> labels;
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      if (seen[id]) throw StructureError("node " + std::to_string(id) + " reachable twice");
      seen[id] = 1;
      ++visited;
      const Node& v = nodes_[id];
      if (id != root_) {
        if (v.children[0] == kNoNode) {
          if (v.children[1] != kNoNode) throw StructureError("node " + std::to_string(id) + " has a lone second child");
          if (v.time != 1.0) throw StructureError("leaf '" + v.label + "' must sit at time 1");
          if (v.label.empty()) throw StructureError("leaf " + std::to_string(id) + " has no label");
          if (!labels.emplace(v.label, id).second) throw StructureError("duplicate leaf label '" + v.label + "'");
        } else if (v.children[1] == kNoNode) {
          throw StructureError("internal node " + std::to_string(id) + " must have two children");
        } else if (!(v.time > 0.0 && v.time < 1.0)) {
          throw StructureError("internal node " + std::to_string(id) + " divergence time outside (0,1)");
        }
      }
      for (NodeId c : v.children) {
        if (c == kNoNode) continue;
        if (c < 0 || c >= n) throw StructureError("child id out of range");
        if (nodes_[c].parent != id)
          throw StructureError("node " + std::to_string(c) + " does not point back to parent " + std::to_string(id));
        if (!(nodes_[c].time > v.time))
          throw StructureError("divergence times must increase strictly from node " + std::to_string(id) +
                               " to node " + std::to_string(c));
        stack.push_back(c);
      }
    }
    if (visited != nodes_.size()) throw StructureError("tree contains unreachable nodes");
  }

  void index() {
    preorder_.reserve(nodes_.size());
    std::vector<NodeId> stack{root_};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      preorder_.push_back(id);
      const Node& v = nodes_[id];
      if (v.is_leaf() && id != root_) {
        leaves_.push_back(id);
        leaf_by_label_.emplace(v.label, id);
      }
      if (v.children[1] != kNoNode) stack.push_back(v.children[1]);
      if (v.children[0] != kNoNode) stack.push_back(v.children[0]);
    }
    leaf_counts_.assign(nodes_.size(), 0);
    for (auto it = preorder_.rbegin(); it != preorder_.rend(); ++it) {
      const Node& v = nodes_[*it];
      if (v.is_leaf()) {
        leaf_counts_[*it] = 1;
      } else {
        for (NodeId c : v.children)
          if (c != kNoNode) leaf_counts_[*it] += leaf_counts_[c];
      }
    }
  }

  std::vector<Node> nodes_;
  NodeId root_;
  std::vector<NodeId> preorder_;
  std::vector<NodeId> leaves_;
  std::vector<int> leaf_counts_;
  std::unordered_map<std::string, NodeId> leaf_by_label_;
};

// Leaves below `id`, depth-first.
inline std::vector<NodeId> leaves_below(const Tree& tree, NodeId id) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    const Node& n = tree[v];
    if (n.is_leaf()) {
      out.push_back(v);
      continue;
    }
    if (n.children[1] != kNoNode) stack.push_back(n.children[1]);
    stack.push_back(n.children[0]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Newick
//
// Branch lengths are time differences, so a leaf's cumulative depth must be 1.
// The canonical form writes the root as a unary group: "((A:0.6,B:0.6):0.4);".

inline constexpr double kNewickDepthTolerance = 1e-9;

namespace detail {

inline bool newick_plain_char(char ch) {
  switch (ch) {
    case '(': case ')': case ',': case ':': case ';': case '\'': case '[': case ']':
    case ' ': case '\t': case '\n': case '\r':
      return false;
    default:
      return true;
  }
}

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string quote_label(const std::string& label) {
  bool plain = !label.empty() && std::all_of(label.begin(), label.end(), newick_plain_char);
  if (plain) return label;
  std::string out = "'";
  for (char ch : label) {
    if (ch == '\'') out += '\'';
    out += ch;
  }
  out += '\'';
  return out;
}

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  Tree parse() {
    skip_ws();
    Parsed top = parse_subtree();
    skip_ws();
    if (!at_end() && peek() == ';') {
      ++pos_;
    } else {
      fail("expected ';'");
    }
    skip_ws();
    if (!at_end()) fail("trailing characters after ';'");

    NodeId root;
    if (top.children.size() == 1 && !top.length) {
      // Unary outer group is the root at time 0.
      root = top.id;
      nodes_[root].time = 0.0;
      nodes_[root].children = {top.children[0], kNoNode};
      nodes_[top.children[0]].parent = root;
    } else if (top.length) {
      // "(A:..,B:..):len;" -- the trailing length is the root branch.
      root = static_cast<NodeId>(nodes_.size());
      nodes_.push_back(Node{});
      nodes_[root].children = {top.id, kNoNode};
      nodes_[top.id].parent = root;
      lengths_.push_back(0.0);
      lengths_[top.id] = *top.length;
    } else {
      fail("the root must have a single child; wrap the tree as '(subtree:length);'");
    }
    assign_times(root);
    return Tree(std::move(nodes_), root);
  }

 private:
  struct Parsed {
    NodeId id;
    std::vector<NodeId> children;
    std::optional<double> length;
  };

  [[noreturn]] void fail(const std::string& what) const { throw ParseError("newick: " + what, pos_); }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r')) ++pos_;
  }

  std::string parse_label() {
    skip_ws();
    std::string out;
    if (!at_end() && peek() == '\'') {
      ++pos_;
      for (;;) {
        if (at_end()) fail("unterminated quoted label");
        char ch = text_[pos_++];
        if (ch == '\'') {
          if (!at_end() && peek() == '\'') {
            out += '\'';
            ++pos_;
            continue;
          }
          break;
        }
        out += ch;
      }
      return out;
    }
    while (!at_end() && newick_plain_char(peek())) out += text_[pos_++];
    return out;
  }

  std::optional<double> parse_length() {
    skip_ws();
    if (at_end() || peek() != ':') return std::nullopt;
    ++pos_;
    skip_ws();
    std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.' || peek() == 'e' ||
                         peek() == 'E' || peek() == '-' || peek() == '+'))
      ++pos_;
    double value = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (start == pos_ || res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed branch length");
    }
    if (!(value >= 0.0) || !std::isfinite(value)) {
      pos_ = start;
      fail("branch length must be finite and nonnegative");
    }
    return value;
  }

  Parsed parse_subtree() {
    skip_ws();
    if (at_end()) fail("unexpected end of input");
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{});
    lengths_.push_back(0.0);
    Parsed out{id, {}, std::nullopt};
    if (peek() == '(') {
      ++pos_;
      for (;;) {
        Parsed child = parse_subtree();
        if (!child.length) fail("missing branch length");
        lengths_[child.id] = *child.length;
        nodes_[child.id].parent = id;
        out.children.push_back(child.id);
        skip_ws();
        if (at_end()) fail("unexpected end of input inside group");
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
      if (out.children.size() > 2) fail("node has more than two children");
      std::string ignored = parse_label();
      (void)ignored;
      nodes_[id].children = {out.children[0], out.children.size() == 2 ? out.children[1] : kNoNode};
    } else {
      nodes_[id].label = parse_label();
      if (nodes_[id].label.empty()) fail("expected a leaf label");
    }
    out.length = parse_length();
    return out;
  }

  void assign_times(NodeId root) {
    std::vector<NodeId> stack{root};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      Node& v = nodes_[id];
      if (id != root) v.time = nodes_[v.parent].time + lengths_[id];
      if (v.is_leaf() && id != root) {
        if (std::abs(v.time - 1.0) > kNewickDepthTolerance)
          throw ParseError("newick: leaf '" + v.label + "' has depth " + format_double(v.time) + ", expected 1",
                           text_.size());
        v.time = 1.0;
      }
      for (NodeId c : v.children)
        if (c != kNoNode) stack.push_back(c);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> lengths_;
};

inline void write_newick(const Tree& tree, NodeId id, bool canonical, std::string& out,
                         const std::vector<std::string>* min_label) {
  const Node& v = tree[id];
  if (v.is_leaf()) {
    out += quote_label(v.label);
  } else {
    std::array<NodeId, 2> kids = v.children;
    if (canonical && (*min_label)[kids[1]] < (*min_label)[kids[0]]) std::swap(kids[0], kids[1]);
    out += '(';
    write_newick(tree, kids[0], canonical, out, min_label);
    out += ',';
    write_newick(tree, kids[1], canonical, out, min_label);
    out += ')';
  }
  out += ':';
  out += format_double(v.time - tree[v.parent].time);
}

inline std::string newick_impl(const Tree& tree, bool canonical) {
  std::vector<std::string> min_label;
  if (canonical) {
    min_label.assign(tree.node_count(), std::string());
    const auto& pre = tree.preorder();
    for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
      const Node& v = tree[*it];
      if (v.is_leaf()) {
        min_label[*it] = v.label;
      } else if (v.children[1] != kNoNode) {
        min_label[*it] = std::min(min_label[v.children[0]], min_label[v.children[1]]);
      }
    }
  }
  std::string out = "(";
  write_newick(tree, tree[tree.root()].children[0], canonical, out, &min_label);
  out += ");";
  return out;
}

}  // namespace detail

inline Tree parse_newick(std::string_view text) { return detail::NewickParser(text).parse(); }

inline std::string serialize_newick(const Tree& tree) { return detail::newick_impl(tree, false); }

// Children ordered by their smallest leaf label; equal topologies and times
// give equal strings regardless of child order.
inline std::string canonical_newick(const Tree& tree) { return detail::newick_impl(tree, true); }

}  // namespace ddtrx
