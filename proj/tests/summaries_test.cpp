#include <gtest/gtest.h>

#include "ddtrx/ddtrx.hpp"

using namespace ddtrx;

namespace {

Tree pair_tree(double t) {
  return parse_newick("((A:" + std::to_string(1 - t) + ",B:" + std::to_string(1 - t) + "):" + std::to_string(t) + ");");
}

// Three-leaf tree where (A, B) diverge at t_ab below a root child at t_top.
Tree three_tree(double t_top, double t_ab) {
  std::vector<Node> n(6);
  n[0] = Node{kNoNode, {1, kNoNode}, 0.0, {}};
  n[1] = Node{0, {2, 3}, t_top, {}};
  n[2] = Node{1, {4, 5}, t_ab, {}};
  n[3] = Node{1, {kNoNode, kNoNode}, 1.0, "C"};
  n[4] = Node{2, {kNoNode, kNoNode}, 1.0, "A"};
  n[5] = Node{2, {kNoNode, kNoNode}, 1.0, "B"};
  return Tree(n, 0);
}

PosteriorTreeSet set_of(std::vector<Tree> trees) {
  PosteriorTreeSet ts;
  for (auto& t : trees) ts.add(std::move(t), 0.0, 0.0);
  return ts;
}

}  // namespace

TEST(Pcp, SingleTreeIsIndicator) {
  auto ts = set_of({pair_tree(0.6)});
  const auto c = pcp_curve(ts, {"A", "B"});
  EXPECT_EQ(c.at(0.0), 1.0);
  EXPECT_EQ(c.at(0.5999), 1.0);
  EXPECT_EQ(c.at(0.6), 0.0);
  EXPECT_EQ(ipcp(ts, {"A", "B"}), mrca_time(ts.trees[0], {"A", "B"}));
  EXPECT_NEAR(ipcp(ts, {"A", "B"}), 0.6, 1e-12);
}

TEST(Pcp, ThreeTreesDropToTwoThirds) {
  auto ts = set_of({three_tree(0.1, 0.5), three_tree(0.2, 0.3), three_tree(0.15, 0.8)});
  const auto c = pcp_curve(ts, {"A", "B"});
  EXPECT_EQ(c.at(0.29), 1.0);
  EXPECT_NEAR(c.at(0.3), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.at(0.5), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(c.at(0.8), 0.0);
  EXPECT_NEAR(c.area(), ipcp(ts, {"A", "B"}), 1e-12);
  EXPECT_NEAR(ipcp(ts, {"A", "B", "C"}), (0.1 + 0.2 + 0.15) / 3, 1e-12);
}

TEST(Pcp, IdenticalTreesGiveOneStep) {
  auto ts = set_of({three_tree(0.2, 0.4), three_tree(0.2, 0.4), three_tree(0.2, 0.4)});
  const auto c = pcp_curve(ts, {"A", "C"});
  ASSERT_EQ(c.breakpoints.size(), 2u);
  EXPECT_EQ(c.breakpoints[1], std::make_pair(0.2, 0.0));
}

TEST(Pcp, AreaEqualsMeanMrcaOnRandomSets) {
  PosteriorTreeSet ts;
  for (std::uint64_t s = 0; s < 300; ++s) ts.add(sample_tree(6, 1.0, RngSeed{s}), 0, 0);
  for (const auto& subset : std::vector<std::vector<std::string>>{{"T1", "T2"}, {"T1", "T4", "T6"}, {"T2", "T3", "T5", "T6"}})
    EXPECT_NEAR(pcp_curve(ts, subset).area(), ipcp(ts, subset), 1e-12);
  EXPECT_THROW(ipcp(ts, {"T1", "T9"}), NotFoundError);
}

TEST(PairwiseIpcp, Identities) {
  Tree a = sample_tree(5, 1.0, RngSeed{1});
  Tree b = sample_tree(5, 1.0, RngSeed{2});
  auto one = set_of({a});
  EXPECT_EQ(pairwise_ipcp(one).entries, build_cov(a).entries);
  auto two = set_of({a, b});
  const auto labels = a.leaf_labels();
  const Eigen::MatrixXd mean = 0.5 * (build_cov(a, labels).entries + build_cov(b, labels).entries);
  EXPECT_LT((pairwise_ipcp(two, labels).entries - mean).cwiseAbs().maxCoeff(), 1e-15);
  auto rev = labels;
  std::reverse(rev.begin(), rev.end());
  const Eigen::MatrixXd flipped = pairwise_ipcp(two, rev).entries.reverse();
  EXPECT_LT((flipped - mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MapTree, PicksLargestScore) {
  PosteriorTreeSet ts;
  ts.add(sample_tree(4, 1.0, RngSeed{1}), -3.0, -10.0);
  EXPECT_EQ(map_index(ts).index, 0u);
  ts.add(sample_tree(4, 1.0, RngSeed{2}), -1.0, -5.0);
  ts.add(sample_tree(4, 1.0, RngSeed{3}), -1.0, -5.0);
  ts.add(sample_tree(4, 1.0, RngSeed{4}), -2.0, -20.0);
  EXPECT_EQ(map_index(ts).index, 1u);
  EXPECT_EQ(map_tree(ts), ts.trees[1]);
  ts.add(sample_tree(4, 1.0, RngSeed{5}), 0.0, 1e300);
  EXPECT_EQ(map_index(ts).index, 4u);
}

TEST(MapTree, CachedScoresMatchRecomputation) {
  Tree truth = sample_tree(5, 1.0, RngSeed{6});
  auto data = diffuse(truth, 1.0, 3, RngSeed{7}).data;
  auto chains = run_chains(data, 1.0, 1.0, ward_tree(data), ChainConfig{400, 200, 5}, 2, RngSeed{8});
  auto ts = PosteriorTreeSet::from_chains(chains);
  ASSERT_EQ(ts.size(), 80u);
  const auto m = map_index(ts);
  EXPECT_NEAR(m.log_score, log_tree_prior(ts.trees[m.index], 1.0) + log_likelihood(data, ts.trees[m.index], 1.0), 1e-9);
}

TEST(Frobenius, Examples) {
  Tree a = sample_tree(4, 1.0, RngSeed{1});
  auto ca = build_cov(a);
  EXPECT_EQ(frobenius_tree_distance(ca, ca), 0.0);
  auto cb = ca;
  cb.entries(0, 1) += 0.1;
  cb.entries(1, 0) += 0.1;
  EXPECT_NEAR(frobenius_tree_distance(ca, cb), 0.1 * std::sqrt(2.0), 1e-15);
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto labels = ca.leaf_order;
    auto x = build_cov(sample_tree(4, 1.0, RngSeed{10 + s}), labels);
    auto y = build_cov(sample_tree(4, 1.0, RngSeed{20 + s}), labels);
    EXPECT_LE(frobenius_tree_distance(ca, y), frobenius_tree_distance(ca, x) + frobenius_tree_distance(x, y) + 1e-15);
  }
  auto other = ca;
  std::swap(other.leaf_order[0], other.leaf_order[1]);
  EXPECT_THROW(frobenius_tree_distance(ca, other), DomainError);
}

TEST(RobinsonFoulds, Basics) {
  Tree a = parse_newick("((((A:0.2,B:0.2):0.4,C:0.6):0.2,D:0.8):0.2);");
  Tree b = parse_newick("(((A:0.5,B:0.5):0.3,(C:0.2,D:0.2):0.6):0.2);");
  EXPECT_EQ(robinson_foulds(a, a), 0u);
  EXPECT_EQ(robinson_foulds(a, b), 2u);
}
