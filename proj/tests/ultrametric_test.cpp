#include <gtest/gtest.h>

#include "ddtrx/ddtrx.hpp"
#include "oracles/oracles.hpp"

using namespace ddtrx;

namespace {

Eigen::MatrixXd random_similarity(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = rng.uniform();
  return m;
}

}  // namespace

TEST(Projection, ThreeByThreeExample) {
  Eigen::Matrix3d m;
  m << 1, 0.9, 0.2, 0.9, 1, 0.4, 0.2, 0.4, 1;
  auto p = project_ultrametric(m);
  EXPECT_TRUE(p.exact);
  EXPECT_NEAR(p.cov.entries(0, 1), 0.9, 1e-12);
  EXPECT_NEAR(p.cov.entries(0, 2), 0.3, 1e-12);
  EXPECT_NEAR(p.cov.entries(1, 2), 0.3, 1e-12);
  EXPECT_NEAR(p.distance, std::sqrt(4 * 0.01), 1e-12);
}

TEST(Projection, UltrametricInputIsUnchanged) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (std::size_t n : {4u, 7u, 12u}) {
      const auto cov = build_cov(sample_tree(n, 1.0, RngSeed{s}));
      auto p = project_ultrametric(cov.entries, cov.leaf_order);
      EXPECT_LT(p.distance, 1e-12);
      EXPECT_LT((p.cov.entries - cov.entries).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Projection, MatchesExhaustiveOracleAndIsIdempotent) {
  Rng rng(RngSeed{77});
  for (int r = 0; r < 30; ++r) {
    const auto n = static_cast<Eigen::Index>(3 + r % 4);
    const Eigen::MatrixXd m = random_similarity(n, rng);
    auto p = project_ultrametric(m);
    const Eigen::MatrixXd expect = oracle::exhaustive_projection(m);
    EXPECT_LT((p.cov.entries - expect).cwiseAbs().maxCoeff(), 1e-8) << "n=" << n;
    EXPECT_TRUE(validate_ultrametric(p.cov.entries, 1e-12).ok);
    auto again = project_ultrametric(p.cov.entries);
    EXPECT_LT((again.cov.entries - p.cov.entries).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Projection, AgglomerativeAboveLimitIsUltrametric) {
  Rng rng(RngSeed{5});
  for (int r = 0; r < 10; ++r) {
    const Eigen::MatrixXd m = random_similarity(10 + r, rng);
    auto p = project_ultrametric(m);
    EXPECT_FALSE(p.exact);
    EXPECT_TRUE(validate_ultrametric(p.cov.entries, 1e-12).ok);
    EXPECT_NEAR(p.distance, (p.cov.entries - m).norm(), 1e-12);
  }
}

TEST(Projection, NewickOfMergeTree) {
  Eigen::Matrix3d m;
  m << 1, 0.9, 0.2, 0.9, 1, 0.4, 0.2, 0.4, 1;
  auto p = project_ultrametric(m, {"A", "B", "C"});
  Tree t = parse_newick(merge_tree_newick(p.tree));
  EXPECT_LT((build_cov(t, {"A", "B", "C"}).entries - p.cov.entries).cwiseAbs().maxCoeff(), 1e-12);

  // Four leaves at one common level collapse into a single multifurcation.
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 4, 0.5);
  flat.diagonal().setOnes();
  auto q = project_ultrametric(flat, {"A", "B", "C", "D"});
  EXPECT_EQ(q.tree.nodes[static_cast<std::size_t>(q.tree.root)].children.size(), 4u);
  EXPECT_EQ(merge_tree_newick(q.tree), "((A:0.5,B:0.5,C:0.5,D:0.5):0.5);");
}

TEST(Projection, RejectsMalformedInput) {
  Eigen::Matrix2d bad;
  bad << 1, 0.5, 0.4, 1;
  EXPECT_THROW(project_ultrametric(bad), DomainError);
  bad << 1, 1.5, 1.5, 1;
  EXPECT_THROW(project_ultrametric(bad), DomainError);
  EXPECT_THROW(project_ultrametric(Eigen::MatrixXd::Identity(1, 1)), DomainError);
}
