#include <gtest/gtest.h>

#include "ddtrx/ddtrx.hpp"

using namespace ddtrx;

TEST(PdxCsv, ParsesWellFormedTable) {
  auto t = parse_pdx_csv("treatment,P1,P2\nuntreated,1,2\nA,3,NA\nB,,5\n");
  EXPECT_EQ(t.treatments, (std::vector<std::string>{"untreated", "A", "B"}));
  EXPECT_EQ(t.patients, (std::vector<std::string>{"P1", "P2"}));
  EXPECT_TRUE(t.missing(1, 1));
  EXPECT_TRUE(t.missing(2, 0));
  EXPECT_EQ(t.values(2, 1), 5.0);
  EXPECT_EQ(t.untreated_row(), 0);
}

TEST(PdxCsv, Errors) {
  EXPECT_THROW(parse_pdx_csv("treatment,P1\nuntreated,1\nA,2\nA,3\n"), Error);
  EXPECT_THROW(parse_pdx_csv("treatment,P1\nA,2\nB,3\n"), Error);
  EXPECT_THROW(parse_pdx_csv("treatment,P1\nuntreated,1\nA,abc\n"), Error);
  EXPECT_NO_THROW(parse_pdx_csv("treatment,P1\nA,2\nB,3\n", ""));
}

TEST(KnnImpute, Examples) {
  RawPdxTable t;
  t.treatments = {"a", "b", "c", "d"};
  t.patients = {"p", "q"};
  t.values.resize(4, 2);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  t.values << 1, nan, 1.1, 5, 0.9, 5, 3, 5;
  EXPECT_DOUBLE_EQ(knn_impute(t, 2).values(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(knn_impute(t, 100).values(0, 1), 5.0);
  t.values(3, 1) = 8;
  EXPECT_DOUBLE_EQ(knn_impute(t, 100).values(0, 1), 6.0);
}

TEST(KnnImpute, RankOneWithDuplicateRow) {
  const Eigen::VectorXd u = (Eigen::VectorXd(5) << 1, -2, 0.5, 3, 1.5).finished();
  const Eigen::RowVectorXd v = (Eigen::RowVectorXd(4) << 0.3, 1.2, -0.7, 2.0).finished();
  RawPdxTable t;
  t.treatments = {"a", "b", "c", "d", "e"};
  t.patients = {"p", "q", "r", "s"};
  t.values = u * v;
  t.values.row(4) = t.values.row(1);
  const double truth = t.values(1, 2);
  t.values(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_NEAR(knn_impute(t, 1).values(1, 2), truth, 1e-9);
}

TEST(KnnImpute, EntirelyMissingRowIsAnError) {
  auto t = parse_pdx_csv("treatment,P1,P2\nuntreated,1,2\nA,NA,NA\n");
  EXPECT_THROW(knn_impute(t), DomainError);
}

TEST(Preprocess, TwoByTwoByHand) {
  auto t = parse_pdx_csv("treatment,P1,P2\nuntreated,0,2\nA,2,6\n");
  auto d = preprocess(t);
  // Global sd of {0, 2, 2, 6} is sqrt(19/3).
  const double s = std::sqrt(3.0 / 19.0);
  ASSERT_EQ(d.rows(), 1u);
  EXPECT_EQ(d.row_labels, std::vector<std::string>{"A"});
  EXPECT_NEAR(d.values(0, 0), 2.0 * s, 1e-12);
  EXPECT_NEAR(d.values(0, 1), 4.0 * s, 1e-12);
}

TEST(Preprocess, InvariancesAndBaseline) {
  auto t = parse_pdx_csv("treatment,P1,P2,P3\nuntreated,1,2,3\nA,1,2,3\nB,4,NA,1\nC,0,2,7\n");
  auto d = preprocess(t);
  EXPECT_EQ(d.values.row(0).cwiseAbs().maxCoeff(), 0.0);
  auto t3 = t;
  t3.values *= 3.0;
  EXPECT_LT((preprocess(t3).values - d.values).cwiseAbs().maxCoeff(), 1e-12);
  const std::string csv = "treatment,P1,P2,P3\nuntreated,1.5,2,3\nA,1,NA,3\nB,4,2,1\n";
  EXPECT_EQ(data_csv(preprocess(parse_pdx_csv(csv))), data_csv(preprocess(parse_pdx_csv(csv))));
}

TEST(QqPoints, GaussianNearDiagonal) {
  Tree tree = sample_tree(5, 1.0, RngSeed{1});
  auto data = diffuse(tree, 1.0, 200, RngSeed{2}).data;
  auto pts = mvn_qq_points(data);
  ASSERT_EQ(pts.size(), 200u);
  std::vector<double> a, b;
  for (const auto& p : pts) {
    a.push_back(p.theoretical);
    b.push_back(p.sample);
  }
  const Eigen::Map<const Eigen::VectorXd> x(a.data(), 200), y(b.data(), 200);
  const double corr = ((x.array() - x.mean()) * (y.array() - y.mean())).sum() /
                      std::sqrt((x.array() - x.mean()).square().sum() * (y.array() - y.mean()).square().sum());
  EXPECT_GT(corr, 0.95);
}

TEST(QqPoints, HeavyTailsDepart) {
  Rng rng(RngSeed{3});
  Eigen::MatrixXd x(5, 200);
  for (Eigen::Index j = 0; j < 200; ++j) {
    const double scale = std::sqrt(rng.gamma(1.5, 1.5));  // chi2(3)/3
    for (Eigen::Index i = 0; i < 5; ++i) x(i, j) = rng.normal() / scale;
  }
  auto pts = mvn_qq_points(make_data(x));
  double ratio = 0.0;
  for (const auto& p : pts) ratio = std::max(ratio, p.sample / p.theoretical);
  EXPECT_GT(ratio, 1.5);
}
