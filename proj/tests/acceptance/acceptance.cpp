// Acceptance checks, one line per criterion. Exit status is nonzero if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "ddtrx/ddtrx.hpp"
#include "fixtures.hpp"
#include "oracles/oracles.hpp"

using namespace ddtrx;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Closed-form likelihood against Gaussian pruning on random trees.
Outcome likelihood_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(RngSeed{1001});
  double worst = 0.0;
  for (int r = 0; r < 200; ++r) {
    const std::size_t leaves = 2 + rng.index(7);
    const std::size_t cols = 1 + rng.index(4);
    Tree t = sample_tree(leaves, 0.2 + 2.0 * rng.uniform(), rng);
    // Data diffused on the tree at a random scale, rows in shuffled order.
    const double sigma2 = 0.1 + 2.0 * rng.uniform();
    const auto sim = diffuse(t, 0.1 + 2.0 * rng.uniform(), cols, rng).data;
    std::vector<Eigen::Index> perm(leaves);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(leaves), static_cast<Eigen::Index>(cols));
    std::vector<std::string> labels;
    for (std::size_t r = 0; r < leaves; ++r) {
      x.row(static_cast<Eigen::Index>(r)) = sim.values.row(perm[r]);
      labels.push_back(sim.row_labels[static_cast<std::size_t>(perm[r])]);
    }
    const auto data = make_data(x, labels);
    const double a = log_likelihood(data, t, sigma2);
    const double b = oracle::pruning_log_likelihood(data, t, sigma2);
    worst = std::max(worst, std::abs(a - b));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 10.0, fmt("max |diff| %.3g over 200 trees in %.2f s", worst, secs)};
}

// 2. Two-leaf divergence time law.
Outcome divergence_law() {
  std::string detail;
  bool ok = true;
  for (double c : {0.3, 1.0, 2.0}) {
    Rng rng(derive_seed(RngSeed{1002}, static_cast<std::uint64_t>(c * 10)));
    std::vector<double> times(100000);
    for (auto& t : times) {
      Tree tr = sample_tree(2, c, rng);
      t = tr[tr[tr.root()].children[0]].time;
    }
    const double d = ks_statistic(times, [c](double t) { return 1.0 - std::pow(1.0 - t, c); });
    ok = ok && d < 0.01;
    detail += fmt("c=%.1f KS %.4f; ", c, d);
  }
  return {ok, detail};
}

// 3. Empirical leaf covariance of a fixed 4-leaf tree.
Outcome covariance_consistency() {
  const Tree tree = parse_newick("(((A:0.4,B:0.4):0.35,(C:0.2,D:0.2):0.55):0.25);");
  const std::vector<std::string> order{"A", "B", "C", "D"};
  const Eigen::MatrixXd sigma = build_cov(tree, order).entries;
  double worst = 0.0;
  for (double s2 : {0.5, 1.0}) {
    const int n = 20000;
    Rng rng(derive_seed(RngSeed{1003}, static_cast<std::uint64_t>(s2 * 10)));
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 4), sum2 = Eigen::MatrixXd::Zero(4, 4);
    for (int r = 0; r < n; ++r) {
      const auto d = diffuse(tree, s2, 1, rng).data;
      Eigen::Vector4d x;
      for (Eigen::Index i = 0; i < 4; ++i)
        x(i) = d.values(std::find(d.row_labels.begin(), d.row_labels.end(), order[static_cast<std::size_t>(i)]) -
                            d.row_labels.begin(),
                        0);
      const Eigen::Matrix4d p = x * x.transpose();
      sum += p;
      sum2 += p.cwiseProduct(p);
    }
    const Eigen::MatrixXd mean = sum / n;
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = i; j < 4; ++j) {
        const double se = std::sqrt((sum2(i, j) / n - mean(i, j) * mean(i, j)) / n);
        worst = std::max(worst, std::abs(mean(i, j) - s2 * sigma(i, j)) / se);
      }
  }
  return {worst <= 3.0, fmt("largest deviation %.2f standard errors over 20 entries", worst)};
}

// 4. Unbiasedness of the sigma2 statistic.
Outcome sigma_statistic_unbiased() {
  const int n = 10000;
  std::vector<double> s(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    Rng rng = Rng::substream(RngSeed{1004}, static_cast<std::uint64_t>(r));
    Tree t = sample_tree(10, 1.0, rng);
    s[static_cast<std::size_t>(r)] = summary_sigma(diffuse(t, 0.5, 5, rng).data);
  }
  const double m = mean(s);
  const double se = std::sqrt(sample_variance(s) / n);
  return {std::abs(m - 0.5) <= 3.0 * se, fmt("mean %.5f, 3 SE = %.5f", m, 3.0 * se)};
}

// 5. ABC recovery at desk scale.
Outcome abc_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticSpec spec{50, 10, {2.0, 2.0}, {1.0, 1.0}};
  const auto pool = generate_stats(spec, 20000, RngSeed{1005});
  const StatTable table = StatTable::from(pool);
  std::string detail = "per truth |bias| c/s2:";
  std::vector<double> all_c, all_s;
  std::size_t cover_c = 0, cover_s = 0;
  for (double c : {0.3, 1.0})
    for (double s2 : {0.5, 1.0}) {
      std::vector<double> bias_c, bias_s;
      for (std::uint64_t r = 0; r < 20; ++r) {
        Rng rng = Rng::substream(RngSeed{2005}, static_cast<std::uint64_t>(c * 1000 + s2 * 100) * 100 + r);
        const auto obs = simulate_ddt_data(spec.rows, c, s2, spec.cols, rng);
        const auto res = run_abc(obs, table, 0.01);
        bias_c.push_back(100.0 * std::abs(res.c.summary.median / c - 1.0));
        bias_s.push_back(100.0 * std::abs(res.sigma2.summary.median / s2 - 1.0));
        cover_c += res.c.summary.lower <= c && c <= res.c.summary.upper;
        cover_s += res.sigma2.summary.lower <= s2 && s2 <= res.sigma2.summary.upper;
      }
      detail += fmt(" (%.1f,%.1f) %.1f%%/%.1f%%", c, s2, median(bias_c), median(bias_s));
      all_c.insert(all_c.end(), bias_c.begin(), bias_c.end());
      all_s.insert(all_s.end(), bias_s.begin(), bias_s.end());
    }
  const double n = static_cast<double>(all_c.size());
  const double mc = median(all_c), ms = median(all_s);
  const double cc = static_cast<double>(cover_c) / n, cs = static_cast<double>(cover_s) / n;
  const bool ok = mc <= 30.0 && ms <= 30.0 && cc >= 0.8 && cs >= 0.8;
  detail = fmt("median |bias| c %.1f%% s2 %.1f%%; coverage c %.3f s2 %.3f; ", mc, ms, cc, cs) + detail +
           fmt("; %.0f s", seconds_since(t0));
  return {ok, detail};
}

// 6. Coverage calibration, with a shuffled-truth negative control.
Outcome abc_calibration() {
  const SyntheticSpec spec{20, 10, {2.0, 2.0}, {1.0, 1.0}};
  const auto pool = generate_stats(spec, 20200, RngSeed{1006});
  const auto rep = calibrate(pool, 20000, 0.01, 200, RngSeed{2006});
  const auto neg = calibrate(pool, 20000, 0.01, 200, RngSeed{2006}, CalibrationVariant::shuffled_truths);
  const bool ok = rep.c.p_value > 0.01 && rep.sigma2.p_value > 0.01 && rep.c.coverage_95 >= 0.9 &&
                  rep.c.coverage_95 <= 0.99 && rep.sigma2.coverage_95 >= 0.9 && rep.sigma2.coverage_95 <= 0.99;
  return {ok, fmt("KS p c %.3f s2 %.3f; coverage c %.3f s2 %.3f; negative control KS p c %.2g s2 %.2g (%s)",
                  rep.c.p_value, rep.sigma2.p_value, rep.c.coverage_95, rep.sigma2.coverage_95, neg.c.p_value,
                  neg.sigma2.p_value,
                  neg.c.p_value < 0.01 || neg.sigma2.p_value < 0.01 ? "rejected" : "not rejected")};
}

// 7. MH topology frequencies against quadrature, and the self-proposal ratio.
Outcome mh_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(RngSeed{1007});
  const Tree truth = sample_tree(4, 1.0, rng, {"A", "B", "C", "D"});
  const auto data = diffuse(truth, 1.0, 2, rng).data;
  const auto exact = oracle::topology_posterior(data, 1.0, 1.0);
  const auto chains = run_chains(data, 1.0, 1.0, ward_tree(data), ChainConfig{27000, 2000, 1}, 4, RngSeed{2007});
  std::map<std::string, double> freq;
  double n = 0.0;
  for (const auto& ch : chains)
    for (const auto& s : ch.samples) {
      freq[oracle::topology_key(s.tree)] += 1.0;
      n += 1.0;
    }
  double tv = 0.0;
  for (const auto& [key, p] : exact) tv += std::abs(freq[key] / n - p);
  for (const auto& [key, f] : freq)
    if (!exact.count(key)) tv += f / n;
  tv *= 0.5;

  bool self_ok = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Tree t = sample_tree(4 + s % 5, 1.0, RngSeed{3007 + s});
    const auto d = diffuse(t, 1.0, 3, RngSeed{4007 + s}).data;
    const ChainState state = make_state(t, d, 1.0, 1.0);
    for (NodeId x : detach_candidates(t)) {
      const Detached det = detach_at(t, x);
      const Proposal p = make_proposal(t, det, AttachPoint{det.u_branch, det.t_u}, 1.0);
      const double r = log_acceptance_ratio(state, p, log_tree_prior(p.candidate, 1.0), log_likelihood(d, p.candidate, 1.0));
      self_ok = self_ok && p.candidate == t && r == 0.0;
    }
  }
  return {tv < 0.03 && self_ok && n == 100000.0,
          fmt("TV %.4f over %.0f samples and %zu topologies; self-proposal ratio exactly 1: %s; %.0f s", tv, n,
              exact.size(), self_ok ? "yes" : "no", seconds_since(t0))};
}

// 8. Tree recovery on a well-separated 8-leaf tree.
Outcome tree_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const Tree truth = parse_newick(
      "((((L1:0.1,L2:0.1):0.35,(L3:0.1,L4:0.1):0.35):0.35,((L5:0.1,L6:0.1):0.35,(L7:0.1,L8:0.1):0.35):0.35):0.2);");
  const auto labels = truth.leaf_labels();
  const SyntheticSpec spec{8, 20, {2.0, 2.0}, {1.0, 1.0}};
  const StatTable table = StatTable::from(generate_stats(spec, 20000, RngSeed{1008}));
  const TreeCov truth_cov = build_cov(truth, labels);
  int exact = 0, better = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    // Same global-SD scaling as ingest; topology and leaf covariance are
    // scale-free, only sigma2 moves.
    const auto raw = diffuse(truth, 0.1, 20, derive_seed(RngSeed{2008}, static_cast<std::uint64_t>(r))).data;
    const auto scaled = scale_by_global_sd(RawPdxTable{raw.row_labels, raw.col_labels, raw.values, ""});
    const auto data = make_data(scaled.values, scaled.treatments, scaled.patients);
    const auto abc = run_abc(data, table, 0.01);
    const Tree ward = ward_tree(data);
    const auto chains = run_chains(data, abc.c.summary.median, abc.sigma2.summary.median, ward,
                                   ChainConfig{4000, 2000, 1}, 2, derive_seed(RngSeed{3008}, static_cast<std::uint64_t>(r)));
    const auto posterior = PosteriorTreeSet::from_chains(chains);
    const Tree& map = map_tree(posterior);
    exact += robinson_foulds(map, truth) == 0;
    better += frobenius_tree_distance(build_cov(map, labels), truth_cov) <
              frobenius_tree_distance(build_cov(ward, labels), truth_cov);
  }
  return {exact >= 16 && better >= 14,
          fmt("RF = 0 in %d/%d, MAP closer than Ward in %d/%d; %.0f s", exact, reps, better, reps, seconds_since(t0))};
}

// 9. Summary identities and the projection oracle.
Outcome summary_identities() {
  bool ok = true;
  std::string detail;
  {
    PosteriorTreeSet one;
    const Tree t = sample_tree(6, 1.0, RngSeed{1009});
    one.add(t, 0, 0);
    const std::vector<std::string> sub{"T2", "T5"};
    const bool id = ipcp(one, sub) == mrca_time(t, sub);
    ok = ok && id;
    detail += fmt("L=1 iPCP == MRCA: %s; ", id ? "yes" : "no");
  }
  {
    PosteriorTreeSet three;
    // ((A,B) at ab, C) at top, with times set exactly.
    for (auto [top, ab] : {std::pair{0.1, 0.5}, std::pair{0.2, 0.3}, std::pair{0.15, 0.8}}) {
      std::vector<Node> n(6);
      n[0] = Node{kNoNode, {1, kNoNode}, 0.0, {}};
      n[1] = Node{0, {2, 3}, top, {}};
      n[2] = Node{1, {4, 5}, ab, {}};
      n[3] = Node{1, {kNoNode, kNoNode}, 1.0, "C"};
      n[4] = Node{2, {kNoNode, kNoNode}, 1.0, "A"};
      n[5] = Node{2, {kNoNode, kNoNode}, 1.0, "B"};
      three.add(Tree(n, 0), 0, 0);
    }
    const auto c = pcp_curve(three, {"A", "B"});
    const bool drop = c.at(std::nextafter(0.3, 0.0)) == 1.0 && c.at(0.3) == 2.0 / 3.0;
    ok = ok && drop;
    detail += fmt("three-tree PCP drops 1 -> 2/3 at 0.3: %s; ", drop ? "yes" : "no");
  }
  {
    const std::vector<double> w(137, 0.42);
    const bool ess = std::abs(abc_ess(w) - 137.0) < 1e-9;
    ok = ok && ess;
    detail += fmt("equal-weight ESS == k: %s; ", ess ? "yes" : "no");
  }
  {
    Rng rng(RngSeed{2009});
    double worst = 0.0, worst_idem = 0.0;
    for (int r = 0; r < 50; ++r) {
      const auto n = static_cast<Eigen::Index>(3 + r % 3);
      Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = rng.uniform();
      const auto p = project_ultrametric(m);
      worst = std::max(worst, (p.cov.entries - oracle::exhaustive_projection(m)).cwiseAbs().maxCoeff());
      worst_idem = std::max(worst_idem, (project_ultrametric(p.cov.entries).cov.entries - p.cov.entries).cwiseAbs().maxCoeff());
    }
    ok = ok && worst < 1e-8 && worst_idem < 1e-12;
    detail += fmt("projection vs exhaustive oracle max diff %.2g, idempotence %.2g", worst, worst_idem);
  }
  return {ok, detail};
}

// 10. Two identical runs produce identical artifact hashes.
Outcome pipeline_reproducibility() {
  fixture::TempDir tmp("acceptance");
  const fs::path csv = tmp.path / "obs.csv";
  write_text(csv, fixture::response_csv(10, 8, 1010));
  auto a = fixture::small_config(tmp.path / "first");
  auto b = fixture::small_config(tmp.path / "second");
  a.nsyn = b.nsyn = 5000;
  a.chain = b.chain = {2000, 1000, 1};
  const auto ra = cmd_infer(csv, a);
  const auto rb = cmd_infer(csv, b);
  const bool same = ra.manifest.at("hashes") == rb.manifest.at("hashes");
  return {same, fmt("%zu artifact hashes %s", ra.manifest.at("hashes").size(), same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 likelihood oracle equivalence", likelihood_oracle},
      {"AC2 divergence-time law", divergence_law},
      {"AC3 covariance consistency", covariance_consistency},
      {"AC4 sigma2 statistic unbiased", sigma_statistic_unbiased},
      {"AC5 ABC recovery", abc_recovery},
      {"AC6 ABC calibration", abc_calibration},
      {"AC7 MH correctness", mh_correctness},
      {"AC8 tree recovery", tree_recovery},
      {"AC9 summary identities", summary_identities},
      {"AC10 pipeline reproducibility", pipeline_reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    if (!only.empty() && !only.count(static_cast<int>(i + 1))) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
