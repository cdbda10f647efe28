#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddtrx/abc.hpp"
#include "ddtrx/diagnostics.hpp"
#include "ddtrx/hclust.hpp"
#include "ddtrx/ingest.hpp"
#include "ddtrx/io.hpp"
#include "ddtrx/mh.hpp"
#include "ddtrx/summaries.hpp"
#include "ddtrx/ultrametric.hpp"

namespace ddtrx {

using json = nlohmann::json;

struct RunConfig {
  GammaSpec prior_c{2.0, 2.0};
  GammaSpec prior_sigma2_inv{1.0, 1.0};
  std::size_t nsyn = 20000;
  double d = 0.005;
  std::size_t chains = 5;
  ChainConfig chain{10000, 9000, 1};
  std::uint64_t seed = 1;
  std::string untreated = "untreated";  // empty: input is already centered
  std::size_t knn_k = 10;
  std::size_t shard_size = 1000;
  fs::path out = "ddtrx-run";
  std::optional<fs::path> cache;  // default: <out>/cache

  void check() const {
    prior_c.check();
    prior_sigma2_inv.check();
    if (nsyn < 1) throw DomainError("nsyn must be positive");
    if (!(d > 0.0 && d <= 1.0)) throw DomainError("d must lie in (0, 1]");
    if (chains < 1) throw DomainError("need at least one chain");
    if (chain.iters < 1) throw DomainError("iters must be positive");
    chain.check();
    if (knn_k < 1) throw DomainError("knn k must be positive");
    if (shard_size < 1) throw DomainError("shard size must be positive");
  }

  fs::path cache_dir() const { return cache ? *cache : out / "cache"; }

  json to_json() const {
    return {{"prior_c", {{"shape", prior_c.shape}, {"rate", prior_c.rate}}},
            {"prior_sigma2_inv", {{"shape", prior_sigma2_inv.shape}, {"rate", prior_sigma2_inv.rate}}},
            {"nsyn", nsyn},
            {"d", d},
            {"chains", chains},
            {"iters", chain.iters},
            {"burn_in", chain.burn_in},
            {"thin", chain.thin},
            {"seed", seed},
            {"untreated", untreated},
            {"knn_k", knn_k}};
  }
};

// Substreams of the run seed.
inline RngSeed simulation_seed(std::uint64_t seed) { return derive_seed(RngSeed{seed}, 1); }
inline RngSeed chain_seed(std::uint64_t seed) { return derive_seed(RngSeed{seed}, 2); }

// ---------------------------------------------------------------------------
// Synthetic statistics cache: <dir>/meta.json plus shard-NNNNN.jsonl files of
// shard_size records each. A shard is complete when it has all its lines.

inline json stats_record(const SyntheticStats& s, RngSeed seed) {
  return {{"c", s.c},
          {"sigma2", s.sigma2},
          {"S_c", s.s_c},
          {"S_sigma", s.s_sigma},
          {"index", s.index},
          {"seed", derive_seed(seed, s.index).value}};
}

inline SyntheticStats stats_from_record(const json& j) {
  SyntheticStats s;
  s.c = j.at("c").get<double>();
  s.sigma2 = j.at("sigma2").get<double>();
  const auto v = j.at("S_c").get<std::vector<double>>();
  if (v.size() != s.s_c.size()) throw ParseError("cache record S_c must have 10 entries", 0);
  std::copy(v.begin(), v.end(), s.s_c.begin());
  s.s_sigma = j.at("S_sigma").get<double>();
  s.index = j.at("index").get<std::uint64_t>();
  return s;
}

inline json cache_meta(const SyntheticSpec& spec, RngSeed seed, std::size_t shard_size) {
  return {{"rows", spec.rows},
          {"cols", spec.cols},
          {"prior_c", {spec.prior_c.shape, spec.prior_c.rate}},
          {"prior_sigma2_inv", {spec.prior_sigma2_inv.shape, spec.prior_sigma2_inv.rate}},
          {"seed", seed.value},
          {"shard_size", shard_size}};
}

inline fs::path shard_path(const fs::path& dir, std::size_t shard) {
  char name[48];
  std::snprintf(name, sizeof(name), "shard-%05zu.jsonl", shard);
  return dir / name;
}

inline std::vector<SyntheticStats> read_shard(const fs::path& path) {
  std::vector<SyntheticStats> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(stats_from_record(json::parse(line)));
  return out;
}

struct SimulateReport {
  std::size_t generated_shards = 0;
  std::size_t reused_shards = 0;
};

/// Ensures the first n records of the stream exist under `dir` and returns
/// them. Complete shards from an earlier run with the same meta are reused.
inline std::vector<SyntheticStats> simulate_cached(const SyntheticSpec& spec, std::size_t n, RngSeed seed,
                                                   const fs::path& dir, std::size_t shard_size,
                                                   SimulateReport* report = nullptr) {
  spec.check();
  fs::create_directories(dir);
  const json meta = cache_meta(spec, seed, shard_size);
  const fs::path meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    if (json::parse(read_text(meta_path)) != meta)
      throw Error("cache " + dir.string() + " was built with different settings");
  } else {
    write_text(meta_path, meta.dump(2) + "\n");
  }
  std::vector<SyntheticStats> out;
  out.reserve(n);
  const std::size_t shards = (n + shard_size - 1) / shard_size;
  for (std::size_t s = 0; s < shards; ++s) {
    const fs::path path = shard_path(dir, s);
    std::vector<SyntheticStats> recs;
    if (fs::exists(path)) {
      recs = read_shard(path);
      if (recs.size() == shard_size) {
        if (report) ++report->reused_shards;
      } else {
        recs.clear();
      }
    }
    if (recs.empty()) {
      recs = generate_stats(spec, shard_size, seed, s * shard_size);
      std::string text;
      for (const auto& r : recs) text += stats_record(r, seed).dump() + "\n";
      const fs::path tmp = path.string() + ".tmp";
      write_text(tmp, text);
      fs::rename(tmp, path);
      if (report) ++report->generated_shards;
    }
    for (const auto& r : recs) {
      if (out.size() == n) break;
      out.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline DataMatrix ingest_table(const RawPdxTable& table, const RunConfig& config) {
  DataMatrix d;
  if (config.untreated.empty()) {
    RawPdxTable t = knn_impute(scale_by_global_sd(table), config.knn_k);
    d = make_data(t.values, t.treatments, t.patients);
  } else {
    d = preprocess(table, config.knn_k);
  }
  if (d.rows() < 2) throw DomainError("need at least two treatments besides the untreated row");
  return d;
}

inline DataMatrix ingest_file(const fs::path& csv, const RunConfig& config) {
  return ingest_table(load_csv(csv, config.untreated), config);
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("[") + stage + "] " + e.what());
  }
}

struct ChainDiagnostics {
  double acceptance_rate = 0.0;
  std::optional<double> geweke_z;
  std::optional<double> ess;
  std::size_t proposal_failures = 0;
  std::size_t singular = 0;
  std::size_t retained = 0;
};

inline ChainDiagnostics chain_diagnostics(const ChainResult& ch) {
  ChainDiagnostics d;
  d.acceptance_rate = ch.acceptance_rate();
  d.proposal_failures = ch.proposal_failures;
  d.singular = ch.singular;
  d.retained = ch.samples.size();
  try {
    d.geweke_z = geweke_z(ch.log_score);
  } catch (const DomainError&) {
  }
  try {
    d.ess = mcmc_ess(ch.log_score);
  } catch (const DomainError&) {
  }
  return d;
}

inline json to_json(const ChainDiagnostics& d, std::size_t chain) {
  return {{"chain", chain},
          {"acceptance_rate", d.acceptance_rate},
          {"geweke_z", d.geweke_z ? json(*d.geweke_z) : json(nullptr)},
          {"ess", d.ess ? json(*d.ess) : json(nullptr)},
          {"proposal_failures", d.proposal_failures},
          {"singular_rejections", d.singular},
          {"retained", d.retained}};
}

inline json to_json(const AbcParameterResult& r) {
  return {{"median", r.summary.median},
          {"lower", r.summary.lower},
          {"upper", r.summary.upper},
          {"ess", r.ess},
          {"k", r.samples.size()},
          {"bandwidth", r.samples.bandwidth},
          {"dropped_columns", r.adjusted.dropped_columns}};
}

inline std::string abc_samples_csv(const AbcResult& abc) {
  std::string out = "parameter,index,value,adjusted,weight,distance\n";
  auto rows = [&](const char* name, const AbcParameterResult& r) {
    for (std::size_t i = 0; i < r.samples.size(); ++i)
      out += std::string(name) + "," + std::to_string(r.samples.indices[i]) + "," + format_number(r.samples.values[i]) +
             "," + format_number(r.adjusted.values[i]) + "," + format_number(r.samples.weights[i]) + "," +
             format_number(r.samples.distances[i]) + "\n";
  };
  rows("c", abc.c);
  rows("sigma2", abc.sigma2);
  return out;
}

inline std::string trees_jsonl(const PosteriorTreeSet& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i)
    out += json{{"chain", ts.chain[i]},
                {"iter", ts.iter[i]},
                {"newick", serialize_newick(ts.trees[i])},
                {"log_prior", ts.log_prior[i]},
                {"log_lik", ts.log_lik[i]}}
               .dump() +
           "\n";
  return out;
}

inline PosteriorTreeSet parse_trees_jsonl(std::string_view text) {
  PosteriorTreeSet ts;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ts.add(parse_newick(j.at("newick").get<std::string>()), j.at("log_prior").get<double>(),
           j.at("log_lik").get<double>(), j.value("chain", std::size_t{0}), j.at("iter").get<std::size_t>());
  }
  return ts;
}

struct InferResult {
  json manifest;
  fs::path manifest_path;
  AbcResult abc;
  std::vector<ChainDiagnostics> diagnostics;
};

inline const std::vector<std::string> kArtifactNames{"data",           "abc_samples",    "trees",
                                                     "diagnostics",    "pairwise_ipcp",  "projected_ipcp",
                                                     "map_tree",       "projected_tree"};

/// Full two-stage run: ingest, ABC for (c, sigma2), MH chains at the ABC
/// posterior medians, summaries. Artifacts and manifest.json go to config.out.
inline InferResult cmd_infer(const fs::path& obs_csv, const RunConfig& config) {
  config.check();
  const std::string started = utc_timestamp();
  fs::create_directories(config.out);
  std::map<std::string, fs::path> files{{"data", "data.csv"},
                                        {"abc_samples", "abc_samples.csv"},
                                        {"trees", "trees.jsonl"},
                                        {"diagnostics", "diagnostics.json"},
                                        {"pairwise_ipcp", "pairwise_ipcp.csv"},
                                        {"projected_ipcp", "projected_ipcp.csv"},
                                        {"map_tree", "map_tree.nwk"},
                                        {"projected_tree", "projected_tree.nwk"}};
  auto put = [&](const std::string& name, const std::string& text) { write_text(config.out / files.at(name), text); };

  const DataMatrix data = run_stage("ingest", [&] {
    DataMatrix d = ingest_file(obs_csv, config);
    if (d.rows() < 3) throw DomainError("need at least three treatments");
    return d;
  });
  put("data", data_csv(data));

  InferResult result;
  result.abc = run_stage("abc", [&] {
    SyntheticSpec spec{data.rows(), data.cols(), config.prior_c, config.prior_sigma2_inv};
    const auto pool =
        simulate_cached(spec, config.nsyn, simulation_seed(config.seed), config.cache_dir(), config.shard_size);
    return run_abc(data, StatTable::from(pool), config.d);
  });
  put("abc_samples", abc_samples_csv(result.abc));
  const double c0 = result.abc.c.summary.median;
  const double sigma0 = result.abc.sigma2.summary.median;

  const auto chains = run_stage("mh", [&] {
    return run_chains(data, c0, sigma0, ward_tree(data), config.chain, config.chains, chain_seed(config.seed));
  });
  json diag = json::array();
  for (const auto& ch : chains) {
    result.diagnostics.push_back(chain_diagnostics(ch));
    diag.push_back(to_json(result.diagnostics.back(), ch.chain));
  }
  put("diagnostics", json{{"chains", diag}, {"abc_ess", {{"c", result.abc.c.ess}, {"sigma2", result.abc.sigma2.ess}}}}
                         .dump(2) +
                         "\n");

  const PosteriorTreeSet ts = PosteriorTreeSet::from_chains(chains);
  put("trees", trees_jsonl(ts));
  json summary = run_stage("summaries", [&] {
    const auto labels = data.row_labels;
    const TreeCov pw = pairwise_ipcp(ts, labels);
    put("pairwise_ipcp", matrix_csv(pw.entries, labels, labels));
    const auto proj = project_ultrametric(pw.entries, labels);
    put("projected_ipcp", matrix_csv(proj.cov.entries, labels, labels));
    put("projected_tree", merge_tree_newick(proj.tree) + "\n");
    const auto map = map_index(ts);
    put("map_tree", serialize_newick(ts.trees[map.index]) + "\n");
    return json{{"L", ts.size()},
                {"map_index", map.index},
                {"map_log_score", map.log_score},
                {"projection_distance", proj.distance},
                {"projection_exact", proj.exact}};
  });

  json artifacts = json::object(), hashes = json::object();
  for (const auto& [name, rel] : files) {
    artifacts[name] = rel.string();
    hashes[name] = file_sha256(config.out / rel);
  }
  result.manifest = {{"format", "ddtrx-run/1"},
                     {"id", config.out.filename().string()},
                     {"config", config.to_json()},
                     {"input", {{"path", obs_csv.string()}, {"sha256", file_sha256(obs_csv)}}},
                     {"treatments", data.row_labels},
                     {"patients", data.col_labels},
                     {"abc", {{"c", to_json(result.abc.c)}, {"sigma2", to_json(result.abc.sigma2)}}},
                     {"c0", c0},
                     {"sigma2_0", sigma0},
                     {"summary", summary},
                     {"artifacts", artifacts},
                     {"hashes", hashes},
                     {"timestamps", {{"started", started}, {"finished", utc_timestamp()}}}};
  result.manifest_path = config.out / "manifest.json";
  write_text(result.manifest_path, result.manifest.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Loading a finished run

struct LoadedRun {
  std::string id;
  fs::path dir;
  json manifest;
  PosteriorTreeSet trees;
  std::vector<std::string> labels;
};

inline fs::path manifest_file(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

/// Reads a manifest and its tree samples, verifying every artifact hash.
inline LoadedRun load_run(const fs::path& path) {
  const fs::path mpath = manifest_file(path);
  LoadedRun run;
  run.dir = mpath.parent_path();
  run.manifest = json::parse(read_text(mpath));
  for (const auto& [name, rel] : run.manifest.at("artifacts").items()) {
    const fs::path file = run.dir / rel.get<std::string>();
    const std::string expected = run.manifest.at("hashes").at(name).get<std::string>();
    if (file_sha256(file) != expected) throw Error("artifact '" + name + "' does not match its manifest hash");
  }
  run.id = run.manifest.value("id", run.dir.filename().string());
  run.trees = parse_trees_jsonl(read_text(run.dir / run.manifest.at("artifacts").at("trees").get<std::string>()));
  run.trees.check();
  run.labels = run.manifest.at("treatments").get<std::vector<std::string>>();
  return run;
}

inline json pcp_json(const PcpCurve& c) {
  json b = json::array();
  for (const auto& [t, v] : c.breakpoints) b.push_back({t, v});
  return b;
}

/// iPCP and PCP curve of a subset; both the CLI and the service answer from here.
inline json subset_summary(const PosteriorTreeSet& ts, const std::vector<std::string>& subset) {
  return {{"subset", subset}, {"ipcp", ipcp(ts, subset)}, {"L", ts.size()}, {"pcp", pcp_json(pcp_curve(ts, subset))}};
}

inline json map_summary(const PosteriorTreeSet& ts) {
  const auto m = map_index(ts);
  return {{"newick", serialize_newick(ts.trees[m.index])}, {"log_score", m.log_score}, {"index", m.index}};
}

inline json pairwise_summary(const LoadedRun& run) {
  const TreeCov pw = pairwise_ipcp(run.trees, run.labels);
  json rows = json::array();
  for (Eigen::Index i = 0; i < pw.entries.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < pw.entries.cols(); ++j) r.push_back(pw.entries(i, j));
    rows.push_back(r);
  }
  return {{"labels", run.labels}, {"matrix", rows}};
}

inline json cmd_summarize(const LoadedRun& run, const std::vector<std::string>& subset) {
  json out{{"id", run.id}, {"L", run.trees.size()}, {"map_tree", map_summary(run.trees)}};
  if (!subset.empty()) out["query"] = subset_summary(run.trees, subset);
  return out;
}

struct ProjectResult {
  UltrametricProjection projection;
  std::string matrix_csv;
  std::string newick;
};

inline ProjectResult cmd_project(std::string_view matrix_csv_text) {
  const DataMatrix m = parse_matrix_csv(matrix_csv_text);
  if (m.row_labels != m.col_labels) throw ParseError("similarity matrix row and column labels differ", 0);
  auto proj = project_ultrametric(m.values, m.row_labels);
  return {proj, matrix_csv(proj.cov.entries, m.row_labels, m.row_labels), merge_tree_newick(proj.tree)};
}

}  // namespace ddtrx
