// Command-line front end: simulate | infer | summarize | project | serve | ingest.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "ddtrx/ddtrx.hpp"
#include "ddtrx/service.hpp"

namespace {

using namespace ddtrx;

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void add_prior_options(CLI::App* app, RunConfig& cfg) {
  app->add_option("--prior-c", [&cfg](const CLI::results_t& r) {
       cfg.prior_c = {std::stod(r.at(0)), std::stod(r.at(1))};
       return true;
     }, "shape and rate of the Gamma prior on c")
      ->expected(2)
      ->type_name("SHAPE RATE");
  app->add_option("--prior-sigma2-inv", [&cfg](const CLI::results_t& r) {
       cfg.prior_sigma2_inv = {std::stod(r.at(0)), std::stod(r.at(1))};
       return true;
     }, "shape and rate of the Gamma prior on 1/sigma2")
      ->expected(2)
      ->type_name("SHAPE RATE");
}

void print_diagnostics(const InferResult& r) {
  std::printf("c0 = %.6g [%.6g, %.6g]  ABC ESS %.1f\n", r.abc.c.summary.median, r.abc.c.summary.lower,
              r.abc.c.summary.upper, r.abc.c.ess);
  std::printf("sigma2_0 = %.6g [%.6g, %.6g]  ABC ESS %.1f\n", r.abc.sigma2.summary.median, r.abc.sigma2.summary.lower,
              r.abc.sigma2.summary.upper, r.abc.sigma2.ess);
  std::printf("%-6s %-10s %-10s %-10s %-8s\n", "chain", "accept", "geweke_z", "ess", "failed");
  for (std::size_t k = 0; k < r.diagnostics.size(); ++k) {
    const auto& d = r.diagnostics[k];
    std::printf("%-6zu %-10.4f %-10s %-10s %-8zu\n", k, d.acceptance_rate,
                d.geweke_z ? std::to_string(*d.geweke_z).c_str() : "-", d.ess ? std::to_string(*d.ess).c_str() : "-",
                d.proposal_failures);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirichlet diffusion tree inference"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::uint64_t burnin = cfg.chain.burn_in;

  // simulate
  auto* sim = app.add_subcommand("simulate", "build or extend the synthetic statistics cache");
  std::size_t sim_rows = 0, sim_cols = 0;
  fs::path sim_out = "ddtrx-cache";
  sim->add_option("--rows", sim_rows, "treatments I")->required();
  sim->add_option("--cols", sim_cols, "patients J")->required();
  sim->add_option("--nsyn", cfg.nsyn, "number of synthetic datasets");
  sim->add_option("--seed", cfg.seed, "run seed");
  sim->add_option("--shard-size", cfg.shard_size, "records per shard file");
  sim->add_option("--out", sim_out, "cache directory");
  add_prior_options(sim, cfg);

  // infer
  auto* inf = app.add_subcommand("infer", "ABC for (c, sigma2), then MH over trees");
  fs::path obs;
  std::string cache;
  inf->add_option("csv", obs, "response table (treatments x patients)")->required()->check(CLI::ExistingFile);
  inf->add_option("--seed", cfg.seed, "run seed");
  inf->add_option("--nsyn", cfg.nsyn, "number of synthetic datasets");
  inf->add_option("--d", cfg.d, "ABC acceptance fraction");
  inf->add_option("--chains", cfg.chains, "MH chains");
  inf->add_option("--iters", cfg.chain.iters, "iterations per chain");
  inf->add_option("--burnin", burnin, "discarded iterations per chain");
  inf->add_option("--thin", cfg.chain.thin, "keep every n-th iteration after burn-in");
  inf->add_option("--out", cfg.out, "output directory");
  inf->add_option("--cache", cache, "synthetic cache directory (default <out>/cache)");
  inf->add_option("--untreated", cfg.untreated, "name of the baseline row; empty if the table is already centered");
  inf->add_option("--knn", cfg.knn_k, "neighbours for imputation");
  add_prior_options(inf, cfg);

  // summarize
  auto* sum = app.add_subcommand("summarize", "iPCP, PCP curve and MAP tree from a finished run");
  fs::path manifest;
  std::string subset;
  sum->add_option("manifest", manifest, "manifest.json or its directory")->required();
  sum->add_option("--subset", subset, "comma-separated treatment labels");

  // project
  auto* proj = app.add_subcommand("project", "nearest tree-structured matrix of a similarity matrix");
  fs::path matrix;
  fs::path proj_out;
  proj->add_option("matrix", matrix, "labeled similarity matrix CSV")->required()->check(CLI::ExistingFile);
  proj->add_option("--out", proj_out, "directory for projected_ipcp.csv and projected_tree.nwk");

  // serve
  auto* srv = app.add_subcommand("serve", "read-only JSON API over finished runs");
  std::vector<fs::path> manifests;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path static_dir;
  srv->add_option("manifests", manifests, "manifests to load (default: runs under $DDTRX_DATA_DIR)");
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "port");
  srv->add_option("--static", static_dir, "directory of UI assets served at /");

  // ingest
  auto* ing = app.add_subcommand("ingest", "scale, impute and baseline-subtract a response table");
  fs::path ing_in, ing_out, qq_out;
  std::string untreated = "untreated";
  std::size_t knn = 10;
  ing->add_option("csv", ing_in, "response table")->required()->check(CLI::ExistingFile);
  ing->add_option("--untreated", untreated, "name of the baseline row");
  ing->add_option("--knn", knn, "neighbours for imputation");
  ing->add_option("--out", ing_out, "output data CSV (default: stdout)");
  ing->add_option("--qq", qq_out, "write multivariate-normal QQ points to this CSV");

  CLI11_PARSE(app, argc, argv);
  cfg.chain.burn_in = burnin;
  if (!cache.empty()) cfg.cache = cache;

  try {
    if (*sim) {
      cfg.check();
      SyntheticSpec spec{sim_rows, sim_cols, cfg.prior_c, cfg.prior_sigma2_inv};
      SimulateReport report;
      auto pool = simulate_cached(spec, cfg.nsyn, simulation_seed(cfg.seed), sim_out, cfg.shard_size, &report);
      std::printf("%zu records in %s (%zu shards generated, %zu reused)\n", pool.size(), sim_out.c_str(),
                  report.generated_shards, report.reused_shards);
    } else if (*inf) {
      auto result = cmd_infer(obs, cfg);
      print_diagnostics(result);
      std::printf("manifest: %s\n", result.manifest_path.c_str());
    } else if (*sum) {
      const LoadedRun run = load_run(manifest);
      std::cout << cmd_summarize(run, split_labels(subset)).dump(2) << "\n";
    } else if (*proj) {
      auto r = cmd_project(read_text(matrix));
      if (proj_out.empty()) {
        std::cout << r.matrix_csv << r.newick << "\n";
      } else {
        write_text(proj_out / "projected_ipcp.csv", r.matrix_csv);
        write_text(proj_out / "projected_tree.nwk", r.newick + "\n");
      }
      std::fprintf(stderr, "frobenius distance %.6g (%s)\n", r.projection.distance,
                   r.projection.exact ? "exhaustive" : "agglomerative");
    } else if (*srv) {
      if (manifests.empty()) manifests = default_manifests();
      std::vector<LoadedRun> runs;
      for (const auto& m : manifests) runs.push_back(load_run(m));
      Service service(std::move(runs));
      if (!static_dir.empty() && !service.mount_static(static_dir))
        throw Error("cannot serve static files from " + static_dir.string());
      std::printf("listening on %s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      if (!service.listen(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    } else if (*ing) {
      const DataMatrix data = preprocess(load_csv(ing_in, untreated), knn);
      if (ing_out.empty()) {
        std::cout << data_csv(data);
      } else {
        write_text(ing_out, data_csv(data));
      }
      if (!qq_out.empty()) {
        std::string text = "theoretical,sample\n";
        for (const auto& p : mvn_qq_points(data)) text += format_number(p.theoretical) + "," + format_number(p.sample) + "\n";
        write_text(qq_out, text);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ddtrx: %s\n", e.what());
    return 1;
  }
  return 0;
}
