#pragma once

#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>

#include "ddtrx/pipeline.hpp"

namespace ddtrx {

/// Manifests under `root`: every <root>/<dir>/manifest.json.
inline std::vector<fs::path> discover_manifests(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) out.push_back(entry.path() / "manifest.json");
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<fs::path> default_manifests() {
  const char* dir = std::getenv("DDTRX_DATA_DIR");
  return dir ? discover_manifests(dir) : std::vector<fs::path>{};
}

/// Read-only JSON API over loaded runs. Every answer is computed by the same
/// functions cmd_summarize uses.
class Service {
 public:
  explicit Service(std::vector<LoadedRun> runs) {
    if (runs.empty()) throw DomainError("service needs at least one manifest");
    for (auto& r : runs) {
      const std::string id = r.id;
      if (!runs_.emplace(id, std::make_shared<const LoadedRun>(std::move(r))).second)
        throw DomainError("duplicate dataset id '" + id + "'");
    }
    routes();
  }

  httplib::Server& server() { return server_; }

  // Serves files under `dir` at "/" alongside the API.
  bool mount_static(const fs::path& dir) { return server_.set_mount_point("/", dir.string()); }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, json{{"error", message}});
  }

  std::shared_ptr<const LoadedRun> find(const httplib::Request& req, httplib::Response& res) const {
    const auto it = runs_.find(req.matches[1].str());
    if (it == runs_.end()) {
      error(res, 404, "unknown dataset '" + req.matches[1].str() + "'");
      return nullptr;
    }
    return it->second;
  }

  void routes() {
    server_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, json{{"status", "ok"}});
    });
    server_.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& [id, run] : runs_) out.push_back({{"id", id}, {"treatments", run->labels}, {"L", run->trees.size()}});
      reply(res, 200, out);
    });
    server_.Get(R"(/api/datasets/([^/]+)/map-tree)", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto run = find(req, res)) {
        json m = map_summary(run->trees);
        reply(res, 200, json{{"newick", m["newick"]}, {"log_score", m["log_score"]}});
      }
    });
    server_.Get(R"(/api/datasets/([^/]+)/pairwise-ipcp)", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto run = find(req, res)) reply(res, 200, pairwise_summary(*run));
    });
    server_.Post(R"(/api/datasets/([^/]+)/ipcp)", [this](const httplib::Request& req, httplib::Response& res) {
      auto run = find(req, res);
      if (!run) return;
      std::vector<std::string> subset;
      try {
        const json body = json::parse(req.body);
        subset = body.at("subset").get<std::vector<std::string>>();
      } catch (const std::exception&) {
        return error(res, 400, "body must be {\"subset\": [labels...]}");
      }
      std::sort(subset.begin(), subset.end());
      subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
      if (subset.size() < 2) return error(res, 400, "subset needs at least two distinct labels");
      for (const auto& label : subset)
        if (std::find(run->labels.begin(), run->labels.end(), label) == run->labels.end())
          return error(res, 404, "unknown label '" + label + "'");
      const json s = subset_summary(run->trees, subset);
      reply(res, 200, json{{"ipcp", s["ipcp"]}, {"pcp", s["pcp"]}});
    });
  }

  std::map<std::string, std::shared_ptr<const LoadedRun>> runs_;
  httplib::Server server_;
};

}  // namespace ddtrx
