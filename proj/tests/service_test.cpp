#include <gtest/gtest.h>

#include <thread>

#include "ddtrx/ddtrx.hpp"
#include "ddtrx/service.hpp"
#include "fixtures.hpp"

using namespace ddtrx;

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new fixture::TempDir("service");
    const fs::path csv = tmp_->path / "obs.csv";
    write_text(csv, fixture::response_csv(6, 5, 3));
    auto cfg = fixture::small_config(tmp_->path / "demo");
    cmd_infer(csv, cfg);
    auto single = fixture::small_config(tmp_->path / "single");
    single.chains = 1;
    single.chain = {2, 1, 1};
    cmd_infer(csv, single);
  }
  static void TearDownTestSuite() { delete tmp_; }

  void SetUp() override {
    std::vector<LoadedRun> runs;
    for (const auto& m : discover_manifests(tmp_->path)) runs.push_back(load_run(m));
    service_ = std::make_unique<Service>(std::move(runs));
    port_ = service_->bind_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { service_->listen_after_bind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  json get(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << path;
    return json::parse(res->body);
  }
  json post(const std::string& path, const std::string& body, int expect = 200) {
    auto res = client_->Post(path, body, "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, expect) << path << " " << body;
    return json::parse(res->body);
  }

  static fixture::TempDir* tmp_;
  std::unique_ptr<Service> service_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

fixture::TempDir* ServiceTest::tmp_ = nullptr;

TEST_F(ServiceTest, HealthAndDatasets) {
  EXPECT_EQ(get("/api/health")["status"], "ok");
  const json ds = get("/api/datasets");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0]["id"], "demo");
  EXPECT_EQ(ds[0]["L"], 400);
  EXPECT_EQ(ds[0]["treatments"].size(), 6u);
  EXPECT_EQ(ds[1]["L"], 1);
}

TEST_F(ServiceTest, AnswersMatchSummarize) {
  const LoadedRun run = load_run(tmp_->path / "demo");
  const std::vector<std::string> subset{run.labels[0], run.labels[2], run.labels[4]};
  const json cli = cmd_summarize(run, subset);
  const json api = post("/api/datasets/demo/ipcp", json{{"subset", subset}}.dump());
  EXPECT_EQ(api["ipcp"], cli["query"]["ipcp"]);
  EXPECT_EQ(api["pcp"], cli["query"]["pcp"]);
  const json map = get("/api/datasets/demo/map-tree");
  EXPECT_EQ(map["newick"], cli["map_tree"]["newick"]);
  EXPECT_EQ(map["log_score"], cli["map_tree"]["log_score"]);
  const json pw = get("/api/datasets/demo/pairwise-ipcp");
  EXPECT_EQ(pw, pairwise_summary(run));
}

TEST_F(ServiceTest, SingleSampleRunReturnsMrcaTime) {
  const LoadedRun run = load_run(tmp_->path / "single");
  const std::vector<std::string> pair{run.labels[0], run.labels[1]};
  const json api = post("/api/datasets/single/ipcp", json{{"subset", pair}}.dump());
  EXPECT_EQ(api["ipcp"].get<double>(), mrca_time(run.trees.trees[0], pair));
  EXPECT_EQ(api["pcp"].size(), 2u);
}

TEST_F(ServiceTest, Errors) {
  const LoadedRun run = load_run(tmp_->path / "demo");
  post("/api/datasets/demo/ipcp", json{{"subset", {run.labels[0]}}}.dump(), 400);
  post("/api/datasets/demo/ipcp", json{{"subset", {run.labels[0], run.labels[0]}}}.dump(), 400);
  post("/api/datasets/demo/ipcp", "not json", 400);
  post("/api/datasets/demo/ipcp", json{{"subset", {run.labels[0], "nope"}}}.dump(), 404);
  post("/api/datasets/missing/ipcp", json{{"subset", {"a", "b"}}}.dump(), 404);
  get("/api/datasets/missing/map-tree", 404);
}
