#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ssrec/cli.hpp"

namespace ssrec {
namespace {

namespace fs = std::filesystem;
const std::string kFixtures = SSREC_FIXTURES;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ssrec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // ingest, train and index the worked-example fixture into bundle/.
  void build_fixture() {
    ASSERT_EQ(run({"ingest", "--input", kFixtures + "/worked_example/interactions.jsonl", "--out", path("b")}).code, 0);
    ASSERT_EQ(run({"train", "--bundle", path("b")}).code, 0);
    ASSERT_EQ(run({"index", "build", "--bundle", path("b")}).code, 0);
  }

  fs::path dir_;
};

TEST_F(Cli, IngestDigestIsDeterministic) {
  const auto a = run({"ingest", "--input", kFixtures + "/worked_example/interactions.jsonl", "--out", path("a")});
  const auto b = run({"ingest", "--input", kFixtures + "/worked_example/interactions.jsonl", "--out", path("b")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out.substr(a.out.find("digest")), b.out.substr(b.out.find("digest")));
  EXPECT_NE(a.out.find("ingested 4 interactions"), std::string::npos);
}

TEST_F(Cli, DebugQueryPrintsThePseudoQuery) {
  build_fixture();
  const auto r = run({"index", "query", "--debug", "--index", path("b/index.bin"), "--item",
                      kFixtures + "/worked_example/item.json", "--stats", kFixtures + "/worked_example/stats.json", "-k", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("pseudo-query {0, sports, <0,1,0,0>, <1,0,2,2,0,1>, <1,0,1,0.9,0,0.7>}"), std::string::npos)
      << r.err;
  EXPECT_NE(r.out.find("1\t"), std::string::npos);
  EXPECT_NE(r.out.find("2\t"), std::string::npos);
}

TEST_F(Cli, EmptyUpdateReportsZeroAndKeepsTheSnapshot) {
  build_fixture();
  std::ofstream(path("empty.jsonl")).close();
  const auto before = cli::read_text(path("b/index.bin"));
  const auto r = run({"index", "update", "--index", path("b/index.bin"), "--batch", path("empty.jsonl"), "--models",
                      path("b/models.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0 profiles updated\n");
  EXPECT_EQ(cli::read_text(path("b/index.bin")), before);
}

TEST_F(Cli, UpdateThenVerify) {
  build_fixture();
  std::ofstream(path("batch.jsonl"))
      << R"({"ts": 9, "consumer": "carol", "item": "a9", "category": "sports", "producer": "Wrzzer", "entities": ["Messi"]})"
      << "\n";
  const auto r = run({"--json", "index", "update", "--index", path("b/index.bin"), "--batch", path("batch.jsonl"),
                      "--models", path("b/models.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["profiles_updated"], 1);
  EXPECT_EQ(j["new_users"], 1);
  const auto v = run({"index", "verify", "--index", path("b/index.bin")});
  EXPECT_EQ(v.code, 0) << v.err;
  EXPECT_EQ(v.out.rfind("ok: 3 users", 0), 0u) << v.out;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"bogus"}).code, 1);
  EXPECT_EQ(run({"ingest", "--input", path("missing.jsonl"), "--out", path("x")}).code, 2);
  std::ofstream(path("bad.jsonl")) << "{not json\n";
  EXPECT_EQ(run({"ingest", "--input", path("bad.jsonl"), "--out", path("x")}).code, 2);
  std::ofstream(path("junk.bin")) << "garbage";
  EXPECT_EQ(run({"index", "verify", "--index", path("junk.bin")}).code, 3);
  EXPECT_EQ(run({"--lambda-s", "2", "simulate", "--input", kFixtures + "/worked_example/interactions.jsonl"}).code, 1);
}

class CliSynthetic : public Cli {
 protected:
  void make_data() {
    ASSERT_EQ(run({"--seed", "3", "synth", "--out", path("s"), "--consumers", "30", "--producers", "8", "--steps", "15"})
                  .code,
              0);
  }
  std::vector<std::string> sim(std::vector<std::string> extra) {
    std::vector<std::string> a{"--json", "--states-override", "2", "simulate", "--input", path("s/interactions.jsonl"),
                               "--items", path("s/items.jsonl")};
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }
};

TEST_F(CliSynthetic, StatesOverrideFixesEveryModel) {
  make_data();
  ASSERT_EQ(run({"--states-override", "3", "train", "--input", path("s/interactions.jsonl"), "--out", path("m.json")}).code,
            0);
  const auto models = cli::load_models(path("m.json"));
  EXPECT_EQ(models.consumers.size(), 30u);
  for (const auto& [id, m] : models.consumers) EXPECT_EQ(m.space.n_consumer_states, 3u);
  for (const auto& [id, p] : models.producers.models) EXPECT_EQ(p.params.n_states, 3u);
}

TEST_F(CliSynthetic, SimulateIndexAndOracleAgree) {
  make_data();
  const auto a = run(sim({}));
  ASSERT_EQ(a.code, 0) << a.err;
  auto b_args = sim({});
  b_args.insert(b_args.begin(), "--oracle");
  const auto b = run(b_args);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(nlohmann::json::parse(a.out)["pooled"], nlohmann::json::parse(b.out)["pooled"]);
}

TEST_F(CliSynthetic, SimulateIsByteIdenticalAcrossRuns) {
  make_data();
  const auto a = run(sim({"--out", path("r1.json")}));
  const auto b = run(sim({"--out", path("r2.json")}));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(cli::read_text(path("r1.json")), cli::read_text(path("r2.json")));
}

TEST_F(CliSynthetic, SweepWritesOneRowPerValueAndK) {
  make_data();
  const auto r = run({"--states-override", "2", "--k", "5,10", "sweep", "--input", path("s/interactions.jsonl"),
                      "--param", "lambda", "--values", "0.3,0.6"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 1u + 2u * 2u) << r.out;
}

}  // namespace
}  // namespace ssrec
