#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "pathforge/app.hpp"
#include "support.hpp"

using namespace pathforge;
using pathforge::cli::read_jsonl;
using pathforge::testing::data_path;
using pathforge::testing::fixture_path;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "pathforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pathforge_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(CliTest, KgBuildAndStats) {
  auto r = run({"--mock", "kg", "build", "--a", data_path("graph_a.json"), "--b", data_path("graph_b.json"), "-o",
                path("kg.json"), "--alignment", path("align.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto align = nlohmann::json::parse(read_file(path("align.json")));
  ASSERT_EQ(align.size(), 4u);
  EXPECT_EQ(align[3]["a"], "a_nuclear_atypia");
  EXPECT_EQ(align[3]["b"], "b_atypical_nuclei");

  auto stats = run({"kg", "stats", path("kg.json")});
  ASSERT_EQ(stats.code, 0) << stats.err;
  auto j = nlohmann::json::parse(stats.out);
  EXPECT_EQ(j["total_nodes"], 22);
  EXPECT_EQ(j["total_edges"], 29);
  EXPECT_EQ(j["relation_count"], 12);

  // The unpruned graph keeps a node outside the main component.
  auto unpruned = run({"kg", "build", "--a", data_path("graph_a.json"), "--b", data_path("graph_b.json"), "--no-prune"});
  ASSERT_EQ(unpruned.code, 0) << unpruned.err;
  EXPECT_EQ(parse_graph(unpruned.out).nodes().size(), 23u);

  auto pruned = run({"kg", "prune", path("kg.json")});
  ASSERT_EQ(pruned.code, 0);
  EXPECT_EQ(pruned.out, read_file(path("kg.json")));
}

TEST_F(CliTest, AnchorThenPaths) {
  auto a = run({"anchor", "--graph", data_path("bronchus_graph.json"), "--extraction",
                data_path("bronchus_extraction.json"), "-o", path("anchors.jsonl")});
  ASSERT_EQ(a.code, 0) << a.err;
  auto anchors = read_jsonl(path("anchors.jsonl"));
  EXPECT_EQ(anchors.size(), 8u);
  for (const auto& x : anchors) EXPECT_FALSE(x["node_id"].is_null()) << x.dump();
  auto p = run({"paths", "--graph", data_path("bronchus_graph.json"), "--anchors", path("anchors.jsonl")});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_GT(count_lines(p.out), 0u);
  EXPECT_NE(p.out.find("squamous_cell_carcinoma"), std::string::npos);
}

TEST_F(CliTest, SynthFilterAugmentRewardPipeline) {
  ASSERT_EQ(run({"--mock", "kg", "build", "--a", data_path("graph_a.json"), "--b", data_path("graph_b.json"), "-o",
                 path("kg.json")})
                .code,
            0);
  auto s = run({"--mock", "--jobs", "3", "synth", "--graph", path("kg.json"), "--cases", data_path("cases.jsonl"),
                "-o", path("triplets.jsonl")});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(read_jsonl(path("triplets.jsonl")).size(), 5u);
  EXPECT_NE(s.err.find("synth: skipping case TCGA-LUAD-0006"), std::string::npos);

  auto f = run({"--mock", "filter", "--in", path("triplets.jsonl"), "-o", path("kept.jsonl"), "--dropped",
                path("dropped.jsonl"), "--verdicts", path("verdicts.jsonl")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(read_jsonl(path("kept.jsonl")).size(), 4u);
  EXPECT_EQ(read_jsonl(path("verdicts.jsonl")).size(), 5u);
  auto dropped = read_jsonl(path("dropped.jsonl"));
  ASSERT_EQ(dropped.size(), 1u);
  EXPECT_EQ(dropped[0]["verdict"]["reasons"], nlohmann::json::array({"visual_dependency"}));

  auto g = run({"augment", "--in", path("kept.jsonl"), "-o", path("sft.jsonl")});
  ASSERT_EQ(g.code, 0) << g.err;
  std::size_t want = 0;
  for (const auto& t : read_jsonl(path("kept.jsonl"))) want += segment_chain(t["chain"].get<std::string>()).L();
  EXPECT_EQ(read_jsonl(path("sft.jsonl")).size(), want);

  std::string preds;
  for (const auto& t : read_jsonl(path("kept.jsonl")))
    preds += nlohmann::json{{"response", "<observe>" + t["question"].get<std::string>() + "</observe><think>" +
                                             t["chain"].get<std::string>() + "</think><answer>" +
                                             t["answer"].get<std::string>() + "</answer>"}}
                 .dump() +
             "\n";
  write_file(path("pred.jsonl"), preds);
  auto rw = run({"--mock", "reward", "--reextract", "--pred", path("pred.jsonl"), "--gt", path("kept.jsonl"),
                 "--graph", path("kg.json")});
  ASSERT_EQ(rw.code, 0) << rw.err;
  std::istringstream rows(rw.out);
  std::size_t n = 0;
  for (std::string line; std::getline(rows, line); ++n) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["format"], 1);
    EXPECT_DOUBLE_EQ(j["semantic"].get<double>(), 1.0);
    // Response and reference carry the same chain, so the entity sets coincide.
    EXPECT_NEAR(j["entity"].get<double>(), 1.0, 1e-8);
  }
  EXPECT_EQ(n, 4u);

  auto mismatch = run({"--mock", "reward", "--pred", path("pred.jsonl"), "--gt", path("triplets.jsonl"), "--graph",
                       path("kg.json")});
  EXPECT_EQ(mismatch.code, 1);
}

TEST_F(CliTest, GrpoDemoMatchesGoldenTrajectory) {
  auto r = run({"--seed", "7", "grpo-demo", "--iters", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read_file(fixture_path("grpo_seed7.csv")));
  auto other = run({"--seed", "8", "grpo-demo", "--iters", "200"});
  EXPECT_NE(other.out, r.out);
}

TEST_F(CliTest, EvalWritesReportsAndSummary) {
  write_file(path("pairs.jsonl"),
             R"({"prediction":"squamous cell carcinoma","reference":"squamous cell carcinoma"})"
             "\n"
             R"({"prediction":"adenocarcinoma","reference":"squamous cell carcinoma"})"
             "\n");
  auto r = run({"--mock", "eval", "--in", path("pairs.jsonl"), "--summary", path("summary.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 2u);
  auto s = nlohmann::json::parse(read_file(path("summary.json")));
  EXPECT_EQ(s["count"], 2);
}

TEST_F(CliTest, ExitCodes) {
  auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("error [UnknownCommand]"), std::string::npos);

  auto missing = run({"kg", "stats", path("absent.json")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("IoFailure"), std::string::npos);

  write_file(path("bad.json"), R"({"alignment_treshold": 0.9})");
  auto bad = run({"--config", path("bad.json"), "kg", "stats", data_path("graph_a.json")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("alignment_treshold"), std::string::npos);

  write_file(path("pairs.jsonl"), R"({"prediction":"a","reference":"b"})" "\n");
  auto no_endpoint = run({"eval", "--in", path("pairs.jsonl")});
  EXPECT_EQ(no_endpoint.code, 1);
  EXPECT_NE(no_endpoint.err.find("endpoint is required without --mock"), std::string::npos);

  write_file(path("live.json"),
             R"({"services": {"judge": {"endpoint": "http://127.0.0.1:1/v1", "model": "m", "timeout_ms": 300}}})");
  auto down = run({"--config", path("live.json"), "eval", "--in", path("pairs.jsonl")});
  EXPECT_EQ(down.code, 2) << down.err;
}
