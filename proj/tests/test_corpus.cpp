#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pathforge/corpus.hpp"
#include "support.hpp"

using namespace pathforge;
using pathforge::testing::fixture_path;

namespace {

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pathforge_corpus_" + name)).string();
}

ReasoningChain random_chain(std::mt19937_64& rng, std::size_t L) {
  ReasoningChain c;
  for (std::size_t i = 0; i < L; ++i) c.steps.push_back("Step " + std::to_string(i) + " token" + std::to_string(rng() % 97) + ".");
  c.answer = "Answer " + std::to_string(rng() % 13) + ".";
  return c;
}

}  // namespace

TEST(Segment, BronchusChainWithMarkers) {
  auto c = segment_chain(read_file(fixture_path("bronchus_chain.txt")));
  ASSERT_EQ(c.L(), 5u);
  EXPECT_EQ(c.steps[1],
            "A defining pathological event is observed here: the Basement Membrane serves as the direct site of "
            "Invasion by neoplastic cells.");
  EXPECT_EQ(c.steps[3], "For differential diagnosis, we distinguish this phenotype from Adenocarcinoma.");
  EXPECT_EQ(c.answer, "Therefore, the final diagnosis answer is squamous cell carcinoma.");
}

TEST(Segment, BracedAndStepMarkers) {
  auto c = segment_chain("First thing ($s_{1}$) second thing ($s_{2}$) so it is X ($a$)");
  EXPECT_EQ(c.steps, (std::vector<std::string>{"First thing", "second thing"}));
  EXPECT_EQ(c.answer, "so it is X");
  auto d = segment_chain("[Step 1: look] Cells are round. [Step 2: reason] Round cells suggest Y. Conclusion: Y.");
  ASSERT_EQ(d.L(), 1u);
  EXPECT_EQ(d.steps[0], "Cells are round.");
  EXPECT_EQ(d.answer, "Round cells suggest Y. Conclusion: Y.");
}

TEST(Segment, SentenceFallback) {
  auto one = segment_chain("It is benign.");
  EXPECT_EQ(one.L(), 1u);
  EXPECT_EQ(one.answer, "It is benign.");
  auto two = segment_chain("Cells are small. They are blue.");
  EXPECT_EQ(two.steps, (std::vector<std::string>{"Cells are small."}));
  EXPECT_EQ(two.answer, "They are blue.");
  auto cue = segment_chain("The final diagnosis is X. A note follows. Another note.");
  EXPECT_EQ(cue.answer, "The final diagnosis is X.");
  EXPECT_EQ(cue.L(), 2u);
}

TEST(Segment, AbbreviationGuard) {
  auto c = segment_chain("Markers e.g. Keratin are present. Compare vs. Adenocarcinoma here. Final diagnosis: SCC.");
  ASSERT_EQ(c.L(), 2u);
  EXPECT_EQ(c.steps[0], "Markers e.g. Keratin are present.");
  EXPECT_EQ(c.steps[1], "Compare vs. Adenocarcinoma here.");
  auto unguarded = segment_chain("Markers e.g. Keratin are present. Final diagnosis: SCC.", {});
  EXPECT_EQ(unguarded.L(), 2u);
}

TEST(Segment, EmptyChain) {
  EXPECT_EQ(error_kind_of([] { segment_chain("   "); }), ErrorKind::EmptyChain);
  EXPECT_EQ(error_kind_of([] { segment_chain("($s_1$) ($a$)"); }), ErrorKind::EmptyChain);
  EXPECT_EQ(error_kind_of([] { augment_trajectories(ReasoningChain{}, "c", "q"); }), ErrorKind::EmptyChain);
}

TEST(Augment, OneSamplePerTruncationPoint) {
  ReasoningChain c{{"s1", "s2", "s3"}, "a"};
  auto s = augment_trajectories(c, "case", "q");
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s[i].m, i + 1);
    EXPECT_EQ(s[i].context.size(), i);
    EXPECT_EQ(s[i].target_answer, "a");
  }
  auto single = augment_trajectories(ReasoningChain{{"only"}, "a"}, "case", "q");
  ASSERT_EQ(single.size(), 1u);
  EXPECT_TRUE(single[0].context.empty());
  EXPECT_EQ(single[0].target_steps, (std::vector<std::string>{"only"}));
}

TEST(Augment, CountAndReconstructionOnRandomChains) {
  std::mt19937_64 rng(7);
  std::size_t total = 0, expected = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto L = 1 + rng() % 12;
    auto c = random_chain(rng, L);
    auto samples = augment_trajectories(c, "c" + std::to_string(trial), "q");
    EXPECT_EQ(samples.size(), L);
    expected += L;
    total += samples.size();
    for (const auto& s : samples) {
      EXPECT_EQ(reconstruct(s), join_steps(c.steps));
      EXPECT_EQ(s.context.size(), s.m - 1);
      EXPECT_EQ(s.target_steps.size(), L - s.m + 1);
    }
  }
  EXPECT_EQ(total, expected);
}

TEST(Augment, BronchusSamplesMatchTruncations) {
  auto c = segment_chain(read_file(fixture_path("bronchus_chain.txt")));
  auto s = augment_trajectories(c, "bronchus", "What is the most likely diagnosis?");
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[1].m, 2u);
  ASSERT_EQ(s[1].context.size(), 1u);
  EXPECT_EQ(s[1].context[0].rfind("Histologically, the lesion is localized within the Main Bronchus", 0), 0u);
  EXPECT_EQ(s[1].target_steps[0].rfind("A defining pathological event is observed here", 0), 0u);
  EXPECT_EQ(s[3].context.back(),
            "This breach is clinically significant because such invasion is a key feature characteristic of Squamous "
            "Cell Carcinoma.");
  EXPECT_EQ(s[3].target_steps.front(), "For differential diagnosis, we distinguish this phenotype from Adenocarcinoma.");
  EXPECT_EQ(s[4].target_steps.size(), 1u);
  EXPECT_EQ(s[4].target_steps[0].rfind("The logic relies on morphological patterns", 0), 0u);
  EXPECT_EQ(s[4].target_answer, "Therefore, the final diagnosis answer is squamous cell carcinoma.");
}

TEST(Augment, SamplingIsSeededAndSorted) {
  ReasoningChain c{{"a", "b", "c", "d", "e", "f"}, "z"};
  auto x = sample_trajectories(c, "r", "q", 3, 11);
  auto y = sample_trajectories(c, "r", "q", 3, 11);
  EXPECT_EQ(x, y);
  ASSERT_FALSE(x.empty());
  EXPECT_LE(x.size(), 3u);
  for (std::size_t i = 1; i < x.size(); ++i) EXPECT_LT(x[i - 1].m, x[i].m);
  EXPECT_TRUE(sample_trajectories(c, "r", "q", 0, 11).empty());
}

TEST(CorpusIo, EmitLoadRoundTrip) {
  std::vector<SftSample> all;
  std::mt19937_64 rng(3);
  for (std::size_t L : {2, 3, 5}) {
    auto s = augment_trajectories(random_chain(rng, L), "case\"" + std::to_string(L), "q?");
    all.insert(all.end(), s.begin(), s.end());
  }
  ASSERT_EQ(all.size(), 10u);
  auto path = temp_file("roundtrip.jsonl");
  EXPECT_EQ(emit_corpus(all, path), 10u);
  EXPECT_EQ(load_corpus(path), all);
  std::filesystem::remove(path);
}

TEST(CorpusIo, Errors) {
  EXPECT_EQ(error_kind_of([] { load_corpus("/nonexistent/dir/x.jsonl"); }), ErrorKind::IoFailure);
  EXPECT_EQ(error_kind_of([] { emit_corpus({}, "/nonexistent/dir/x.jsonl"); }), ErrorKind::IoFailure);
  auto path = temp_file("bad.jsonl");
  {
    std::ofstream(path) << "{not json\n";
  }
  EXPECT_EQ(error_kind_of([&] { load_corpus(path); }), ErrorKind::MalformedRecord);
  {
    std::ofstream(path) << R"({"case_ref":"c","question":"q","context":[],"target_steps":["a"],"target_answer":"x","m":2,"L":1})"
                        << "\n";
  }
  EXPECT_EQ(error_kind_of([&] { load_corpus(path); }), ErrorKind::MalformedRecord);
  std::filesystem::remove(path);
}
