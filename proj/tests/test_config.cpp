#include <gtest/gtest.h>

#include "pathforge/config.hpp"

using namespace pathforge;

namespace {

std::string bad_config_message(std::string_view text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadConfig);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(Config, Defaults) {
  auto c = parse_config("{}");
  EXPECT_DOUBLE_EQ(c.alignment_threshold, 0.85);
  EXPECT_DOUBLE_EQ(c.alpha, 1.0);
  EXPECT_DOUBLE_EQ(c.beta, 0.5);
  EXPECT_DOUBLE_EQ(c.epsilon, 1e-8);
  EXPECT_EQ(c.grpo.group_size, 8u);
  EXPECT_DOUBLE_EQ(c.grpo.clip_eps, 0.2);
  EXPECT_DOUBLE_EQ(c.grpo.kl_coef, 0.03);
  EXPECT_DOUBLE_EQ(c.max_cost, 6.0);
  EXPECT_DOUBLE_EQ(c.path_priority.at("hasSupportEvidence"), 0.5);
  EXPECT_DOUBLE_EQ(c.path_priority.at("hasContradictEvidence"), 0.5);
  EXPECT_FALSE(c.mock);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.jobs, 1u);
}

TEST(Config, FullDocument) {
  auto c = parse_config(R"({
    "graphs": ["a.json", "b.json"],
    "alignment_threshold": 0.9,
    "anchor_threshold": 0.8,
    "path_priority": {"siteOf": 0.25},
    "max_cost": 4,
    "reward": {"alpha": 0.5, "beta": 0.25, "epsilon": 1e-6},
    "grpo": {"group_size": 4, "clip_eps": 0.1, "kl_coef": 0.0, "sigma_tol": 1e-9, "learning_rate": 0.05},
    "services": {"judge": {"endpoint": "http://127.0.0.1:9/v1", "model": "m", "timeout_ms": 500, "max_inflight": 2}},
    "mock": true,
    "seed": 42,
    "jobs": 3
  })");
  EXPECT_EQ(c.graphs.size(), 2u);
  EXPECT_EQ(c.path_priority.size(), 1u);
  EXPECT_DOUBLE_EQ(c.path_options().max_cost, 4.0);
  EXPECT_DOUBLE_EQ(c.reward_params().entity.beta, 0.25);
  EXPECT_DOUBLE_EQ(c.reward_params().anchor_threshold, 0.8);
  EXPECT_EQ(c.grpo.group_size, 4u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.05);
  auto cc = c.client_config(Role::Judge);
  EXPECT_EQ(cc.endpoint, "http://127.0.0.1:9/v1");
  EXPECT_EQ(cc.timeout, std::chrono::milliseconds(500));
  EXPECT_EQ(cc.max_inflight, 2);
  EXPECT_TRUE(c.mock);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.jobs, 3u);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(bad_config_message(R"({"alignment_treshold": 0.9})").find("alignment_treshold"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"reward": {"gamma": 1}})").find("reward.gamma"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"services": {"judge": {"url": "x"}}})").find("services.judge.url"),
            std::string::npos);
  EXPECT_NE(bad_config_message(R"({"alignment_threshold": 1.5})").find("alignment_threshold"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"reward": {"beta": 2}})").find("reward.beta"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"grpo": {"group_size": 1}})").find("grpo.group_size"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"max_cost": "far"})").find("max_cost"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"jobs": 0})").find("jobs"), std::string::npos);
  EXPECT_NE(bad_config_message(R"({"path_priority": {"siteOf": -1}})").find("path_priority.siteOf"),
            std::string::npos);
  EXPECT_NE(bad_config_message(R"({"services": {"generator": {"max_inflight": 0}}})").find("max_inflight"),
            std::string::npos);
  bad_config_message("[1, 2]");
  bad_config_message("{not json");
  bad_config_message(R"({"reward": 3})");
}

TEST(Config, LoadMissingFile) {
  try {
    load_config("/nonexistent/pathforge.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoFailure);
  }
}
