#pragma once

// Offline clients for each role, wired to the module rule sets.

#include <memory>

#include "pathforge/metrics.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/services.hpp"
#include "pathforge/synthesis.hpp"

namespace pathforge {

inline std::unique_ptr<MockLlmClient> make_mock_judge(int max_inflight = 4) {
  auto c = std::make_unique<MockLlmClient>(Role::Judge, max_inflight);
  c->add_rule(mock_answer_score_rule);
  c->add_rule(mock_filter_rule);
  c->add_rule(mock_metric_rule);
  return c;
}

inline std::unique_ptr<MockLlmClient> make_mock_generator(int max_inflight = 4) {
  auto c = std::make_unique<MockLlmClient>(Role::Generator, max_inflight);
  c->add_rule(mock_generation_rule);
  return c;
}

/// Extraction replies come only from fixtures keyed by prompt.
inline std::unique_ptr<MockLlmClient> make_mock_extractor(int max_inflight = 4) {
  return std::make_unique<MockLlmClient>(Role::Extractor, max_inflight);
}

}  // namespace pathforge
