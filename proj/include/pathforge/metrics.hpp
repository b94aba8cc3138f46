#pragma once

// Answer and reasoning quality metrics: BLEU, ROUGE-1/2/L, embedding F1 and
// LLM-judge scores.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/services.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngram_counts(const Tokens& t, std::size_t n) {
  NgramCounts c;
  if (n == 0 || t.size() < n) return c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++c[Tokens(t.begin() + i, t.begin() + i + n)];
  return c;
}

inline std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, n] : cand)
    if (auto it = ref.find(g); it != ref.end()) m += std::min(n, it->second);
  return m;
}

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Geometric mean of modified n-gram precisions up to min(4, |cand|, |ref|),
/// times the brevity penalty. Zero unigram overlap scores 0; zero counts at
/// higher orders get add-one smoothing.
inline double bleu(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::size_t N = std::min<std::size_t>({4, cand.size(), ref.size()});
  double log_sum = 0;
  for (std::size_t n = 1; n <= N; ++n) {
    auto c = ngram_counts(cand, n);
    double total = static_cast<double>(cand.size() - n + 1);
    double match = static_cast<double>(clipped_overlap(c, ngram_counts(ref, n)));
    if (match == 0) {
      if (n == 1) return 0.0;
      log_sum += std::log(1.0 / (total + 1.0));
    } else {
      log_sum += std::log(match / total);
    }
  }
  double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(N));
}

/// F1 on clipped n-gram overlap. When neither side has an n-gram of this
/// order the score is 1 for equal token lists and 0 otherwise.
inline double rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
  auto c = ngram_counts(cand, n), r = ngram_counts(ref, n);
  if (c.empty() && r.empty()) return cand == ref ? 1.0 : 0.0;
  if (c.empty() || r.empty()) return 0.0;
  double m = static_cast<double>(clipped_overlap(c, r));
  return f1(m / static_cast<double>(cand.size() - n + 1), m / static_cast<double>(ref.size() - n + 1));
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return cand == ref ? 1.0 : 0.0;
  double l = static_cast<double>(lcs_length(cand, ref));
  return f1(l / static_cast<double>(cand.size()), l / static_cast<double>(ref.size()));
}

struct LexicalScores {
  double bleu = 0, rouge1 = 0, rouge2 = 0, rougeL = 0;
};

inline LexicalScores lexical_metrics(std::string_view candidate, std::string_view reference) {
  auto ref = text::tokenize(reference);
  if (ref.empty()) throw Error(ErrorKind::EmptyReference, "reference has no tokens");
  auto cand = text::tokenize(candidate);
  return {bleu(cand, ref), rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), rouge_l(cand, ref)};
}

/// Greedy token matching: precision averages each candidate token's best
/// clamped cosine against the reference, recall the reverse.
inline double embedding_f1(std::string_view candidate, std::string_view reference, const EmbeddingProvider& embedder) {
  auto ct = text::tokenize(candidate), rt = text::tokenize(reference);
  if (rt.empty()) throw Error(ErrorKind::EmptyReference, "reference has no tokens");
  if (ct.empty()) throw Error(ErrorKind::InvalidArgument, "candidate has no tokens");
  std::vector<Vector> ce, re;
  for (const auto& t : ct) ce.push_back(embed_checked(embedder, t));
  for (const auto& t : rt) re.push_back(embed_checked(embedder, t));
  std::vector<double> best_c(ce.size(), 0.0), best_r(re.size(), 0.0);
  for (std::size_t i = 0; i < ce.size(); ++i)
    for (std::size_t j = 0; j < re.size(); ++j) {
      double s = clamped_similarity(ce[i], re[j]);
      best_c[i] = std::max(best_c[i], s);
      best_r[j] = std::max(best_r[j], s);
    }
  double p = 0, r = 0;
  for (double x : best_c) p += x;
  for (double x : best_r) r += x;
  return std::clamp(f1(p / static_cast<double>(ce.size()), r / static_cast<double>(re.size())), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Judge scores

enum class JudgeKind { AnswerScore, AScore, QScore };

inline std::optional<JudgeKind> parse_judge_kind(std::string_view s) {
  auto n = text::lower(s);
  if (n == "answer" || n == "answerscore" || n == "llm") return JudgeKind::AnswerScore;
  if (n == "a" || n == "ascore") return JudgeKind::AScore;
  if (n == "q" || n == "qscore") return JudgeKind::QScore;
  return std::nullopt;
}

inline constexpr std::string_view kQScorePrompt =
    "You are an expert in computational pathology with extensive experience in histopathological analysis. Please "
    "evaluate the following AI-generated interpretation of a pathology image based on the quality of its reasoning "
    "process.\n"
    "\n"
    "Assessment Criteria:\n"
    "- 1. Logical Clarity: Is the argument presented in a clear, stepwise manner? Are conclusions supported by prior "
    "statements without gaps or contradictions?\n"
    "- 2. Evidence Alignment: Does the reasoning explicitly connect each claim to observable morphological features "
    "(e.g., nuclear size, chromatin pattern, architecture)?\n"
    "- 3. Professional Rigor: Are pathological terms used precisely? Does the reasoning reflect sound principles and "
    "avoid speculative interpretations?\n"
    "- 4. Explainability: Would a practicing pathologist find the reasoning transparent? Does it articulate how "
    "visual findings lead to conclusions?\n"
    "- 5. Comprehensiveness: Does it address relevant diagnostic features and acknowledge key differential "
    "considerations or limitations?\n"
    "\n"
    "Scoring Scale (for each dimension and overall):\n"
    "5 = Excellent 4 = Good 3 = Fair 2 = Poor 1 = Very poor\n"
    "\n"
    "AI-generated reasoning to evaluate: {model_reasoning}";

inline constexpr std::string_view kAScorePrompt =
    "You are a senior pathologist with extensive experience in diagnostic reasoning. Below are two pieces of text:\n"
    "- Reference Reasoning: The gold-standard explanation provided by an expert pathologist.\n"
    "- Model Reasoning: The reasoning generated by an AI system analyzing the same pathology image.\n"
    "\n"
    "Task: Your task is to score the Model Reasoning on a scale of 1 to 5 based on its factual and logical alignment "
    "with the Reference Reasoning. Focus on whether the model captures the same key observations, interpretive "
    "steps, and diagnostic logic.\n"
    "\n"
    "Scoring Criteria:\n"
    "5: Nearly identical. Captures all critical findings and implications correctly in a similar reasoning flow.\n"
    "4: Strong alignment. Minor omissions or rephrasing, but no meaningful deviation in logic or facts.\n"
    "3: Partial alignment. Includes some correct elements but misses/misrepresents key diagnostic features.\n"
    "2: Weak alignment. Mentions related concepts but diverges significantly or omits essential evidence.\n"
    "1: Minimal/No alignment. Contains hallucinations, contradictions, or fails to reflect expert reasoning.\n"
    "\n"
    "Reference Reasoning: {reference_reasoning}\n"
    "Model Reasoning: {model_reasoning}\n"
    "\n"
    "Respond ONLY with a single integer from 1 to 5.";

inline std::string build_judge_prompt(std::string_view pred, std::string_view ref, JudgeKind kind) {
  switch (kind) {
    case JudgeKind::AnswerScore:
      return build_answer_score_prompt(pred, ref);
    case JudgeKind::AScore:
      return fill_slot(fill_slot(kAScorePrompt, "reference_reasoning", ref), "model_reasoning", pred);
    case JudgeKind::QScore:
      return fill_slot(kQScorePrompt, "model_reasoning", pred);
  }
  return {};
}

inline int judge_eval(std::string_view pred, std::string_view ref, JudgeKind kind, LlmClient& judge) {
  return parse_judge_score(ask_judge(judge, build_judge_prompt(pred, ref, kind)));
}

/// Mock Q-score: 1 for empty reasoning, else 1 + the number of sentences
/// with at least three tokens, capped at 5.
inline int mock_quality_score(std::string_view reasoning) {
  int n = 0;
  std::string cur;
  auto flush = [&] {
    if (text::tokenize(cur).size() >= 3) ++n;
    cur.clear();
  };
  for (char c : reasoning) {
    if (c == '.' || c == '!' || c == '?' || c == '\n')
      flush();
    else
      cur += c;
  }
  flush();
  return std::min(5, 1 + n);
}

inline std::optional<std::string> mock_metric_rule(std::string_view prompt) {
  if (prompt.find("factual and logical alignment with the Reference Reasoning") != std::string_view::npos) {
    auto ref = slot_between(prompt, "\nReference Reasoning: ", "\nModel Reasoning: ");
    auto pred = slot_between(prompt, "\nModel Reasoning: ", "\n\nRespond ONLY with a single integer from 1 to 5.");
    if (!ref || !pred) return std::nullopt;
    return std::to_string(mock_alignment_score(*pred, *ref));
  }
  if (prompt.find("based on the quality of its reasoning process") != std::string_view::npos) {
    auto pred = slot_between(prompt, "\nAI-generated reasoning to evaluate: ", "");
    if (!pred) return std::nullopt;
    return std::to_string(mock_quality_score(*pred));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  double bleu = 0, rouge1 = 0, rouge2 = 0, rougeL = 0, embed_f1 = 0;
  double llm_score = 1, a_score = 1, q_score = 1;
};

struct EvalPair {
  std::string prediction;  // predicted answer
  std::string reference;   // reference answer
  std::string prediction_reasoning;
  std::string reference_reasoning;
};

inline EvalPair eval_pair_from_json(const nlohmann::json& j) {
  try {
    EvalPair p;
    p.prediction = j.at("prediction").get<std::string>();
    p.reference = j.at("reference").get<std::string>();
    p.prediction_reasoning = j.value("prediction_reasoning", p.prediction);
    p.reference_reasoning = j.value("reference_reasoning", p.reference);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

inline MetricReport evaluate_pair(const EvalPair& p, const EmbeddingProvider& embedder, LlmClient& judge) {
  MetricReport m;
  auto lex = lexical_metrics(p.prediction, p.reference);
  m.bleu = lex.bleu;
  m.rouge1 = lex.rouge1;
  m.rouge2 = lex.rouge2;
  m.rougeL = lex.rougeL;
  m.embed_f1 = text::tokenize(p.prediction).empty() ? 0.0 : embedding_f1(p.prediction, p.reference, embedder);
  m.llm_score = judge_eval(p.prediction, p.reference, JudgeKind::AnswerScore, judge);
  m.a_score = judge_eval(p.prediction_reasoning, p.reference_reasoning, JudgeKind::AScore, judge);
  m.q_score = judge_eval(p.prediction_reasoning, p.reference_reasoning, JudgeKind::QScore, judge);
  return m;
}

inline nlohmann::json to_json(const MetricReport& m) {
  return {{"bleu", m.bleu},       {"rouge1", m.rouge1},       {"rouge2", m.rouge2},   {"rougeL", m.rougeL},
          {"embed_f1", m.embed_f1}, {"llm_score", m.llm_score}, {"a_score", m.a_score}, {"q_score", m.q_score}};
}

/// Field-wise means plus the record count.
inline nlohmann::json summarize(const std::vector<MetricReport>& reports) {
  MetricReport s{0, 0, 0, 0, 0, 0, 0, 0};
  for (const auto& r : reports) {
    s.bleu += r.bleu;
    s.rouge1 += r.rouge1;
    s.rouge2 += r.rouge2;
    s.rougeL += r.rougeL;
    s.embed_f1 += r.embed_f1;
    s.llm_score += r.llm_score;
    s.a_score += r.a_score;
    s.q_score += r.q_score;
  }
  double n = reports.empty() ? 1.0 : static_cast<double>(reports.size());
  auto j = to_json(MetricReport{s.bleu / n, s.rouge1 / n, s.rouge2 / n, s.rougeL / n, s.embed_f1 / n,
                                s.llm_score / n, s.a_score / n, s.q_score / n});
  j["count"] = reports.size();
  return j;
}

}  // namespace pathforge
