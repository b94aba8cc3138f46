#pragma once

// Knowledge-aware multi-granular reward:
//   total = format + semantic + alpha * entity

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/kg.hpp"
#include "pathforge/reasoning.hpp"
#include "pathforge/services.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

// ---------------------------------------------------------------------------
// Structured responses

struct StructuredResponse {
  std::string observe;
  std::string think;
  std::string answer;
  bool well_formed = false;

  friend bool operator==(const StructuredResponse&, const StructuredResponse&) = default;
};

namespace detail {

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

struct TagBlock {
  std::size_t open = std::string_view::npos;
  std::size_t close = std::string_view::npos;
  std::string content;
  bool found = false;
};

inline TagBlock first_block(std::string_view text, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::string close = "</" + std::string(name) + ">";
  TagBlock b;
  b.open = text.find(open);
  if (b.open == std::string_view::npos) return b;
  b.close = text.find(close, b.open + open.size());
  if (b.close == std::string_view::npos) return b;
  b.content = text::trim(text.substr(b.open + open.size(), b.close - b.open - open.size()));
  b.found = true;
  return b;
}

}  // namespace detail

/// Extracts the first observe/think/answer blocks. The response is well formed
/// iff each opening and closing tag occurs exactly once, the blocks appear in
/// the order observe, think, answer, and every block is non-empty. Text
/// outside the tags is ignored.
inline StructuredResponse parse_structured(std::string_view text) {
  StructuredResponse r;
  auto o = detail::first_block(text, "observe");
  auto t = detail::first_block(text, "think");
  auto a = detail::first_block(text, "answer");
  r.observe = o.content;
  r.think = t.content;
  r.answer = a.content;

  bool once = true;
  for (std::string_view tag : {"<observe>", "</observe>", "<think>", "</think>", "<answer>", "</answer>"})
    once = once && detail::count_occurrences(text, tag) == 1;
  r.well_formed = once && o.found && t.found && a.found && o.close < t.open && t.close < a.open &&
                  !r.observe.empty() && !r.think.empty() && !r.answer.empty();
  return r;
}

/// Canonical tag emission; parse_structured(render(r)) == r for well-formed r
/// whose fields are trimmed.
inline std::string render(const StructuredResponse& r) {
  return "<observe>" + r.observe + "</observe>\n<think>" + r.think + "</think>\n<answer>" + r.answer + "</answer>";
}

inline int reward_format(const StructuredResponse& r) { return r.well_formed ? 1 : 0; }

// ---------------------------------------------------------------------------
// Semantic reward (LLM judge, 1-5 rubric mapped onto [0, 1])

inline constexpr std::string_view kAnswerScorePrompt =
    "You are a senior pathologist with 20+ years of clinical experience. Your task is to score the model's answer "
    "to a medical visual question based on its clinical accuracy compared to the ground truth diagnosis.\n"
    "\n"
    "Scoring Criteria (1-5):\n"
    "5: Perfectly correct. Clinically equivalent to ground truth, uses precise terminology, no errors.\n"
    "4: Mostly correct. Minor phrasing issues (e.g., word order), but clinically sound and accurate.\n"
    "3: Partially correct. Captures key elements but misses critical details (e.g., tumor grade, margin status).\n"
    "2: Related but incorrect. Mentions a relevant category but gets the specific diagnosis wrong.\n"
    "1: Incorrect or irrelevant. Hallucinated, off-topic, or contradicts the ground truth.\n"
    "\n"
    "Instructions:\n"
    "- Focus on clinical meaning, not exact wording.\n"
    "- Treat standard synonyms and abbreviations (e.g., \"IDC\") as acceptable.\n"
    "- Penalize overgeneralization or inclusion of false information.\n"
    "- Binary answers: incorrect responses must receive a low score (1 or 2).\n"
    "\n"
    "Ground Truth: {ground_truth}\n"
    "Model Prediction: {model_output}\n"
    "\n"
    "Constraint: Respond ONLY with a single integer from 1 to 5.";

inline std::string fill_slot(std::string_view templ, std::string_view slot, std::string_view value) {
  std::string out(templ);
  const std::string key = "{" + std::string(slot) + "}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
    out.replace(pos, key.size(), value);
  return out;
}

inline std::string build_answer_score_prompt(std::string_view prediction, std::string_view ground_truth) {
  return fill_slot(fill_slot(kAnswerScorePrompt, "ground_truth", ground_truth), "model_output", prediction);
}

/// First standalone integer in a judge reply, required to lie in 1..5.
inline int parse_judge_score(std::string_view reply) {
  for (std::size_t i = 0; i < reply.size();) {
    if (!text::is_word_char(reply[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && text::is_word_char(reply[j])) ++j;
    auto tok = reply.substr(i, j - i);
    if (std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      bool negative = i > 0 && reply[i - 1] == '-';
      if (!negative && tok.size() == 1 && tok[0] >= '1' && tok[0] <= '5') return tok[0] - '0';
      throw Error(ErrorKind::JudgeOutOfRange, "judge score " + std::string(negative ? "-" : "") + std::string(tok));
    }
    i = j;
  }
  throw Error(ErrorKind::JudgeOutOfRange, "judge reply has no integer: \"" + std::string(reply) + "\"");
}

/// Sends a prompt to a judge, mapping service failures onto JudgeFailed.
inline std::string ask_judge(LlmClient& judge, std::string_view prompt) {
  try {
    return judge.request(prompt);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::JudgeFailed) throw;
    throw Error(ErrorKind::JudgeFailed, e.what());
  }
}

inline double reward_semantic(std::string_view pred_answer, std::string_view gt_answer, LlmClient& judge) {
  if (text::trim(gt_answer).empty()) throw Error(ErrorKind::InvalidArgument, "ground-truth answer is empty");
  int s = parse_judge_score(ask_judge(judge, build_answer_score_prompt(pred_answer, gt_answer)));
  return (s - 1) / 4.0;
}

/// Offline rubric: 5 identical after normalization, 4 one contains the other,
/// 3 token Jaccard >= 0.5, 2 any shared token, else 1. Empty prediction is 1.
inline int mock_alignment_score(std::string_view prediction, std::string_view reference) {
  auto np = text::normalize_answer(prediction);
  auto nr = text::normalize_answer(reference);
  if (np.empty()) return 1;
  if (np == nr) return 5;
  if (text::contains_normalized(prediction, reference) || text::contains_normalized(reference, prediction)) return 4;
  auto tp = text::tokenize(prediction), tr = text::tokenize(reference);
  std::set<std::string> sp(tp.begin(), tp.end()), sr(tr.begin(), tr.end());
  std::size_t inter = 0;
  for (const auto& t : sp) inter += sr.count(t);
  std::size_t uni = sp.size() + sr.size() - inter;
  if (uni > 0 && 2 * inter >= uni) return 3;
  return inter > 0 ? 2 : 1;
}

/// Text strictly between `begin` and `end` markers (last `begin`; `end`
/// searched after it, or to end of text when empty).
inline std::optional<std::string> slot_between(std::string_view prompt, std::string_view begin, std::string_view end) {
  auto b = prompt.rfind(begin);
  if (b == std::string_view::npos) return std::nullopt;
  b += begin.size();
  auto e = end.empty() ? prompt.size() : prompt.find(end, b);
  if (e == std::string_view::npos) return std::nullopt;
  return std::string(prompt.substr(b, e - b));
}

/// Mock judge rule answering answer-score prompts.
inline std::optional<std::string> mock_answer_score_rule(std::string_view prompt) {
  if (prompt.find("Constraint: Respond ONLY with a single integer from 1 to 5.") == std::string_view::npos)
    return std::nullopt;
  auto gt = slot_between(prompt, "\nGround Truth: ", "\nModel Prediction: ");
  auto pred = slot_between(prompt, "\nModel Prediction: ", "\n\nConstraint: ");
  if (!gt || !pred) return std::nullopt;
  return std::to_string(mock_alignment_score(*pred, *gt));
}

// ---------------------------------------------------------------------------
// Entity reward (Soft-Dice)

/// Canonical entity keys (lowercase, trimmed) mapped to the text used for
/// embedding similarity.
class EntitySet {
 public:
  EntitySet() = default;
  EntitySet(std::initializer_list<std::pair<std::string, std::string>> entries) {
    for (const auto& [k, t] : entries) insert(k, t);
  }

  static std::string canonical(std::string_view key) { return text::lower(text::trim(key)); }

  /// Returns false when the key was already present (first text wins).
  bool insert(std::string_view key, std::string_view text) {
    auto k = canonical(key);
    if (k.empty()) throw Error(ErrorKind::InvalidArgument, "empty entity key");
    return entries_.emplace(std::move(k), std::string(text)).second;
  }

  bool contains(std::string_view key) const { return entries_.count(canonical(key)) > 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  friend bool operator==(const EntitySet&, const EntitySet&) = default;

 private:
  std::map<std::string, std::string> entries_;
};

struct EntityRewardParams {
  double beta = 0.5;
  double epsilon = 1e-8;
};

inline void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in [0,1]");
}

/// |pred ∩ gt| + beta * sum over pred \ gt of the best clamped similarity to
/// any gt entity. `sim(pred_key, pred_text, gt_key, gt_text)` returns a raw
/// similarity; it is clamped to [0, 1] here.
template <typename Sim>
double soft_intersection(const EntitySet& pred, const EntitySet& gt, Sim&& sim, double beta) {
  check_beta(beta);
  double exact = 0.0, soft = 0.0;
  for (const auto& [pk, pt] : pred.entries()) {
    if (gt.entries().count(pk)) {
      exact += 1.0;
      continue;
    }
    double best = 0.0;
    for (const auto& [gk, gtext] : gt.entries()) best = std::max(best, std::clamp(sim(pk, pt, gk, gtext), 0.0, 1.0));
    soft += best;
  }
  return exact + beta * soft;
}

namespace detail {

/// Similarity functor caching embeddings of entity texts.
class EmbeddingSimilarity {
 public:
  explicit EmbeddingSimilarity(const EmbeddingProvider& e) : embedder_(e) {}
  double operator()(const std::string&, const std::string& a, const std::string&, const std::string& b) {
    return cosine_similarity(get(a), get(b));
  }

 private:
  const Vector& get(const std::string& t) {
    auto it = cache_.find(t);
    if (it == cache_.end()) it = cache_.emplace(t, embed_checked(embedder_, t)).first;
    return it->second;
  }
  const EmbeddingProvider& embedder_;
  std::map<std::string, Vector> cache_;
};

}  // namespace detail

inline double soft_intersection(const EntitySet& pred, const EntitySet& gt, const EmbeddingProvider& embedder,
                                double beta) {
  return soft_intersection(pred, gt, detail::EmbeddingSimilarity(embedder), beta);
}

/// Soft-Dice: 2 * I_soft / (|pred| + |gt| + epsilon), clamped to [0, 1].
template <typename Sim>
double reward_entity(const EntitySet& pred, const EntitySet& gt, Sim&& sim, EntityRewardParams params = {}) {
  check_beta(params.beta);
  if (!(params.epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be > 0");
  double inter = soft_intersection(pred, gt, std::forward<Sim>(sim), params.beta);
  double value = 2.0 * inter / (static_cast<double>(pred.size() + gt.size()) + params.epsilon);
  return std::clamp(value, 0.0, 1.0);
}

inline double reward_entity(const EntitySet& pred, const EntitySet& gt, const EmbeddingProvider& embedder,
                            EntityRewardParams params = {}) {
  return reward_entity(pred, gt, detail::EmbeddingSimilarity(embedder), params);
}

// ---------------------------------------------------------------------------
// Entity extraction from free text

/// Longest-match scanning of node names and aliases over clause tokens, with
/// embedding anchoring of leftover content phrases. Anchored entities are
/// keyed by node id; phrases that do not anchor are dropped.
class EntityExtractor {
 public:
  static constexpr std::size_t kMaxPhraseTokens = 4;

  EntityExtractor(const KnowledgeGraph& g, const EmbeddingProvider& embedder, double threshold = kDefaultAnchorThreshold)
      : anchorer_(g, embedder, threshold) {
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      add_name(g.node(i).name, i);
      for (const auto& a : g.node(i).aliases) add_name(a, i);
    }
  }

  EntitySet extract(std::string_view text) const {
    EntitySet out;
    const auto& g = anchorer_.graph();
    for (const auto& clause : split_clauses(text)) {
      auto toks = text::tokenize(clause);
      std::vector<std::string> leftover;
      auto flush = [&] {
        if (!leftover.empty() && leftover.size() <= kMaxPhraseTokens) {
          std::string phrase = join(leftover, 0, leftover.size());
          auto a = anchorer_.anchor_text(phrase, {});
          if (a.node_id) out.insert(*a.node_id, g.find(*a.node_id)->name);
        }
        leftover.clear();
      };
      for (std::size_t i = 0; i < toks.size();) {
        std::size_t matched = 0;
        for (std::size_t len = std::min(max_len_, toks.size() - i); len >= 1; --len) {
          auto it = names_.find(join(toks, i, i + len));
          if (it != names_.end()) {
            flush();
            const auto& n = g.node(it->second);
            out.insert(n.id, n.name);
            matched = len;
            break;
          }
        }
        if (matched) {
          i += matched;
        } else {
          if (is_stopword(toks[i]))
            flush();
          else
            leftover.push_back(toks[i]);
          ++i;
        }
      }
      flush();
    }
    return out;
  }

 private:
  void add_name(const std::string& name, std::size_t idx) {
    auto toks = text::tokenize(name);
    if (toks.empty()) return;
    max_len_ = std::max(max_len_, toks.size());
    auto key = join(toks, 0, toks.size());
    auto [it, fresh] = names_.emplace(key, idx);
    if (!fresh && idx < it->second) it->second = idx;
  }

  static std::string join(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    std::string s;
    for (std::size_t i = b; i < e; ++i) {
      if (i > b) s.push_back(' ');
      s += toks[i];
    }
    return s;
  }

  static std::vector<std::string> split_clauses(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
      if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '(' || c == ')' || c == '\n') {
        out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    out.push_back(std::move(cur));
    return out;
  }

  static bool is_stopword(const std::string& t) {
    static const std::set<std::string> words{
        "a",     "an",    "the",  "of",    "in",    "on",   "at",   "to",    "for",   "with", "by",     "from",
        "and",   "or",    "but",  "not",   "no",    "is",   "are",  "was",   "were",  "be",   "been",   "being",
        "this",  "that",  "these", "those", "it",   "its",  "as",   "which", "who",   "whom", "there",  "here",
        "we",    "our",   "they", "their", "such",  "than", "then", "therefore", "thus", "also", "into", "within",
        "while", "whereas", "because", "given", "has", "have", "had", "does", "do", "can",  "may",    "most",
        "more",  "very",  "any",  "all",   "each",  "both", "either", "neither", "if", "so",   "between", "across"};
    return words.count(t) > 0;
  }

  Anchorer anchorer_;
  std::map<std::string, std::size_t> names_;
  std::size_t max_len_ = 0;
};

/// Entities mentioned in the observe and think sections of a well-formed
/// response.
inline EntitySet extract_reward_entities(const StructuredResponse& r, const KnowledgeGraph& g,
                                         const EmbeddingProvider& embedder, double threshold = kDefaultAnchorThreshold) {
  if (!r.well_formed) throw Error(ErrorKind::NotWellFormed, "response is not well formed");
  EntityExtractor ex(g, embedder, threshold);
  return ex.extract(r.observe + "\n" + r.think);
}

/// Ground-truth set from stored anchors: node id when anchored, otherwise the
/// normalized surface string.
inline EntitySet entity_set_from_anchors(std::span<const AnchoredEntity> anchors, const KnowledgeGraph& g) {
  EntitySet out;
  for (const auto& a : anchors) {
    if (a.node_id) {
      const Node* n = g.find(*a.node_id);
      out.insert(*a.node_id, n ? n->name : a.mention.text);
    } else if (auto surface = text::normalize_name(a.mention.text); !surface.empty()) {
      out.insert(surface, surface);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Total reward

struct RewardBreakdown {
  int format = 0;
  double semantic = 0.0;
  double entity = 0.0;
  double alpha = 1.0;
  double total = 0.0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline constexpr double kDefaultAlpha = 1.0;

inline RewardBreakdown total_reward(int r_format, double r_semantic, double r_entity, double alpha = kDefaultAlpha) {
  if (r_format != 0 && r_format != 1) throw Error(ErrorKind::InvalidArgument, "format reward must be 0 or 1");
  if (!(r_semantic >= 0.0 && r_semantic <= 1.0)) throw Error(ErrorKind::InvalidArgument, "semantic reward outside [0,1]");
  if (!(r_entity >= 0.0 && r_entity <= 1.0)) throw Error(ErrorKind::InvalidArgument, "entity reward outside [0,1]");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::InvalidArgument, "alpha must be >= 0");
  return {r_format, r_semantic, r_entity, alpha, r_format + r_semantic + alpha * r_entity};
}

inline nlohmann::json to_json(const RewardBreakdown& r) {
  return {{"format", r.format}, {"semantic", r.semantic}, {"entity", r.entity}, {"alpha", r.alpha}, {"total", r.total}};
}

struct RewardParams {
  double alpha = kDefaultAlpha;
  EntityRewardParams entity;
  double anchor_threshold = kDefaultAnchorThreshold;
};

/// Scores one response end to end. A response that is not well formed earns
/// no entity reward; its semantic reward is judged on whatever answer block
/// could be recovered, minus a leading "Final Answer:" label.
inline RewardBreakdown score_response(std::string_view response, std::string_view gt_answer, const EntitySet& gt_entities,
                                      const EntityExtractor& extractor, const EmbeddingProvider& embedder,
                                      LlmClient& judge, const RewardParams& params = {}) {
  auto r = parse_structured(response);
  int f = reward_format(r);
  double s = reward_semantic(text::strip_label(r.answer, "Final Answer:"), gt_answer, judge);
  double e = 0.0;
  if (r.well_formed) e = reward_entity(extractor.extract(r.observe + "\n" + r.think), gt_entities, embedder, params.entity);
  return total_reward(f, s, e, params.alpha);
}

}  // namespace pathforge
