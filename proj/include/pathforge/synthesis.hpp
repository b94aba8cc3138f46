#pragma once

// Knowledge-constrained CoT synthesis and the three-check quality filter.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/kg.hpp"
#include "pathforge/reasoning.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/services.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

struct TripletMeta {
  std::string case_id;
  std::string cancer_type;
  std::string source;
  std::vector<std::string> missing_entities;

  friend bool operator==(const TripletMeta&, const TripletMeta&) = default;
};

struct Triplet {
  std::string question;
  std::string answer;
  std::string chain;
  std::vector<AnchoredEntity> entities;
  std::vector<ReasoningPath> paths;
  TripletMeta meta;

  bool filter_eligible() const {
    return !text::trim(question).empty() && !text::trim(answer).empty() && !text::trim(chain).empty();
  }

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// ---------------------------------------------------------------------------
// Generation prompts

enum class PromptTemplate { Option1, Option2, Option3 };

inline std::optional<PromptTemplate> parse_prompt_template(std::string_view s) {
  auto n = text::lower(s);
  if (n == "option1" || n == "1") return PromptTemplate::Option1;
  if (n == "option2" || n == "2") return PromptTemplate::Option2;
  if (n == "option3" || n == "3") return PromptTemplate::Option3;
  return std::nullopt;
}

inline std::string_view template_text(PromptTemplate t) {
  switch (t) {
    case PromptTemplate::Option1:
      return "You are an expert AI pathologist. Carefully analyze the provided whole slide image (WSI) to answer the "
             "following question.\n"
             "Follow these steps:\n"
             "1. Observe and describe key histopathological findings relevant to the question.\n"
             "2. Perform step-by-step clinical reasoning to connect findings with your conclusion.\n"
             "3. Provide the final concise answer.\n"
             "Please respond in the exact format below:\n"
             "<observe> Histopathological Findings: ... </observe>\n"
             "<think> Clinical Reasoning: ... </think>\n"
             "<answer> Final Answer: ... </answer>";
    case PromptTemplate::Option2:
      return "You are an AI pathology assistant. Answer the following question based on the provided WSI. Please "
             "structure your reasoning clearly and respond in this exact format:\n"
             "<observe> Histopathological Findings: Describe key findings. </observe>\n"
             "<think> Clinical Reasoning: Explain your diagnostic reasoning step-by-step. </think>\n"
             "<answer> Final Answer: Provide the short, conclusive answer. </answer>";
    case PromptTemplate::Option3:
      return "You are a digital pathology consultant. Analyze the provided WSI and answer the question using "
             "structured reasoning. Respond strictly in this format:\n"
             "<observe> ... </observe> <think> ... </think> <answer> ... </answer>";
  }
  return {};
}

inline constexpr std::string_view kPathSectionHeader = "Knowledge paths:";
inline constexpr std::string_view kQuestionLabel = "Question: ";
inline constexpr std::string_view kDefaultQuestion = "What is the most likely diagnosis?";

/// Template text, the path section (every path rendered node by node), the
/// anchored entities, and finally the question slot on its own line.
inline std::string build_generation_prompt(std::span<const ReasoningPath> paths, std::span<const AnchoredEntity> entities,
                                           PromptTemplate templ, const KnowledgeGraph& g,
                                           std::string_view question = kDefaultQuestion) {
  if (paths.empty()) throw Error(ErrorKind::NoPaths, "generation needs at least one reasoning path");
  std::string p(template_text(templ));
  p += "\n\n";
  p += kPathSectionHeader;
  p += "\n";
  for (std::size_t i = 0; i < paths.size(); ++i)
    p += "Path " + std::to_string(i + 1) + " (" + std::string(to_string(paths[i].role)) + "): " +
         render_path(g, paths[i]) + "\n";
  p += "Ground every reasoning step in these paths. Cite the physical entities and phenotypes they contain as "
       "supporting evidence before stating the final diagnosis.\n";
  std::string anchored;
  for (const auto& e : entities)
    if (e.node_id)
      if (const Node* n = g.find(*e.node_id))
        anchored += "- " + e.mention.label + ": " + e.mention.text + " -> " + n->name + "\n";
  if (!anchored.empty()) p += "\nAnchored entities:\n" + anchored;
  p += "\n";
  p += kQuestionLabel;
  p += text::collapse_space(question);
  return p;
}

/// The question slot of a generation prompt (its last "Question: " line).
inline std::string question_from_prompt(std::string_view prompt) {
  auto pos = prompt.rfind(std::string("\n") + std::string(kQuestionLabel));
  if (pos == std::string_view::npos) return {};
  auto rest = prompt.substr(pos + 1 + kQuestionLabel.size());
  return text::trim(rest.substr(0, rest.find('\n')));
}

// ---------------------------------------------------------------------------
// Triplet synthesis

struct SynthesisInput {
  std::string prompt;
  std::vector<AnchoredEntity> entities;
  std::vector<ReasoningPath> paths;
  TripletMeta meta;
};

/// Calls the generator and splits its tagged reply: C is the observe and think
/// sections, A the answer section (section labels stripped). Anchored entities
/// lying on the paths whose names C never mentions are listed in
/// meta.missing_entities.
inline Triplet synthesize_triplet(const SynthesisInput& in, LlmClient& generator, const KnowledgeGraph& g) {
  std::string reply;
  try {
    reply = generator.request(in.prompt);
  } catch (const Error& e) {
    throw Error(ErrorKind::GenerationFailed, e.what());
  }
  auto r = parse_structured(reply);
  if (!r.well_formed) throw Error(ErrorKind::UnparseableResponse, "generator reply lacks the three tagged sections");

  Triplet t;
  t.question = question_from_prompt(in.prompt);
  t.chain = text::strip_label(r.observe, "Histopathological Findings:") + " " +
            text::strip_label(r.think, "Clinical Reasoning:");
  t.answer = text::strip_label(r.answer, "Final Answer:");
  t.entities = in.entities;
  t.paths = in.paths;
  t.meta = in.meta;

  std::set<std::string> on_path;
  for (const auto& p : in.paths) on_path.insert(p.nodes.begin(), p.nodes.end());
  std::set<std::string> seen;
  for (const auto& e : in.entities) {
    if (!e.node_id || !on_path.count(*e.node_id)) continue;
    const Node* n = g.find(*e.node_id);
    const std::string& name = n ? n->name : e.mention.text;
    if (!seen.insert(name).second) continue;
    if (!text::contains_normalized(t.chain, name) && !text::contains_normalized(t.chain, e.mention.text))
      t.meta.missing_entities.push_back(name);
  }
  return t;
}

/// Mock generator rule: reads the path section of a generation prompt and
/// verbalizes it into a tagged response whose answer is the end node of the
/// first Support path (else of the first path).
inline std::optional<std::string> mock_generation_rule(std::string_view prompt) {
  auto start = prompt.find(kPathSectionHeader);
  if (start == std::string_view::npos) return std::nullopt;
  std::vector<std::string> lines;
  std::string_view rest = prompt.substr(start + kPathSectionHeader.size());
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    auto line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (line.rfind("Path ", 0) == 0) lines.emplace_back(line);
  }
  if (lines.empty()) return std::nullopt;

  auto bracketed = [](std::string_view line) {
    std::vector<std::string> names;
    for (auto b = line.find('['); b != std::string_view::npos; b = line.find('[', b + 1)) {
      auto e = line.find(']', b);
      if (e == std::string_view::npos) break;
      names.emplace_back(line.substr(b + 1, e - b - 1));
    }
    return names;
  };
  std::string findings, reasoning, answer;
  std::set<std::string> listed;
  for (const auto& line : lines) {
    auto names = bracketed(line);
    if (names.empty()) continue;
    if (listed.insert(names.front()).second) findings += (findings.empty() ? "" : ", ") + names.front();
    auto colon = line.find("): ");
    std::string body = colon == std::string::npos ? line : line.substr(colon + 3);
    for (char& c : body)
      if (c == '[' || c == ']') c = ' ';
    reasoning += text::collapse_space(body) + ". ";
    if (answer.empty() && line.find("(Support)") != std::string::npos) answer = names.back();
  }
  if (answer.empty()) answer = bracketed(lines.front()).back();
  return "<observe> Histopathological Findings: The slide shows " + findings + ". </observe>\n<think> Clinical Reasoning: " +
         reasoning + "Therefore, the final diagnosis is " + answer + ". </think>\n<answer> Final Answer: " + answer +
         " </answer>";
}

// ---------------------------------------------------------------------------
// Filtering protocol

inline constexpr std::string_view kConsistencyPrompt =
    "You are auditing a pathology reasoning sample. Decide whether the conclusion stated in the reasoning chain "
    "contradicts the reference answer.\n"
    "Respond ONLY with CONSISTENT or CONTRADICTS.\n"
    "Reasoning Chain: {chain}\n"
    "Reference Answer: {answer}";

inline constexpr std::string_view kBlindPrompt =
    "You are a pathologist answering without access to any image or report. Give your best short answer to the "
    "question below. Respond ONLY with the answer.\n"
    "Question: {question}";

inline constexpr std::string_view kSufficiencyPrompt =
    "You are a pathologist. Infer the final answer using only the reasoning chain below; do not rely on any other "
    "knowledge of the case. Respond ONLY with the short answer.\n"
    "Reasoning Chain: {chain}";

/// Shared comparison for "the inferred answer aligns with A".
inline bool answers_align(std::string_view inferred, std::string_view answer) {
  return text::contains_normalized(inferred, answer);
}

/// Last sentence of a chain (split on . ! ? followed by whitespace).
inline std::string final_sentence(std::string_view chain) {
  auto t = text::trim(chain);
  while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
  std::size_t cut = 0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if ((t[i] == '.' || t[i] == '!' || t[i] == '?') && text::is_space(t[i + 1])) cut = i + 1;
  return text::trim(std::string_view(t).substr(cut));
}

namespace detail {
inline void require_eligible(const Triplet& t) {
  if (!t.filter_eligible()) throw Error(ErrorKind::JudgeFailed, "triplet has an empty question, answer or chain");
}
}  // namespace detail

inline bool check_consistency(const Triplet& t, LlmClient& judge) {
  detail::require_eligible(t);
  auto prompt = fill_slot(fill_slot(kConsistencyPrompt, "chain", t.chain), "answer", t.answer);
  auto reply = text::lower(text::trim(ask_judge(judge, prompt)));
  if (reply.find("contradict") != std::string::npos) return false;
  if (reply.find("consistent") != std::string::npos) return true;
  throw Error(ErrorKind::JudgeFailed, "unrecognized consistency verdict: " + reply);
}

/// The judge sees only Q. Returns false (discard) when its blind prediction
/// already matches A.
inline bool check_visual_dependency(const Triplet& t, LlmClient& judge) {
  detail::require_eligible(t);
  auto blind = ask_judge(judge, fill_slot(kBlindPrompt, "question", t.question));
  return !answers_align(blind, t.answer);
}

inline bool check_sufficiency(const Triplet& t, LlmClient& judge) {
  detail::require_eligible(t);
  auto inferred = ask_judge(judge, fill_slot(kSufficiencyPrompt, "chain", t.chain));
  return answers_align(inferred, t.answer);
}

/// Mock judge rules for the three filter prompts: consistency holds when A is
/// contained in the final sentence of C; the blind predictor echoes Q; the
/// sufficiency predictor echoes C.
inline std::optional<std::string> mock_filter_rule(std::string_view prompt) {
  if (prompt.find("Respond ONLY with CONSISTENT or CONTRADICTS.") != std::string_view::npos) {
    auto chain = slot_between(prompt, "\nReasoning Chain: ", "\nReference Answer: ");
    auto answer = slot_between(prompt, "\nReference Answer: ", "");
    if (!chain || !answer) return std::nullopt;
    return answers_align(final_sentence(*chain), *answer) ? "CONSISTENT" : "CONTRADICTS";
  }
  if (prompt.find("answering without access to any image") != std::string_view::npos)
    return slot_between(prompt, "\nQuestion: ", "");
  if (prompt.find("Infer the final answer using only the reasoning chain") != std::string_view::npos)
    return slot_between(prompt, "\nReasoning Chain: ", "");
  return std::nullopt;
}

struct FilterVerdict {
  bool consistency = false;
  bool visual_dependency = false;
  bool sufficiency = false;
  bool kept = false;
  std::vector<std::string> reasons;

  friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

/// Runs all three checks. A failing judge call marks only that check as
/// failed, with the error text recorded in the reasons.
inline FilterVerdict evaluate_triplet(const Triplet& t, LlmClient& judge) {
  FilterVerdict v;
  auto run = [&](const char* name, bool (*check)(const Triplet&, LlmClient&), bool& flag) {
    try {
      flag = check(t, judge);
      if (!flag) v.reasons.emplace_back(name);
    } catch (const Error& e) {
      flag = false;
      v.reasons.push_back(std::string(name) + ": " + e.what());
    }
  };
  run("consistency", check_consistency, v.consistency);
  run("visual_dependency", check_visual_dependency, v.visual_dependency);
  run("sufficiency", check_sufficiency, v.sufficiency);
  v.kept = v.consistency && v.visual_dependency && v.sufficiency;
  return v;
}

struct FilterResult {
  std::vector<Triplet> kept;
  std::vector<std::pair<Triplet, FilterVerdict>> dropped;
  std::vector<FilterVerdict> verdicts;  // one per input, input order
};

/// Input order is preserved in every output. At most `jobs` triplets are
/// evaluated concurrently; the judge client caps in-flight calls itself.
inline FilterResult filter_corpus(std::span<const Triplet> triplets, LlmClient& judge, std::size_t jobs = 1) {
  FilterResult out;
  out.verdicts = parallel_map(triplets, [&](const Triplet& t) { return evaluate_triplet(t, judge); }, jobs);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (out.verdicts[i].kept)
      out.kept.push_back(triplets[i]);
    else
      out.dropped.emplace_back(triplets[i], out.verdicts[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::json to_json(const Triplet& t) {
  nlohmann::json entities = nlohmann::json::array(), paths = nlohmann::json::array();
  for (const auto& e : t.entities) entities.push_back(to_json(e));
  for (const auto& p : t.paths) paths.push_back(to_json(p));
  return {{"question", t.question},
          {"answer", t.answer},
          {"chain", t.chain},
          {"entities", entities},
          {"paths", paths},
          {"meta",
           {{"case_id", t.meta.case_id},
            {"cancer_type", t.meta.cancer_type},
            {"source", t.meta.source},
            {"missing_entities", t.meta.missing_entities}}}};
}

inline Triplet triplet_from_json(const nlohmann::json& j) {
  try {
    Triplet t;
    t.question = j.at("question").get<std::string>();
    t.answer = j.at("answer").get<std::string>();
    t.chain = j.at("chain").get<std::string>();
    for (const auto& e : j.value("entities", nlohmann::json::array())) t.entities.push_back(anchored_from_json(e));
    for (const auto& p : j.value("paths", nlohmann::json::array())) t.paths.push_back(path_from_json(p));
    if (auto m = j.find("meta"); m != j.end()) {
      t.meta.case_id = m->value("case_id", "");
      t.meta.cancer_type = m->value("cancer_type", "");
      t.meta.source = m->value("source", "");
      t.meta.missing_entities = m->value("missing_entities", std::vector<std::string>{});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

inline nlohmann::json to_json(const FilterVerdict& v) {
  return {{"kept", v.kept},
          {"consistency", v.consistency},
          {"visual_dependency", v.visual_dependency},
          {"sufficiency", v.sufficiency},
          {"reasons", v.reasons}};
}

}  // namespace pathforge
