#pragma once

// Chain segmentation and trajectory-masked SFT corpus emission.

#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

struct ReasoningChain {
  std::vector<std::string> steps;
  std::string answer;

  std::size_t L() const { return steps.size(); }
  void validate() const {
    if (steps.empty()) throw Error(ErrorKind::EmptyChain, "chain has no steps");
    for (const auto& s : steps)
      if (text::trim(s).empty()) throw Error(ErrorKind::EmptyChain, "chain has an empty step");
  }
  friend bool operator==(const ReasoningChain&, const ReasoningChain&) = default;
};

struct SftSample {
  std::string case_ref;
  std::string question;
  std::vector<std::string> context;
  std::vector<std::string> target_steps;
  std::string target_answer;
  std::size_t m = 1;

  std::size_t L() const { return context.size() + target_steps.size(); }
  friend bool operator==(const SftSample&, const SftSample&) = default;
};

inline constexpr std::string_view kStepSeparator = " ";

inline std::string join_steps(const std::vector<std::string>& steps, std::string_view sep = kStepSeparator) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += sep;
    out += steps[i];
  }
  return out;
}

/// context ++ target_steps, joined with the step separator.
inline std::string reconstruct(const SftSample& s) {
  std::vector<std::string> all = s.context;
  all.insert(all.end(), s.target_steps.begin(), s.target_steps.end());
  return join_steps(all);
}

inline std::vector<std::string> default_abbreviations() { return {"e.g.", "i.e.", "vs.", "Dr.", "No."}; }

namespace detail {

struct Segment {
  std::string text;
  bool answer_marked = false;
};

inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// "($s_k$)" or "($a$)" at pos; returns marker length, 0 when absent.
inline std::size_t dollar_marker(std::string_view t, std::size_t pos, bool& is_answer) {
  if (t.compare(pos, 3, "($a") == 0 && t.compare(pos, 5, "($a$)") == 0) {
    is_answer = true;
    return 5;
  }
  if (t.compare(pos, 4, "($s_") != 0) return 0;
  std::size_t i = pos + 4;
  if (i < t.size() && t[i] == '{') ++i;
  std::size_t digits = i;
  while (i < t.size() && is_digit(t[i])) ++i;
  if (i == digits) return 0;
  if (i < t.size() && t[i] == '}') ++i;
  if (t.compare(i, 2, "$)") != 0) return 0;
  is_answer = false;
  return i + 2 - pos;
}

// "[Step k: ...]" at pos; returns marker length, 0 when absent.
inline std::size_t step_marker(std::string_view t, std::size_t pos) {
  if (t.compare(pos, 6, "[Step ") != 0) return 0;
  std::size_t i = pos + 6, digits = i;
  while (i < t.size() && is_digit(t[i])) ++i;
  if (i == digits) return 0;
  auto close = t.find(']', i);
  if (close == std::string_view::npos) return 0;
  return close + 1 - pos;
}

inline void push_segment(std::vector<Segment>& out, std::string_view raw, bool answer) {
  auto s = text::collapse_space(raw);
  if (!s.empty()) out.push_back({std::move(s), answer});
}

inline std::vector<Segment> split_on_markers(std::string_view t, bool& found) {
  std::vector<Segment> out;
  std::string cur;
  found = false;
  for (std::size_t i = 0; i < t.size();) {
    bool ans = false;
    if (auto n = dollar_marker(t, i, ans)) {
      found = true;
      push_segment(out, cur, ans);
      cur.clear();
      i += n;
      continue;
    }
    if (auto n = step_marker(t, i)) {
      found = true;
      push_segment(out, cur, false);
      cur.clear();
      i += n;
      continue;
    }
    cur += t[i++];
  }
  push_segment(out, cur, false);
  return out;
}

inline bool ends_with_guard(std::string_view upto, const std::vector<std::string>& guards) {
  for (const auto& g : guards) {
    if (g.size() > upto.size()) continue;
    if (upto.compare(upto.size() - g.size(), g.size(), g) != 0) continue;
    std::size_t before = upto.size() - g.size();
    if (before == 0 || !text::is_word_char(upto[before - 1])) return true;
  }
  return false;
}

inline std::vector<Segment> split_sentences(std::string_view t, const std::vector<std::string>& guards) {
  std::vector<Segment> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    char c = t[i];
    if (c != '.' && c != '?' && c != '!') continue;
    std::size_t j = i + 1;
    if (j >= t.size() || !text::is_space(t[j])) continue;
    while (j < t.size() && text::is_space(t[j])) ++j;
    if (j >= t.size() || !is_upper(t[j])) continue;
    if (ends_with_guard(t.substr(0, i + 1), guards)) continue;
    push_segment(out, t.substr(start, i + 1 - start), false);
    start = j;
  }
  push_segment(out, t.substr(start), false);
  return out;
}

inline bool has_conclusion_cue(std::string_view s) {
  auto l = text::lower(s);
  return l.find("final diagnosis") != std::string::npos || l.find("conclusion:") != std::string::npos;
}

}  // namespace detail

/// Splits on explicit step markers when present, else on sentence
/// boundaries. The last segment carrying a conclusion cue (or an answer
/// marker) becomes the answer; failing that, the last segment. A single
/// segment serves as both the only step and the answer.
inline ReasoningChain segment_chain(std::string_view chain, const std::vector<std::string>& guards = default_abbreviations()) {
  if (text::trim(chain).empty()) throw Error(ErrorKind::EmptyChain, "chain text is empty");
  bool marked = false;
  auto segs = detail::split_on_markers(chain, marked);
  if (!marked) segs = detail::split_sentences(chain, guards);
  if (segs.empty()) throw Error(ErrorKind::EmptyChain, "chain has no content");

  ReasoningChain rc;
  if (segs.size() == 1) {
    rc.steps = {segs[0].text};
    rc.answer = segs[0].text;
    return rc;
  }
  std::size_t ans = segs.size() - 1;
  bool picked = false;
  for (std::size_t i = segs.size(); i-- > 0;)
    if (segs[i].answer_marked) {
      ans = i;
      picked = true;
      break;
    }
  if (!picked)
    for (std::size_t i = segs.size(); i-- > 0;)
      if (detail::has_conclusion_cue(segs[i].text)) {
        ans = i;
        break;
      }
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (i != ans) rc.steps.push_back(segs[i].text);
  rc.answer = segs[ans].text;
  return rc;
}

/// One sample per truncation point m = 1..L, ascending.
inline std::vector<SftSample> augment_trajectories(const ReasoningChain& chain, std::string_view case_ref,
                                                   std::string_view question) {
  chain.validate();
  std::vector<SftSample> out;
  out.reserve(chain.L());
  for (std::size_t m = 1; m <= chain.L(); ++m) {
    SftSample s;
    s.case_ref = case_ref;
    s.question = question;
    s.context.assign(chain.steps.begin(), chain.steps.begin() + static_cast<std::ptrdiff_t>(m - 1));
    s.target_steps.assign(chain.steps.begin() + static_cast<std::ptrdiff_t>(m - 1), chain.steps.end());
    s.target_answer = chain.answer;
    s.m = m;
    out.push_back(std::move(s));
  }
  return out;
}

/// Keeps k truncation points drawn uniformly (with replacement) from 1..L,
/// reported in ascending m with duplicates collapsed.
inline std::vector<SftSample> sample_trajectories(const ReasoningChain& chain, std::string_view case_ref,
                                                  std::string_view question, std::size_t k, std::uint64_t seed) {
  auto all = augment_trajectories(chain, case_ref, question);
  std::mt19937_64 rng(seed);
  std::set<std::size_t> picked;
  for (std::size_t i = 0; i < k; ++i) picked.insert(static_cast<std::size_t>(rng() % chain.L()));
  std::vector<SftSample> out;
  for (auto i : picked) out.push_back(all[i]);
  return out;
}

inline nlohmann::json to_json(const SftSample& s) {
  return {{"case_ref", s.case_ref}, {"question", s.question},         {"context", s.context},
          {"target_steps", s.target_steps}, {"target_answer", s.target_answer}, {"m", s.m},
          {"L", s.L()}};
}

inline SftSample sample_from_json(const nlohmann::json& j) {
  SftSample s;
  try {
    s.case_ref = j.at("case_ref").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.context = j.at("context").get<std::vector<std::string>>();
    s.target_steps = j.at("target_steps").get<std::vector<std::string>>();
    s.target_answer = j.at("target_answer").get<std::string>();
    s.m = j.at("m").get<std::size_t>();
    auto L = j.at("L").get<std::size_t>();
    if (L != s.L() || s.m < 1 || s.m > L || s.context.size() != s.m - 1)
      throw Error(ErrorKind::MalformedRecord, "inconsistent m/L/context lengths");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
  return s;
}

inline std::size_t emit_corpus(const std::vector<SftSample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
  if (!out) throw Error(ErrorKind::IoFailure, "write failed: " + path);
  return samples.size();
}

inline std::vector<SftSample> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + path);
  std::vector<SftSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedRecord, path + ":" + std::to_string(n) + ": " + e.what());
    }
    out.push_back(sample_from_json(j));
  }
  return out;
}

}  // namespace pathforge
