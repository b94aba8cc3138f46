#pragma once

// Entity anchoring and priority-weighted shortest reasoning paths.

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pathforge/kg.hpp"
#include "pathforge/services.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

enum class MentionKind { PhysicalEntity, Phenotype, Diagnosis };

constexpr std::string_view to_string(MentionKind k) {
  switch (k) {
    case MentionKind::PhysicalEntity: return "PhysicalEntity";
    case MentionKind::Phenotype: return "Phenotype";
    case MentionKind::Diagnosis: return "Diagnosis";
  }
  return "?";
}

inline std::optional<MentionKind> parse_mention_kind(std::string_view s) {
  if (s == "Structure" || s == "Physical_Entity" || s == "PhysicalEntity") return MentionKind::PhysicalEntity;
  if (s == "Phenotype") return MentionKind::Phenotype;
  if (s == "Diagnosis") return MentionKind::Diagnosis;
  return std::nullopt;
}

/// Node kinds a mention of the given extraction kind may anchor to.
inline std::vector<NodeKind> compatible_kinds(MentionKind k) {
  switch (k) {
    case MentionKind::PhysicalEntity: return {NodeKind::PhysicalEntity};
    case MentionKind::Phenotype: return {NodeKind::Phenotype, NodeKind::ClinicalPhenotype};
    case MentionKind::Diagnosis: return {NodeKind::Diagnosis, NodeKind::Disease};
  }
  return {};
}

struct EntityMention {
  std::string label;
  std::string text;
  MentionKind kind = MentionKind::PhysicalEntity;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

/// Reads {"extracted_entities":[{"id","name","type"}, ...]}.
inline std::vector<EntityMention> parse_extraction(std::string_view json_text) {
  auto doc = nlohmann::json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorKind::MalformedJson, "extraction is not a JSON object");
  auto it = doc.find("extracted_entities");
  if (it == doc.end() || !it->is_array()) throw Error(ErrorKind::MalformedJson, "missing \"extracted_entities\" array");
  std::vector<EntityMention> out;
  std::set<std::string> labels;
  for (const auto& e : *it) {
    if (!e.is_object()) throw Error(ErrorKind::MalformedJson, "entity entry is not an object");
    auto str = [&](const char* key) {
      auto f = e.find(key);
      if (f == e.end() || !f->is_string()) throw Error(ErrorKind::MalformedJson, std::string("entity lacks \"") + key + "\"");
      return f->get<std::string>();
    };
    EntityMention m{str("id"), str("name"), MentionKind::PhysicalEntity};
    auto type = str("type");
    auto kind = parse_mention_kind(type);
    if (!kind) throw Error(ErrorKind::UnknownSchemaKind, "entity " + m.label + " has type \"" + type + "\"");
    m.kind = *kind;
    if (!labels.insert(m.label).second) throw Error(ErrorKind::MalformedJson, "duplicate entity label " + m.label);
    out.push_back(std::move(m));
  }
  return out;
}

enum class AnchorMethod { Exact, Normalized, Embedding, Unanchored };

constexpr std::string_view to_string(AnchorMethod m) {
  switch (m) {
    case AnchorMethod::Exact: return "Exact";
    case AnchorMethod::Normalized: return "Normalized";
    case AnchorMethod::Embedding: return "Embedding";
    case AnchorMethod::Unanchored: return "Unanchored";
  }
  return "?";
}

struct AnchoredEntity {
  EntityMention mention;
  std::optional<std::string> node_id;
  AnchorMethod method = AnchorMethod::Unanchored;
  double score = 0.0;

  friend bool operator==(const AnchoredEntity&, const AnchoredEntity&) = default;
};

inline constexpr double kDefaultAnchorThreshold = 0.85;

/// Resolves text mentions to graph nodes: exact name, then normalized name,
/// then best embedding cosine among compatible kinds. Names include aliases.
/// Node embeddings are computed lazily and cached, so one Anchorer can serve
/// many calls (and threads) over the same graph.
class Anchorer {
 public:
  Anchorer(const KnowledgeGraph& g, const EmbeddingProvider& embedder, double threshold = kDefaultAnchorThreshold)
      : g_(g), embedder_(embedder), threshold_(threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorKind::BadConfig, "anchor threshold must lie in (0,1]");
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const auto& n = g.node(i);
      exact_[n.name].push_back(i);
      normalized_[text::normalize_name(n.name)].push_back(i);
      for (const auto& a : n.aliases) {
        exact_[a].push_back(i);
        normalized_[text::normalize_name(a)].push_back(i);
      }
    }
  }

  AnchoredEntity anchor(const EntityMention& m) const {
    auto kinds = compatible_kinds(m.kind);
    auto r = anchor_text(m.text, kinds);
    r.mention = m;
    return r;
  }

  /// Anchors free text against the given kinds (all kinds when empty).
  AnchoredEntity anchor_text(std::string_view surface, std::span<const NodeKind> kinds) const {
    AnchoredEntity out;
    out.mention.text = std::string(surface);
    if (auto it = exact_.find(std::string(surface)); it != exact_.end()) {
      out.node_id = g_.node(pick(it->second, kinds)).id;
      out.method = AnchorMethod::Exact;
      out.score = 1.0;
      return out;
    }
    auto norm = text::normalize_name(surface);
    if (auto it = normalized_.find(norm); it != normalized_.end()) {
      out.node_id = g_.node(pick(it->second, kinds)).id;
      out.method = AnchorMethod::Normalized;
      out.score = 1.0;
      return out;
    }
    if (norm.empty()) return out;
    auto query = embed_checked(embedder_, surface);
    double best = -2.0;
    std::optional<std::size_t> best_idx;
    for (std::size_t i = 0; i < g_.node_count(); ++i) {
      if (!kind_ok(g_.node(i).kind, kinds)) continue;
      double s = cosine_similarity(query, node_embedding(i));
      if (s > best) {  // strict: ties keep the smaller id
        best = s;
        best_idx = i;
      }
    }
    if (best_idx && best >= threshold_) {
      out.node_id = g_.node(*best_idx).id;
      out.method = AnchorMethod::Embedding;
      out.score = best;
    }
    return out;
  }

  const KnowledgeGraph& graph() const { return g_; }
  double threshold() const { return threshold_; }

 private:
  static bool kind_ok(NodeKind k, std::span<const NodeKind> kinds) {
    return kinds.empty() || std::find(kinds.begin(), kinds.end(), k) != kinds.end();
  }

  // Prefers compatible kinds, then the smallest id (indices follow id order).
  std::size_t pick(const std::vector<std::size_t>& candidates, std::span<const NodeKind> kinds) const {
    std::optional<std::size_t> best;
    for (auto i : candidates)
      if (kind_ok(g_.node(i).kind, kinds) && (!best || i < *best)) best = i;
    if (best) return *best;
    return *std::min_element(candidates.begin(), candidates.end());
  }

  const Vector& node_embedding(std::size_t i) const {
    std::lock_guard lock(mu_);
    auto it = cache_.find(i);
    if (it == cache_.end()) it = cache_.emplace(i, embed_checked(embedder_, g_.node(i).name)).first;
    return it->second;
  }

  const KnowledgeGraph& g_;
  const EmbeddingProvider& embedder_;
  double threshold_;
  std::unordered_map<std::string, std::vector<std::size_t>> exact_;
  std::unordered_map<std::string, std::vector<std::size_t>> normalized_;
  mutable std::mutex mu_;
  mutable std::map<std::size_t, Vector> cache_;  // std::map: references stay valid
};

inline std::vector<AnchoredEntity> anchor_mentions(std::span<const EntityMention> mentions, const KnowledgeGraph& g,
                                                   const EmbeddingProvider& embedder,
                                                   double threshold = kDefaultAnchorThreshold) {
  Anchorer anchorer(g, embedder, threshold);
  std::vector<AnchoredEntity> out;
  out.reserve(mentions.size());
  for (const auto& m : mentions) out.push_back(anchorer.anchor(m));
  return out;
}

// ---------------------------------------------------------------------------
// Path retrieval

enum class PathRole { Support, Contrast, Exclusion, Context };

constexpr std::string_view to_string(PathRole r) {
  switch (r) {
    case PathRole::Support: return "Support";
    case PathRole::Contrast: return "Contrast";
    case PathRole::Exclusion: return "Exclusion";
    case PathRole::Context: return "Context";
  }
  return "?";
}

inline std::optional<PathRole> parse_path_role(std::string_view s) {
  for (auto r : {PathRole::Support, PathRole::Contrast, PathRole::Exclusion, PathRole::Context})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

/// A hop i goes nodes[i] -> nodes[i+1] along an edge labelled relations[i];
/// reversed[i] means the underlying edge points nodes[i+1] -> nodes[i].
struct ReasoningPath {
  std::vector<std::string> nodes;
  std::vector<std::string> relations;
  std::vector<bool> reversed;
  PathRole role = PathRole::Support;
  double cost = 0.0;

  friend bool operator==(const ReasoningPath&, const ReasoningPath&) = default;
};

inline constexpr const char* kSupportRelation = "hasSupportEvidence";
inline constexpr const char* kContradictRelation = "hasContradictEvidence";
inline constexpr const char* kExcludesRelation = "excludes";
inline constexpr double kDiagnosticDiscount = 0.5;
inline constexpr double kReverseTraversalFactor = 2.0;
inline constexpr double kDefaultMaxCost = 6.0;

inline std::map<std::string, double> default_priority() {
  return {{kSupportRelation, kDiagnosticDiscount}, {kContradictRelation, kDiagnosticDiscount}};
}

struct PathOptions {
  /// Relation -> cost multiplier; relations not listed use 1.0.
  std::map<std::string, double> priority = default_priority();
  double max_cost = kDefaultMaxCost;
};

inline double relation_multiplier(const std::map<std::string, double>& priority, const std::string& relation) {
  auto it = priority.find(relation);
  return it == priority.end() ? 1.0 : it->second;
}

inline PathRole classify_path(std::span<const std::string> relations) {
  auto has = [&](std::string_view r) { return std::find(relations.begin(), relations.end(), r) != relations.end(); };
  if (has(kContradictRelation)) return PathRole::Contrast;
  if (has(kExcludesRelation)) return PathRole::Exclusion;
  return PathRole::Support;
}

namespace detail {

struct Hop {
  std::size_t to;
  double cost;
  const std::string* relation;
  bool reversed;
};

// Cheapest traversal per ordered neighbour pair; ties prefer the smaller
// relation name, then forward direction.
inline std::vector<std::vector<Hop>> build_hops(const KnowledgeGraph& g, const PathOptions& opt) {
  std::vector<std::vector<Hop>> hops(g.node_count());
  auto better = [](const Hop& x, const Hop& y) {
    if (x.cost != y.cost) return x.cost < y.cost;
    if (*x.relation != *y.relation) return *x.relation < *y.relation;
    return !x.reversed && y.reversed;
  };
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    std::map<std::size_t, Hop> best;
    auto offer = [&](Hop h) {
      auto [it, fresh] = best.emplace(h.to, h);
      if (!fresh && better(h, it->second)) it->second = h;
    };
    for (auto ei : g.out_edges(u)) {
      const auto& e = g.edge(ei);
      offer({*g.index_of(e.dst), e.weight * relation_multiplier(opt.priority, e.relation), &e.relation, false});
    }
    for (auto ei : g.in_edges(u)) {
      const auto& e = g.edge(ei);
      offer({*g.index_of(e.src), kReverseTraversalFactor * e.weight * relation_multiplier(opt.priority, e.relation),
             &e.relation, true});
    }
    for (auto& [v, h] : best)
      if (v != u) hops[u].push_back(h);
  }
  return hops;
}

}  // namespace detail

/// For every (start, end) pair, the minimum-cost path where a forward hop
/// costs weight x multiplier(relation) and a backward hop twice that. Ties go
/// to the lexicographically smallest node-id sequence. Pairs that are
/// unreachable or cost more than `max_cost` are omitted. Output is grouped by
/// start in the given order, then by end in the given order.
inline std::vector<ReasoningPath> retrieve_paths(const KnowledgeGraph& g, std::span<const std::string> starts,
                                                 std::span<const std::string> ends, const PathOptions& opt = {}) {
  if (starts.empty()) throw Error(ErrorKind::NoStarts, "no start nodes");
  if (ends.empty()) throw Error(ErrorKind::NoEnds, "no end nodes");
  for (const auto& [rel, m] : opt.priority)
    if (!(m > 0.0)) throw Error(ErrorKind::BadConfig, "priority multiplier for " + rel + " must be > 0");
  auto resolve = [&](const std::string& id) {
    auto i = g.index_of(id);
    if (!i) throw Error(ErrorKind::InvalidArgument, "unknown node " + id);
    return *i;
  };
  std::vector<std::size_t> end_idx;
  for (const auto& e : ends) end_idx.push_back(resolve(e));
  auto hops = detail::build_hops(g, opt);

  struct Label {
    double cost;
    std::vector<std::size_t> nodes;
    std::vector<const detail::Hop*> via;
  };
  auto label_less = [](const Label& x, const Label& y) {
    if (x.cost != y.cost) return x.cost < y.cost;
    return x.nodes < y.nodes;  // index order == id order
  };
  auto heap_cmp = [&](const Label& x, const Label& y) { return label_less(y, x); };

  std::vector<ReasoningPath> out;
  for (const auto& s : starts) {
    const auto src = resolve(s);
    std::vector<std::optional<Label>> settled(g.node_count());
    std::priority_queue<Label, std::vector<Label>, decltype(heap_cmp)> pq(heap_cmp);
    pq.push({0.0, {src}, {}});
    while (!pq.empty()) {
      Label cur = pq.top();
      pq.pop();
      auto u = cur.nodes.back();
      if (settled[u]) continue;
      for (const auto& h : hops[u]) {
        if (settled[h.to]) continue;
        double c = cur.cost + h.cost;
        if (c > opt.max_cost) continue;
        Label next{c, cur.nodes, cur.via};
        next.nodes.push_back(h.to);
        next.via.push_back(&h);
        pq.push(std::move(next));
      }
      settled[u] = std::move(cur);
    }
    for (auto t : end_idx) {
      if (!settled[t]) continue;
      const auto& lab = *settled[t];
      ReasoningPath p;
      for (auto i : lab.nodes) p.nodes.push_back(g.node(i).id);
      for (const auto* h : lab.via) {
        p.relations.push_back(*h->relation);
        p.reversed.push_back(h->reversed);
      }
      p.cost = lab.cost;
      p.role = classify_path(p.relations);
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// True when every hop is backed by an edge with the stated relation and
/// direction.
inline bool validate_path(const KnowledgeGraph& g, const ReasoningPath& p) {
  if (p.nodes.empty() || p.relations.size() + 1 != p.nodes.size() || p.reversed.size() != p.relations.size())
    return false;
  for (const auto& id : p.nodes)
    if (!g.find(id)) return false;
  for (std::size_t i = 0; i < p.relations.size(); ++i) {
    const auto& from = p.reversed[i] ? p.nodes[i + 1] : p.nodes[i];
    const auto& to = p.reversed[i] ? p.nodes[i] : p.nodes[i + 1];
    bool found = false;
    for (auto ei : g.out_edges(*g.index_of(from))) {
      const auto& e = g.edge(ei);
      if (e.dst == to && e.relation == p.relations[i]) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

/// "[A] --rel--> [B] <--rel2-- [C]" using node display names.
inline std::string render_path(const KnowledgeGraph& g, const ReasoningPath& p) {
  auto name = [&](const std::string& id) {
    const Node* n = g.find(id);
    return "[" + (n ? n->name : id) + "]";
  };
  std::string out = name(p.nodes.front());
  for (std::size_t i = 0; i < p.relations.size(); ++i) {
    out += p.reversed[i] ? " <--" + p.relations[i] + "-- " : " --" + p.relations[i] + "--> ";
    out += name(p.nodes[i + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const EntityMention& m) {
  return {{"label", m.label}, {"text", m.text}, {"schema_kind", std::string(to_string(m.kind))}};
}

inline nlohmann::json to_json(const AnchoredEntity& a) {
  nlohmann::json j = to_json(a.mention);
  j["node_id"] = a.node_id ? nlohmann::json(*a.node_id) : nlohmann::json(nullptr);
  j["method"] = std::string(to_string(a.method));
  j["score"] = a.score;
  return j;
}

inline AnchoredEntity anchored_from_json(const nlohmann::json& j) {
  try {
    AnchoredEntity a;
    a.mention.label = j.at("label").get<std::string>();
    a.mention.text = j.at("text").get<std::string>();
    auto kind = parse_mention_kind(j.at("schema_kind").get<std::string>());
    if (!kind) throw Error(ErrorKind::MalformedRecord, "unknown schema_kind");
    a.mention.kind = *kind;
    if (!j.at("node_id").is_null()) a.node_id = j.at("node_id").get<std::string>();
    auto m = j.at("method").get<std::string>();
    bool ok = false;
    for (auto x : {AnchorMethod::Exact, AnchorMethod::Normalized, AnchorMethod::Embedding, AnchorMethod::Unanchored})
      if (to_string(x) == m) {
        a.method = x;
        ok = true;
      }
    if (!ok) throw Error(ErrorKind::MalformedRecord, "unknown anchor method " + m);
    a.score = j.at("score").get<double>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

inline nlohmann::json to_json(const ReasoningPath& p) {
  return {{"nodes", p.nodes},
          {"relations", p.relations},
          {"reversed", p.reversed},
          {"role", std::string(to_string(p.role))},
          {"cost", p.cost}};
}

inline ReasoningPath path_from_json(const nlohmann::json& j) {
  try {
    ReasoningPath p;
    p.nodes = j.at("nodes").get<std::vector<std::string>>();
    p.relations = j.at("relations").get<std::vector<std::string>>();
    p.reversed = j.contains("reversed") ? j.at("reversed").get<std::vector<bool>>()
                                        : std::vector<bool>(p.relations.size(), false);
    auto role = parse_path_role(j.at("role").get<std::string>());
    if (!role) throw Error(ErrorKind::MalformedRecord, "unknown path role");
    p.role = *role;
    p.cost = j.at("cost").get<double>();
    if (p.nodes.empty() || p.relations.size() + 1 != p.nodes.size() || p.reversed.size() != p.relations.size())
      throw Error(ErrorKind::MalformedRecord, "path arity mismatch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

}  // namespace pathforge
