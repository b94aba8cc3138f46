#pragma once

// Multi-scale knowledge graph: typed nodes, relation-typed weighted edges,
// cross-graph alignment, fusion and pruning.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"
#include "pathforge/services.hpp"

namespace pathforge {

enum class NodeKind { PhysicalEntity, Phenotype, Diagnosis, Disease, GeneProtein, ClinicalPhenotype };
enum class NodeSource { GraphA, GraphB, Fused };

inline constexpr std::array<NodeKind, 6> kAllNodeKinds{NodeKind::PhysicalEntity, NodeKind::Phenotype,
                                                       NodeKind::Diagnosis,      NodeKind::Disease,
                                                       NodeKind::GeneProtein,    NodeKind::ClinicalPhenotype};

constexpr std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::PhysicalEntity: return "PhysicalEntity";
    case NodeKind::Phenotype: return "Phenotype";
    case NodeKind::Diagnosis: return "Diagnosis";
    case NodeKind::Disease: return "Disease";
    case NodeKind::GeneProtein: return "GeneProtein";
    case NodeKind::ClinicalPhenotype: return "ClinicalPhenotype";
  }
  return "?";
}

constexpr std::string_view to_string(NodeSource s) {
  switch (s) {
    case NodeSource::GraphA: return "GraphA";
    case NodeSource::GraphB: return "GraphB";
    case NodeSource::Fused: return "Fused";
  }
  return "?";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) {
  for (auto k : kAllNodeKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<NodeSource> parse_node_source(std::string_view s) {
  for (auto v : {NodeSource::GraphA, NodeSource::GraphB, NodeSource::Fused})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Kind pairs that embedding alignment may bridge (either orientation).
inline bool is_alignment_bridge(NodeKind a, NodeKind b) {
  auto is = [&](NodeKind x, NodeKind y) { return (a == x && b == y) || (a == y && b == x); };
  return is(NodeKind::Diagnosis, NodeKind::Disease) || is(NodeKind::Phenotype, NodeKind::ClinicalPhenotype);
}

inline bool is_fusable(NodeKind a, NodeKind b) { return a == b || is_alignment_bridge(a, b); }

struct Node {
  std::string id;
  std::string name;
  NodeKind kind = NodeKind::PhysicalEntity;
  NodeSource source = NodeSource::GraphA;
  std::set<std::string> external_ids;
  std::vector<std::string> aliases;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  std::string src;
  std::string dst;
  std::string relation;
  double weight = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

inline bool edge_less(const Edge& x, const Edge& y) {
  return std::tie(x.src, x.dst, x.relation, x.weight) < std::tie(y.src, y.dst, y.relation, y.weight);
}

/// Immutable after construction. Nodes are kept sorted by id and edges in
/// (src, dst, relation, weight) order, so construction is order-independent.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// When `relations` is empty the vocabulary is inferred from the edges;
  /// otherwise every edge relation must be declared in it.
  KnowledgeGraph(std::vector<Node> nodes, std::vector<Edge> edges, std::set<std::string> relations = {})
      : nodes_(std::move(nodes)), edges_(std::move(edges)), relations_(std::move(relations)) {
    std::sort(nodes_.begin(), nodes_.end(), [](const Node& x, const Node& y) { return x.id < y.id; });
    index_.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].id.empty()) throw Error(ErrorKind::InvalidArgument, "node with empty id");
      if (!index_.emplace(nodes_[i].id, i).second) throw Error(ErrorKind::DuplicateId, "node id " + nodes_[i].id);
    }
    const bool infer = relations_.empty();
    for (const auto& e : edges_) {
      if (!index_.count(e.src)) throw Error(ErrorKind::DanglingEdge, "edge source " + e.src);
      if (!index_.count(e.dst)) throw Error(ErrorKind::DanglingEdge, "edge target " + e.dst);
      if (!(e.weight > 0.0) || !std::isfinite(e.weight))
        throw Error(ErrorKind::InvalidArgument, "edge weight must be positive and finite");
      if (e.relation.empty()) throw Error(ErrorKind::InvalidArgument, "edge with empty relation");
      if (infer)
        relations_.insert(e.relation);
      else if (!relations_.count(e.relation))
        throw Error(ErrorKind::InvalidArgument, "relation not declared: " + e.relation);
    }
    std::sort(edges_.begin(), edges_.end(), edge_less);
    out_.assign(nodes_.size(), {});
    in_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      out_[index_.at(edges_[i].src)].push_back(i);
      in_[index_.at(edges_[i].dst)].push_back(i);
    }
  }

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }
  const std::set<std::string>& relations() const { return relations_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::optional<std::size_t> index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Node* find(std::string_view id) const {
    auto i = index_of(id);
    return i ? &nodes_[*i] : nullptr;
  }

  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const Edge& edge(std::size_t i) const { return edges_.at(i); }
  std::span<const std::size_t> out_edges(std::size_t node_idx) const { return out_.at(node_idx); }
  std::span<const std::size_t> in_edges(std::size_t node_idx) const { return in_.at(node_idx); }

  std::size_t degree(std::string_view id) const {
    auto i = index_of(id);
    if (!i) return 0;
    std::size_t self = 0;
    for (auto e : out_[*i])
      if (edges_[e].dst == edges_[e].src) ++self;
    return out_[*i].size() + in_[*i].size() - self;
  }

  friend bool operator==(const KnowledgeGraph& x, const KnowledgeGraph& y) {
    return x.nodes_ == y.nodes_ && x.edges_ == y.edges_ && x.relations_ == y.relations_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::set<std::string> relations_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Node& n) {
  nlohmann::json j{{"id", n.id},
                   {"name", n.name},
                   {"kind", std::string(to_string(n.kind))},
                   {"source", std::string(to_string(n.source))},
                   {"external_ids", n.external_ids}};
  if (!n.aliases.empty()) j["aliases"] = n.aliases;
  return j;
}

inline nlohmann::json to_json(const KnowledgeGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes()) nodes.push_back(to_json(n));
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges())
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}, {"weight", e.weight}});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"relations", g.relations()}};
}

inline std::string dump_graph(const KnowledgeGraph& g) { return to_json(g).dump(2) + "\n"; }

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const char* where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::MalformedFile, std::string(where) + " lacks \"" + key + "\"");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw Error(ErrorKind::MalformedFile, std::string(where) + " field \"" + key + "\" is not a string");
  return v.get<std::string>();
}

inline std::vector<std::string> string_array(const nlohmann::json& obj, const char* key, const char* where) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) throw Error(ErrorKind::MalformedFile, std::string(where) + " field \"" + key + "\" is not an array");
  for (const auto& v : *it) {
    if (!v.is_string()) throw Error(ErrorKind::MalformedFile, std::string(where) + " \"" + key + "\" holds a non-string");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parses the graph JSON document. Edge weight defaults to 1.0.
inline KnowledgeGraph parse_graph(std::string_view json_text) {
  auto doc = nlohmann::json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorKind::MalformedFile, "graph document is not a JSON object");

  std::vector<Node> nodes;
  if (auto it = doc.find("nodes"); it != doc.end()) {
    if (!it->is_array()) throw Error(ErrorKind::MalformedFile, "\"nodes\" is not an array");
    for (const auto& jn : *it) {
      if (!jn.is_object()) throw Error(ErrorKind::MalformedFile, "node entry is not an object");
      Node n;
      n.id = detail::require_string(jn, "id", "node");
      n.name = detail::require_string(jn, "name", "node");
      auto kind = parse_node_kind(detail::require_string(jn, "kind", "node"));
      if (!kind) throw Error(ErrorKind::MalformedFile, "node " + n.id + " has an unknown kind");
      n.kind = *kind;
      if (jn.contains("source")) {
        auto src = parse_node_source(detail::require_string(jn, "source", "node"));
        if (!src) throw Error(ErrorKind::MalformedFile, "node " + n.id + " has an unknown source");
        n.source = *src;
      }
      for (auto& x : detail::string_array(jn, "external_ids", "node")) n.external_ids.insert(std::move(x));
      n.aliases = detail::string_array(jn, "aliases", "node");
      nodes.push_back(std::move(n));
    }
  }

  std::vector<Edge> edges;
  if (auto it = doc.find("edges"); it != doc.end()) {
    if (!it->is_array()) throw Error(ErrorKind::MalformedFile, "\"edges\" is not an array");
    for (const auto& je : *it) {
      if (!je.is_object()) throw Error(ErrorKind::MalformedFile, "edge entry is not an object");
      Edge e;
      e.src = detail::require_string(je, "src", "edge");
      e.dst = detail::require_string(je, "dst", "edge");
      e.relation = detail::require_string(je, "relation", "edge");
      if (auto w = je.find("weight"); w != je.end()) {
        if (!w->is_number()) throw Error(ErrorKind::MalformedFile, "edge weight is not a number");
        e.weight = w->get<double>();
        if (!(e.weight > 0.0) || !std::isfinite(e.weight))
          throw Error(ErrorKind::MalformedFile, "edge weight must be positive");
      }
      edges.push_back(std::move(e));
    }
  }

  std::set<std::string> relations;
  const bool declared = doc.contains("relations");
  for (auto& r : detail::string_array(doc, "relations", "graph")) relations.insert(std::move(r));
  if (declared) {
    for (const auto& e : edges)
      if (!relations.count(e.relation))
        throw Error(ErrorKind::MalformedFile, "edge relation \"" + e.relation + "\" is not declared");
    if (relations.empty() && !edges.empty()) throw Error(ErrorKind::MalformedFile, "empty relation vocabulary");
  }

  try {
    return KnowledgeGraph(std::move(nodes), std::move(edges), std::move(relations));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DanglingEdge) throw;
    throw Error(ErrorKind::MalformedFile, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

inline KnowledgeGraph load_graph(const std::string& path) { return parse_graph(read_file(path)); }
inline void save_graph(const KnowledgeGraph& g, const std::string& path) { write_file(path, dump_graph(g)); }

// ---------------------------------------------------------------------------
// Alignment

enum class AlignMethod { ExactId, Embedding };

constexpr std::string_view to_string(AlignMethod m) { return m == AlignMethod::ExactId ? "ExactId" : "Embedding"; }

struct AlignmentPair {
  std::string a_id;
  std::string b_id;
  AlignMethod method = AlignMethod::ExactId;
  double score = 1.0;

  friend bool operator==(const AlignmentPair&, const AlignmentPair&) = default;
};

struct AlignmentMap {
  std::vector<AlignmentPair> pairs;
  friend bool operator==(const AlignmentMap&, const AlignmentMap&) = default;
};

inline constexpr double kDefaultAlignThreshold = 0.85;

/// Aligns nodes of `a` with nodes of `b`. Shared external ids align first
/// (score 1.0). Remaining Diagnosis/Disease and Phenotype/ClinicalPhenotype
/// pairs whose name cosine exceeds `threshold` are then matched greedily by
/// descending similarity, ties broken by (a id, b id). Each node is used once.
inline AlignmentMap align_nodes(const KnowledgeGraph& a, const KnowledgeGraph& b, const EmbeddingProvider& embedder,
                                double threshold = kDefaultAlignThreshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorKind::BadConfig, "alignment threshold must lie in (0,1]");
  AlignmentMap out;
  std::vector<bool> used_a(a.node_count(), false), used_b(b.node_count(), false);

  std::map<std::string, std::vector<std::size_t>> by_ext;
  for (std::size_t j = 0; j < b.node_count(); ++j)
    for (const auto& x : b.node(j).external_ids) by_ext[x].push_back(j);
  std::set<std::pair<std::size_t, std::size_t>> exact;  // node order == id order
  for (std::size_t i = 0; i < a.node_count(); ++i)
    for (const auto& x : a.node(i).external_ids)
      if (auto it = by_ext.find(x); it != by_ext.end())
        for (auto j : it->second) exact.emplace(i, j);
  for (auto [i, j] : exact) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    out.pairs.push_back({a.node(i).id, b.node(j).id, AlignMethod::ExactId, 1.0});
  }

  auto bridged = [](NodeKind k) {
    return k == NodeKind::Diagnosis || k == NodeKind::Disease || k == NodeKind::Phenotype ||
           k == NodeKind::ClinicalPhenotype;
  };
  std::map<std::size_t, Vector> emb_a, emb_b;
  for (std::size_t i = 0; i < a.node_count(); ++i)
    if (!used_a[i] && bridged(a.node(i).kind)) emb_a.emplace(i, embed_checked(embedder, a.node(i).name));
  for (std::size_t j = 0; j < b.node_count(); ++j)
    if (!used_b[j] && bridged(b.node(j).kind)) emb_b.emplace(j, embed_checked(embedder, b.node(j).name));

  struct Candidate {
    double sim;
    std::size_t i, j;
  };
  std::vector<Candidate> cands;
  for (const auto& [i, va] : emb_a)
    for (const auto& [j, vb] : emb_b) {
      if (!is_alignment_bridge(a.node(i).kind, b.node(j).kind)) continue;
      double s = cosine_similarity(va, vb);
      if (s > threshold) cands.push_back({s, i, j});
    }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.sim != y.sim) return x.sim > y.sim;
    return std::tie(x.i, x.j) < std::tie(y.i, y.j);
  });
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    out.pairs.push_back({a.node(c.i).id, b.node(c.j).id, AlignMethod::Embedding, c.sim});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fusion, pruning, statistics

/// Collapses each aligned pair into one Fused node that keeps the id, name and
/// kind of the `a` side, the union of external ids, and both names as aliases.
/// Edges of both graphs are retargeted onto fused nodes.
inline KnowledgeGraph fuse_graphs(const KnowledgeGraph& a, const KnowledgeGraph& b, const AlignmentMap& alignment) {
  std::map<std::string, std::string> b_to_a;
  std::set<std::string> a_aligned;
  for (const auto& p : alignment.pairs) {
    const Node* na = a.find(p.a_id);
    const Node* nb = b.find(p.b_id);
    if (!na || !nb) throw Error(ErrorKind::InvalidArgument, "alignment references unknown node " + p.a_id + "/" + p.b_id);
    if (!a_aligned.insert(p.a_id).second || !b_to_a.emplace(p.b_id, p.a_id).second)
      throw Error(ErrorKind::InvalidArgument, "node aligned twice: " + p.a_id + "/" + p.b_id);
    if (!is_fusable(na->kind, nb->kind))
      throw Error(ErrorKind::ConflictingKinds, p.a_id + " (" + std::string(to_string(na->kind)) + ") vs " + p.b_id +
                                                   " (" + std::string(to_string(nb->kind)) + ")");
  }

  std::vector<Node> nodes;
  nodes.reserve(a.node_count() + b.node_count() - alignment.pairs.size());
  std::map<std::string, const Node*> partner;
  for (const auto& p : alignment.pairs) partner[p.a_id] = b.find(p.b_id);
  for (const auto& n : a.nodes()) {
    auto it = partner.find(n.id);
    if (it == partner.end()) {
      nodes.push_back(n);
      continue;
    }
    const Node& other = *it->second;
    Node fused = n;
    fused.source = NodeSource::Fused;
    fused.external_ids.insert(other.external_ids.begin(), other.external_ids.end());
    std::set<std::string> aliases(n.aliases.begin(), n.aliases.end());
    aliases.insert(other.aliases.begin(), other.aliases.end());
    aliases.insert(n.name);
    aliases.insert(other.name);
    fused.aliases.assign(aliases.begin(), aliases.end());
    nodes.push_back(std::move(fused));
  }
  for (const auto& n : b.nodes())
    if (!b_to_a.count(n.id)) nodes.push_back(n);

  auto retarget = [&](const std::string& id) -> const std::string& {
    auto it = b_to_a.find(id);
    return it == b_to_a.end() ? id : it->second;
  };
  std::vector<Edge> edges(a.edges().begin(), a.edges().end());
  for (const auto& e : b.edges()) edges.push_back({retarget(e.src), retarget(e.dst), e.relation, e.weight});

  std::set<std::string> relations = a.relations();
  relations.insert(b.relations().begin(), b.relations().end());
  return KnowledgeGraph(std::move(nodes), std::move(edges), std::move(relations));
}

/// Connected components in the undirected sense, as sorted lists of node
/// indices, in order of their smallest member.
inline std::vector<std::vector<std::size_t>> connected_components(const KnowledgeGraph& g) {
  std::vector<std::size_t> parent(g.node_count());
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges()) {
    auto x = root(*g.index_of(e.src)), y = root(*g.index_of(e.dst));
    if (x != y) parent[std::max(x, y)] = std::min(x, y);
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.node_count(); ++i) groups[root(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [r, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return out;
}

/// Deduplicates (src, dst, relation) edges keeping the lowest weight, then
/// keeps only the largest connected component (ties: smallest node id).
inline KnowledgeGraph prune_graph(const KnowledgeGraph& g) {
  if (g.empty()) throw Error(ErrorKind::EmptyGraph, "cannot prune an empty graph");
  auto comps = connected_components(g);
  const std::vector<std::size_t>* best = &comps.front();
  for (const auto& c : comps)
    if (c.size() > best->size()) best = &c;
  std::set<std::string> keep;
  std::vector<Node> nodes;
  for (auto i : *best) {
    keep.insert(g.node(i).id);
    nodes.push_back(g.node(i));
  }
  std::vector<Edge> edges;
  for (const auto& e : g.edges()) {  // sorted: duplicates are adjacent, lowest weight first
    if (!keep.count(e.src)) continue;
    if (!edges.empty() && edges.back().src == e.src && edges.back().dst == e.dst && edges.back().relation == e.relation)
      continue;
    edges.push_back(e);
  }
  return KnowledgeGraph(std::move(nodes), std::move(edges), g.relations());
}

struct GraphStats {
  std::map<NodeKind, std::size_t> nodes_by_kind;
  std::size_t total_nodes = 0;
  std::size_t total_edges = 0;
  std::size_t relation_count = 0;
};

inline GraphStats graph_stats(const KnowledgeGraph& g) {
  GraphStats s;
  for (auto k : kAllNodeKinds) s.nodes_by_kind[k] = 0;
  for (const auto& n : g.nodes()) ++s.nodes_by_kind[n.kind];
  s.total_nodes = g.node_count();
  s.total_edges = g.edge_count();
  s.relation_count = g.relations().size();
  return s;
}

inline nlohmann::json to_json(const GraphStats& s) {
  nlohmann::json by_kind = nlohmann::json::object();
  for (const auto& [k, n] : s.nodes_by_kind) by_kind[std::string(to_string(k))] = n;
  return {{"nodes_by_kind", by_kind},
          {"total_nodes", s.total_nodes},
          {"total_edges", s.total_edges},
          {"relation_count", s.relation_count}};
}

inline nlohmann::json to_json(const AlignmentMap& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : m.pairs)
    arr.push_back({{"a", p.a_id}, {"b", p.b_id}, {"method", std::string(to_string(p.method))}, {"score", p.score}});
  return arr;
}

}  // namespace pathforge
