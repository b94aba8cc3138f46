#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <random>

#include "pathforge/reasoning.hpp"
#include "support.hpp"

using namespace pathforge;
using pathforge::testing::data_path;
using pathforge::testing::fixture_path;
using pathforge::testing::make_node;

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

struct Best {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::string> nodes;
  bool found = false;
};

// Enumerates every simple path s -> t choosing any edge per hop (forward at
// weight x multiplier, backward at twice that); returns the cheapest, ties to
// the smallest node-id sequence.
Best brute_force(const KnowledgeGraph& g, const std::string& s, const std::string& t, const PathOptions& opt) {
  Best best;
  std::vector<std::string> path{s};
  std::set<std::string> on_path{s};
  std::function<void(double)> dfs = [&](double cost) {
    const std::string u = path.back();
    if (u == t) {
      if (cost <= opt.max_cost &&
          (!best.found || cost < best.cost || (cost == best.cost && path < best.nodes))) {
        best = {cost, path, true};
      }
      return;
    }
    for (const auto& e : g.edges()) {
      double m = relation_multiplier(opt.priority, e.relation);
      std::string next;
      double step;
      for (int dir = 0; dir < 2; ++dir) {
        if (dir == 0 && e.src == u) {
          next = e.dst;
          step = e.weight * m;
        } else if (dir == 1 && e.dst == u) {
          next = e.src;
          step = 2 * e.weight * m;
        } else {
          continue;
        }
        if (on_path.count(next)) continue;
        path.push_back(next);
        on_path.insert(next);
        dfs(cost + step);
        on_path.erase(next);
        path.pop_back();
      }
    }
  };
  dfs(0.0);
  return best;
}

KnowledgeGraph random_graph(std::mt19937_64& rng) {
  std::size_t n = 2 + rng() % 9;  // 2..10 nodes
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "v%02zu", i);
    nodes.push_back(make_node(id, id, NodeKind::Phenotype));
  }
  std::vector<Edge> edges;
  const char* rels[] = {"hasSupportEvidence", "hasContradictEvidence", "excludes", "siteOf", "adjacentTo"};
  std::size_t m = rng() % (2 * n + 2);
  for (std::size_t k = 0; k < m; ++k) {
    auto a = rng() % n, b = rng() % n;
    if (a == b) continue;
    edges.push_back({nodes[a].id, nodes[b].id, rels[rng() % 5], static_cast<double>(1 + rng() % 3)});
  }
  return KnowledgeGraph(nodes, edges);
}

}  // namespace

TEST(Extraction, ExtractionPayloadHasEightMentions) {
  auto ms = parse_extraction(read_file(data_path("bronchus_extraction.json")));
  ASSERT_EQ(ms.size(), 8u);
  std::vector<std::string> labels;
  for (const auto& m : ms) labels.push_back(m.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"E1", "E2", "E3", "P1", "P2", "P3", "D1", "D2"}));
  EXPECT_EQ(ms[1].text, "Basement membrane");
  EXPECT_EQ(ms[0].kind, MentionKind::PhysicalEntity);
  EXPECT_EQ(ms[3].kind, MentionKind::Phenotype);
  EXPECT_EQ(ms[7].kind, MentionKind::Diagnosis);
}

TEST(Extraction, EmptyAndErrors) {
  EXPECT_TRUE(parse_extraction(R"({"extracted_entities":[]})").empty());
  EXPECT_EQ(error_kind_of([] { parse_extraction(R"({"extracted_entities":[{"id":"G1","name":"TP53","type":"Gene"}]})"); }),
            ErrorKind::UnknownSchemaKind);
  EXPECT_EQ(error_kind_of([] { parse_extraction("{not json"); }), ErrorKind::MalformedJson);
  EXPECT_EQ(error_kind_of([] { parse_extraction(R"({"entities":[]})"); }), ErrorKind::MalformedJson);
  EXPECT_EQ(error_kind_of([] {
              parse_extraction(R"({"extracted_entities":[{"id":"E1","name":"a","type":"Structure"},
                                                         {"id":"E1","name":"b","type":"Structure"}]})");
            }),
            ErrorKind::MalformedJson);
}

TEST(Anchor, ExactNormalizedEmbeddingUnanchored) {
  KnowledgeGraph g({make_node("n1", "Basement membrane", NodeKind::PhysicalEntity),
                    make_node("n2", "Nuclear Atypia", NodeKind::Phenotype),
                    make_node("n3", "Squamous Cell Carcinoma", NodeKind::Diagnosis)},
                   {});
  auto emb = MockEmbedder::without_defaults();
  emb.script_pair("Nuclear Atypia", "enlarged atypical nuclei", 0.91);
  emb.script_pair("Squamous Cell Carcinoma", "epidermoid cancer", 0.80);
  std::vector<EntityMention> ms{{"E1", "Basement membrane", MentionKind::PhysicalEntity},
                                {"E2", "  basement MEMBRANE ", MentionKind::PhysicalEntity},
                                {"P1", "enlarged atypical nuclei", MentionKind::Phenotype},
                                {"D1", "epidermoid cancer", MentionKind::Diagnosis}};
  auto a = anchor_mentions(ms, g, emb, 0.85);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0].method, AnchorMethod::Exact);
  EXPECT_EQ(a[0].score, 1.0);
  EXPECT_EQ(a[1].method, AnchorMethod::Normalized);
  EXPECT_EQ(a[1].node_id, "n1");
  EXPECT_EQ(a[2].method, AnchorMethod::Embedding);
  EXPECT_EQ(a[2].node_id, "n2");
  EXPECT_NEAR(a[2].score, 0.91, 1e-12);
  EXPECT_EQ(a[3].method, AnchorMethod::Unanchored);
  EXPECT_FALSE(a[3].node_id);
  EXPECT_EQ(a[3].score, 0.0);
  EXPECT_EQ(a[3].mention, ms[3]);
}

TEST(Anchor, EmbeddingRespectsKindCompatibility) {
  KnowledgeGraph g({make_node("n1", "keratin pearls", NodeKind::PhysicalEntity)}, {});
  auto emb = MockEmbedder::without_defaults();
  emb.script_pair("keratin pearls", "squamous pearls", 0.95);
  auto a = anchor_mentions(std::vector<EntityMention>{{"P1", "squamous pearls", MentionKind::Phenotype}}, g, emb, 0.85);
  EXPECT_EQ(a[0].method, AnchorMethod::Unanchored);
}

TEST(Anchor, ExactNamesAlwaysAnchorExactly) {
  auto g = load_graph(data_path("graph_a.json"));
  MockEmbedder emb;
  Anchorer anchorer(g, emb);
  for (const auto& n : g.nodes()) {
    auto r = anchorer.anchor_text(n.name, {});
    EXPECT_EQ(r.method, AnchorMethod::Exact) << n.name;
    EXPECT_EQ(r.node_id, n.id);
    EXPECT_EQ(anchorer.anchor_text(n.name, {}), r);
  }
}

TEST(Anchor, AliasesResolve) {
  auto g = load_graph(data_path("bronchus_graph.json"));
  MockEmbedder emb;
  auto a = anchor_mentions(parse_extraction(read_file(data_path("bronchus_extraction.json"))), g, emb);
  std::map<std::string, std::optional<std::string>> by_label;
  for (const auto& x : a) by_label[x.mention.label] = x.node_id;
  EXPECT_EQ(by_label["E2"], "basement_membrane");
  EXPECT_EQ(by_label["P1"], "invasion");
  EXPECT_EQ(by_label["D1"], "squamous_cell_carcinoma");
  EXPECT_EQ(by_label["D2"], "adenocarcinoma");
}

TEST(Paths, MatchesBruteForceOnRandomGraphs) {
  std::mt19937_64 rng(6);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_graph(rng);
    PathOptions opt;
    if (trial % 3 == 1) opt.priority = {};
    if (trial % 3 == 2) opt.priority["siteOf"] = 2.0;
    opt.max_cost = trial % 4 == 0 ? 3.0 : 12.0;
    std::vector<std::string> starts{g.node(0).id}, ends;
    if (g.node_count() > 2) starts.push_back(g.node(1).id);
    for (std::size_t i = 0; i < g.node_count(); ++i) ends.push_back(g.node(i).id);
    auto got = retrieve_paths(g, starts, ends, opt);
    std::size_t k = 0;
    for (const auto& s : starts)
      for (const auto& t : ends) {
        auto want = brute_force(g, s, t, opt);
        if (!want.found) continue;
        ASSERT_LT(k, got.size());
        const auto& p = got[k++];
        EXPECT_EQ(p.nodes, want.nodes) << "trial " << trial << " " << s << "->" << t;
        EXPECT_EQ(p.cost, want.cost) << "trial " << trial;
        EXPECT_TRUE(validate_path(g, p));
        ++compared;
      }
    EXPECT_EQ(k, got.size()) << "extra paths in trial " << trial;
  }
  EXPECT_GT(compared, 200);
}

TEST(Paths, PriorityDiscountFlipsRoute) {
  auto g = load_graph(fixture_path("priority_flip.json"));
  std::vector<std::string> s{"s"}, d{"d"};
  PathOptions uniform;
  uniform.priority = {};
  auto plain = retrieve_paths(g, s, d, uniform);
  auto discounted = retrieve_paths(g, s, d, PathOptions{});
  ASSERT_EQ(plain.size(), 1u);
  ASSERT_EQ(discounted.size(), 1u);
  EXPECT_EQ(plain[0].nodes, (std::vector<std::string>{"s", "x", "d"}));
  EXPECT_EQ(plain[0].cost, 2.0);
  EXPECT_EQ(discounted[0].nodes, (std::vector<std::string>{"s", "y", "z", "d"}));
  EXPECT_EQ(discounted[0].cost, 1.5);
  EXPECT_EQ(discounted[0].relations,
            (std::vector<std::string>{"hasSupportEvidence", "hasSupportEvidence", "hasSupportEvidence"}));
  EXPECT_EQ(brute_force(g, "s", "d", PathOptions{}).nodes, discounted[0].nodes);
}

TEST(Paths, BronchusSupportPathRecovered) {
  auto g = load_graph(data_path("bronchus_graph.json"));
  MockEmbedder emb;
  auto anchors = anchor_mentions(parse_extraction(read_file(data_path("bronchus_extraction.json"))), g, emb);
  std::vector<std::string> starts, ends;
  for (const auto& a : anchors)
    if (a.node_id) (a.mention.kind == MentionKind::Diagnosis ? ends : starts).push_back(*a.node_id);
  auto paths = retrieve_paths(g, starts, ends);
  bool found = false;
  for (const auto& p : paths)
    if (p.nodes.front() == "basement_membrane" && p.nodes.back() == "squamous_cell_carcinoma") {
      EXPECT_EQ(p.nodes, (std::vector<std::string>{"basement_membrane", "invasion", "squamous_cell_carcinoma"}));
      EXPECT_EQ(p.relations, (std::vector<std::string>{"siteOf", "keyFeatureOf"}));
      EXPECT_EQ(p.role, PathRole::Support);
      EXPECT_EQ(render_path(g, p), "[Basement Membrane] --siteOf--> [Invasion] --keyFeatureOf--> [Squamous Cell Carcinoma]");
      found = true;
    }
  EXPECT_TRUE(found);
}

TEST(Paths, RolesAndDegenerateCases) {
  KnowledgeGraph g({make_node("a", "A", NodeKind::Phenotype), make_node("b", "B", NodeKind::Diagnosis),
                    make_node("c", "C", NodeKind::Diagnosis), make_node("e", "E", NodeKind::Phenotype)},
                   {{"b", "a", "hasContradictEvidence"}, {"c", "a", "excludes"}, {"e", "a", "hasContradictEvidence"}});
  std::vector<std::string> s{"a"}, ends{"a", "b", "c"};
  auto p = retrieve_paths(g, s, ends);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].nodes, (std::vector<std::string>{"a"}));
  EXPECT_EQ(p[0].cost, 0.0);
  EXPECT_EQ(p[0].role, PathRole::Support);
  EXPECT_EQ(p[1].role, PathRole::Contrast);
  EXPECT_EQ(p[1].reversed, (std::vector<bool>{true}));
  EXPECT_EQ(p[1].cost, 1.0);
  EXPECT_EQ(p[2].role, PathRole::Exclusion);
  EXPECT_EQ(render_path(g, p[2]), "[A] <--excludes-- [C]");
  std::vector<std::string> none;
  EXPECT_EQ(error_kind_of([&] { retrieve_paths(g, none, ends); }), ErrorKind::NoStarts);
  EXPECT_EQ(error_kind_of([&] { retrieve_paths(g, s, none); }), ErrorKind::NoEnds);
  PathOptions bad;
  bad.priority["excludes"] = 0.0;
  EXPECT_EQ(error_kind_of([&] { retrieve_paths(g, s, ends, bad); }), ErrorKind::BadConfig);
  // e is unreachable within max_cost 0.5
  PathOptions tight;
  tight.max_cost = 0.5;
  std::vector<std::string> e{"e"};
  EXPECT_TRUE(retrieve_paths(g, s, e, tight).empty());
}

TEST(Paths, LoweringAMultiplierNeverRaisesCost) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    auto g = random_graph(rng);
    std::vector<std::string> starts{g.node(0).id}, ends;
    for (std::size_t i = 0; i < g.node_count(); ++i) ends.push_back(g.node(i).id);
    PathOptions hi, lo;
    hi.priority = {{"siteOf", 1.0}, {"hasSupportEvidence", 1.0}};
    lo.priority = {{"siteOf", 0.25}, {"hasSupportEvidence", 0.5}};
    hi.max_cost = lo.max_cost = 100;
    auto ph = retrieve_paths(g, starts, ends, hi);
    auto pl = retrieve_paths(g, starts, ends, lo);
    ASSERT_EQ(ph.size(), pl.size());
    for (std::size_t i = 0; i < ph.size(); ++i) EXPECT_LE(pl[i].cost, ph[i].cost);
  }
}

TEST(Paths, JsonRoundTrip) {
  auto g = load_graph(data_path("bronchus_graph.json"));
  std::vector<std::string> s{"glandular_structures"}, e{"squamous_cell_carcinoma"};
  auto p = retrieve_paths(g, s, e);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].role, PathRole::Exclusion);
  auto back = path_from_json(nlohmann::json::parse(to_json(p[0]).dump()));
  EXPECT_EQ(back.nodes, p[0].nodes);
  EXPECT_EQ(back.relations, p[0].relations);
  EXPECT_EQ(back.reversed, p[0].reversed);
  EXPECT_EQ(back.cost, p[0].cost);
  EXPECT_EQ(back.role, p[0].role);
}
