#pragma once

// Command-line front end. Exit codes: 0 ok, 1 validation error, 2 service
// failure.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathforge/config.hpp"
#include "pathforge/corpus.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/http_client.hpp"
#include "pathforge/kg.hpp"
#include "pathforge/metrics.hpp"
#include "pathforge/mocks.hpp"
#include "pathforge/reasoning.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/synthesis.hpp"

namespace pathforge::cli {

inline constexpr std::string_view kExtractionPrompt =
    "You are a pathology information extraction assistant. List every physical entity (anatomical structure, tissue "
    "or cell population), phenotype (morphological or clinical finding) and diagnosis named in the report below.\n"
    "Return only JSON of the form {\"extracted_entities\":[{\"id\":\"E1\",\"name\":\"...\",\"type\":"
    "\"Structure\"}]} where type is one of Structure, Phenotype, Diagnosis and ids use the prefixes E, P and D.\n"
    "Report: {report}";

inline std::string build_extraction_prompt(std::string_view report) {
  return fill_slot(kExtractionPrompt, "report", text::collapse_space(report));
}

// ---------------------------------------------------------------------------
// IO helpers

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorKind::MalformedRecord, path + ":" + std::to_string(n) + ": not a JSON object");
    out.push_back(std::move(j));
  }
  return out;
}

template <typename Range>
std::string to_jsonl(const Range& items) {
  std::string out;
  for (const auto& x : items) out += to_json(x).dump() + "\n";
  return out;
}

struct Session {
  PipelineConfig config;
  std::ostream& out;
  std::ostream& err;

  void emit(const std::string& path, std::string_view content) const {
    if (path.empty() || path == "-")
      out << content;
    else
      write_file(path, content);
  }

  MockEmbedder embedder() const { return MockEmbedder(); }

  std::unique_ptr<LlmClient> client(Role role) const {
    int inflight = config.services.at(role).max_inflight;
    if (config.mock) {
      switch (role) {
        case Role::Extractor:
          return make_mock_extractor(inflight);
        case Role::Generator:
          return make_mock_generator(inflight);
        case Role::Judge:
          return make_mock_judge(inflight);
      }
    }
    auto cc = config.client_config(role);
    if (cc.endpoint.empty())
      throw Error(ErrorKind::BadConfig,
                  "services." + std::string(to_string(role)) + ".endpoint is required without --mock");
    return std::make_unique<HttpLlmClient>(cc);
  }
};

inline std::vector<AnchoredEntity> read_anchors(const std::string& path) {
  std::vector<AnchoredEntity> out;
  for (const auto& j : read_jsonl(path)) out.push_back(anchored_from_json(j));
  return out;
}

inline std::vector<Triplet> read_triplets(const std::string& path) {
  std::vector<Triplet> out;
  for (const auto& j : read_jsonl(path)) out.push_back(triplet_from_json(j));
  return out;
}

/// Finding anchors (physical entities, phenotypes) start paths; diagnosis
/// anchors end them. Duplicates keep their first position.
inline std::pair<std::vector<std::string>, std::vector<std::string>> path_endpoints(
    std::span<const AnchoredEntity> anchors) {
  std::vector<std::string> starts, ends;
  auto add = [](std::vector<std::string>& v, const std::string& id) {
    if (std::find(v.begin(), v.end(), id) == v.end()) v.push_back(id);
  };
  for (const auto& a : anchors) {
    if (!a.node_id) continue;
    add(a.mention.kind == MentionKind::Diagnosis ? ends : starts, *a.node_id);
  }
  return {starts, ends};
}

// ---------------------------------------------------------------------------
// Stages

struct CaseRecord {
  std::string case_id;
  std::string cancer_type;
  std::string question;
  std::string report;
  std::optional<std::string> extraction;  // mock fixture reply
};

inline CaseRecord case_from_json(const nlohmann::json& j) {
  try {
    CaseRecord c;
    c.case_id = j.at("case_id").get<std::string>();
    c.cancer_type = j.value("cancer_type", "");
    c.question = j.value("question", std::string(kDefaultQuestion));
    c.report = j.at("report").get<std::string>();
    if (auto it = j.find("extraction"); it != j.end()) c.extraction = it->dump();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

/// Extraction -> anchoring -> path retrieval -> generation for one case.
/// Cases without usable paths yield nothing.
inline std::optional<Triplet> synthesize_case(const CaseRecord& c, LlmClient& extractor, LlmClient& generator,
                                              const KnowledgeGraph& g, const Anchorer& anchorer,
                                              const PathOptions& popt, PromptTemplate templ, std::ostream& err) {
  auto reply = extractor.request(build_extraction_prompt(c.report));
  auto mentions = parse_extraction(reply);
  std::vector<AnchoredEntity> anchors;
  for (const auto& m : mentions) anchors.push_back(anchorer.anchor(m));
  auto [starts, ends] = path_endpoints(anchors);
  std::vector<ReasoningPath> paths;
  try {
    paths = retrieve_paths(g, starts, ends, popt);
    if (paths.empty()) throw Error(ErrorKind::NoPaths, "no path within max_cost");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoStarts && e.kind() != ErrorKind::NoEnds && e.kind() != ErrorKind::NoPaths) throw;
    err << "synth: skipping case " << c.case_id << ": " << e.what() << "\n";
    return std::nullopt;
  }
  SynthesisInput in{build_generation_prompt(paths, anchors, templ, g, c.question), anchors, paths,
                    TripletMeta{c.case_id, c.cancer_type, "synthesized", {}}};
  return synthesize_triplet(in, generator, g);
}

// ---------------------------------------------------------------------------
// Dispatch

namespace detail {

inline int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return e.is_service_failure() ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error [MalformedRecord]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Knowledge-graph guided pathology reasoning data and reward toolkit", "pathforge"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  bool mock = false;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file");
  app.add_flag("--mock", mock, "use offline mock services");
  app.add_option("--jobs", jobs, "per-sample parallelism")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed");

  // kg
  auto* kg = app.add_subcommand("kg", "knowledge graph tools");
  kg->require_subcommand(1);
  std::string kg_a, kg_b, kg_out, kg_align_out, kg_in;
  bool kg_no_prune = false;
  auto* kg_build = kg->add_subcommand("build", "align, fuse and prune two source graphs");
  kg_build->add_option("--a", kg_a, "first source graph")->required();
  kg_build->add_option("--b", kg_b, "second source graph")->required();
  kg_build->add_option("-o,--out", kg_out, "fused graph output");
  kg_build->add_option("--alignment", kg_align_out, "alignment map output");
  kg_build->add_flag("--no-prune", kg_no_prune, "keep every component");
  auto* kg_stats = kg->add_subcommand("stats", "node/edge/relation counts");
  kg_stats->add_option("graph", kg_in, "graph file")->required();
  auto* kg_prune = kg->add_subcommand("prune", "largest component, deduplicated edges");
  kg_prune->add_option("graph", kg_in, "graph file")->required();
  kg_prune->add_option("-o,--out", kg_out, "output graph");

  // anchor
  std::string graph_path, extraction_path, anchors_path, out_path, in_path;
  auto* anchor = app.add_subcommand("anchor", "anchor extracted mentions to graph nodes");
  anchor->add_option("--graph", graph_path)->required();
  anchor->add_option("--extraction", extraction_path, "extraction JSON")->required();
  anchor->add_option("-o,--out", out_path);

  // paths
  auto* paths = app.add_subcommand("paths", "retrieve reasoning paths between anchors");
  paths->add_option("--graph", graph_path)->required();
  paths->add_option("--anchors", anchors_path, "anchored entity JSONL")->required();
  paths->add_option("-o,--out", out_path);

  // synth
  std::string cases_path, template_name = "option1";
  auto* synth = app.add_subcommand("synth", "synthesize (Q, A, C) triplets from cases");
  synth->add_option("--graph", graph_path)->required();
  synth->add_option("--cases", cases_path, "case JSONL")->required();
  synth->add_option("--template", template_name, "option1|option2|option3");
  synth->add_option("-o,--out", out_path);

  // filter
  std::string dropped_path, verdicts_path;
  auto* filter = app.add_subcommand("filter", "apply the three-check quality filter");
  filter->add_option("--in", in_path, "triplet JSONL")->required();
  filter->add_option("-o,--out", out_path, "kept triplets");
  filter->add_option("--dropped", dropped_path, "dropped triplets with verdicts");
  filter->add_option("--verdicts", verdicts_path, "one verdict per input");

  // augment
  std::optional<std::size_t> sample_k;
  auto* augment = app.add_subcommand("augment", "emit the trajectory-masked SFT corpus");
  augment->add_option("--in", in_path, "triplet JSONL")->required();
  augment->add_option("-o,--out", out_path);
  augment->add_option("--sample", sample_k, "draw k truncation points per chain instead of all");

  // reward
  std::string pred_path, gt_path;
  bool reextract = false;
  std::optional<double> alpha;
  auto* reward = app.add_subcommand("reward", "score responses against references");
  reward->add_option("--pred", pred_path, "JSONL of {\"response\"}")->required();
  reward->add_option("--gt", gt_path, "triplet JSONL (answer, chain, entities)")->required();
  reward->add_option("--graph", graph_path)->required();
  reward->add_option("--alpha", alpha, "entity reward weight");
  reward->add_flag("--reextract", reextract, "derive reference entities from the chain text");
  reward->add_option("-o,--out", out_path);

  // grpo-demo
  std::size_t iters = 200;
  std::vector<double> candidate_rewards{0.2, 1.0, 2.4};
  std::string responses_path;
  auto* demo = app.add_subcommand("grpo-demo", "train the toy policy and print the reward trajectory");
  demo->add_option("--iters", iters);
  demo->add_option("--rewards", candidate_rewards, "per-candidate total rewards");
  demo->add_option("--responses", responses_path, "JSONL of {\"response\",\"answer\"} candidates scored via rewards");
  demo->add_option("--graph", graph_path, "graph for entity rewards with --responses");
  demo->add_option("-o,--out", out_path);

  // eval
  std::string summary_path;
  auto* eval = app.add_subcommand("eval", "lexical, embedding and judge metrics");
  eval->add_option("--in", in_path, "JSONL of {\"prediction\",\"reference\"}")->required();
  eval->add_option("-o,--out", out_path);
  eval->add_option("--summary", summary_path, "aggregate summary JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [" << to_string(ErrorKind::UnknownCommand) << "]: " << e.what() << "\n";
    return 1;
  }

  PipelineConfig cfg;
  int rc = detail::run_guarded(
      [&] {
        if (!config_path.empty()) cfg = load_config(config_path);
        if (mock) cfg.mock = true;
        if (jobs) cfg.jobs = *jobs;
        if (seed) cfg.seed = *seed;
        if (alpha) cfg.alpha = *alpha;
        cfg.validate();
      },
      err);
  if (rc != 0) return rc;
  Session s{cfg, out, err};

  return detail::run_guarded(
      [&] {
        if (kg_build->parsed()) {
          auto a = load_graph(kg_a), b = load_graph(kg_b);
          auto emb = s.embedder();
          auto map = align_nodes(a, b, emb, cfg.alignment_threshold);
          auto fused = fuse_graphs(a, b, map);
          if (!kg_no_prune) fused = prune_graph(fused);
          if (!kg_align_out.empty()) write_file(kg_align_out, to_json(map).dump(2) + "\n");
          s.emit(kg_out, dump_graph(fused));
        } else if (kg_stats->parsed()) {
          s.emit("", to_json(graph_stats(load_graph(kg_in))).dump(2) + "\n");
        } else if (kg_prune->parsed()) {
          s.emit(kg_out, dump_graph(prune_graph(load_graph(kg_in))));
        } else if (anchor->parsed()) {
          auto g = load_graph(graph_path);
          auto emb = s.embedder();
          auto mentions = parse_extraction(read_file(extraction_path));
          s.emit(out_path, to_jsonl(anchor_mentions(mentions, g, emb, cfg.anchor_threshold)));
        } else if (paths->parsed()) {
          auto g = load_graph(graph_path);
          auto anchors = read_anchors(anchors_path);
          auto [starts, ends] = path_endpoints(anchors);
          s.emit(out_path, to_jsonl(retrieve_paths(g, starts, ends, cfg.path_options())));
        } else if (synth->parsed()) {
          auto templ = parse_prompt_template(template_name);
          if (!templ) throw Error(ErrorKind::BadConfig, "--template must be option1, option2 or option3");
          auto g = load_graph(graph_path);
          auto emb = s.embedder();
          Anchorer anchorer(g, emb, cfg.anchor_threshold);
          std::vector<CaseRecord> cases;
          for (const auto& j : read_jsonl(cases_path)) cases.push_back(case_from_json(j));
          auto extractor = s.client(Role::Extractor);
          if (auto* m = dynamic_cast<MockLlmClient*>(extractor.get()))
            for (const auto& c : cases)
              if (c.extraction) m->add_fixture(build_extraction_prompt(c.report), *c.extraction);
          auto generator = s.client(Role::Generator);
          auto popt = cfg.path_options();
          std::ostringstream warnings;
          std::mutex warn_mu;
          auto results = parallel_map(
              std::span<const CaseRecord>(cases),
              [&](const CaseRecord& c) {
                std::ostringstream w;
                auto t = synthesize_case(c, *extractor, *generator, g, anchorer, popt, *templ, w);
                std::lock_guard lock(warn_mu);
                warnings << w.str();
                return t;
              },
              cfg.jobs);
          std::vector<Triplet> triplets;
          for (auto& t : results)
            if (t) triplets.push_back(std::move(*t));
          err << warnings.str();
          s.emit(out_path, to_jsonl(triplets));
        } else if (filter->parsed()) {
          auto triplets = read_triplets(in_path);
          auto judge = s.client(Role::Judge);
          auto res = filter_corpus(triplets, *judge, cfg.jobs);
          if (!dropped_path.empty()) {
            std::string d;
            for (const auto& [t, v] : res.dropped) {
              auto j = to_json(t);
              j["verdict"] = to_json(v);
              d += j.dump() + "\n";
            }
            write_file(dropped_path, d);
          }
          if (!verdicts_path.empty()) write_file(verdicts_path, to_jsonl(res.verdicts));
          s.emit(out_path, to_jsonl(res.kept));
        } else if (augment->parsed()) {
          std::vector<SftSample> samples;
          std::uint64_t k = 0;
          for (const auto& t : read_triplets(in_path)) {
            auto chain = segment_chain(t.chain);
            auto ref = t.meta.case_id;
            auto part = sample_k ? sample_trajectories(chain, ref, t.question, *sample_k, cfg.seed + k++)
                                 : augment_trajectories(chain, ref, t.question);
            samples.insert(samples.end(), part.begin(), part.end());
          }
          s.emit(out_path, to_jsonl(samples));
        } else if (reward->parsed()) {
          auto g = load_graph(graph_path);
          auto emb = s.embedder();
          auto preds = read_jsonl(pred_path);
          auto gts = read_triplets(gt_path);
          if (preds.size() != gts.size())
            throw Error(ErrorKind::InvalidArgument, "--pred has " + std::to_string(preds.size()) +
                                                        " records but --gt has " + std::to_string(gts.size()));
          auto judge = s.client(Role::Judge);
          EntityExtractor extractor(g, emb, cfg.anchor_threshold);
          auto params = cfg.reward_params();
          std::vector<std::size_t> idx(preds.size());
          for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
          auto rows = parallel_map(
              std::span<const std::size_t>(idx),
              [&](std::size_t i) {
                const auto& gt = gts[i];
                auto response = preds[i].at("response").get<std::string>();
                EntitySet gt_entities =
                    reextract ? extractor.extract(gt.chain) : entity_set_from_anchors(gt.entities, g);
                return score_response(response, gt.answer, gt_entities, extractor, emb, *judge, params);
              },
              cfg.jobs);
          s.emit(out_path, to_jsonl(rows));
        } else if (demo->parsed()) {
          ToyEnvironment env;
          if (!responses_path.empty()) {
            if (graph_path.empty()) throw Error(ErrorKind::BadConfig, "--responses needs --graph");
            auto g = load_graph(graph_path);
            auto emb = s.embedder();
            auto judge = s.client(Role::Judge);
            EntityExtractor extractor(g, emb, cfg.anchor_threshold);
            std::vector<RewardBreakdown> b;
            for (const auto& j : read_jsonl(responses_path)) {
              auto answer = j.at("answer").get<std::string>();
              auto gt_entities = extractor.extract(j.value("reference", answer));
              b.push_back(score_response(j.at("response").get<std::string>(), answer, gt_entities, extractor, emb,
                                         *judge, cfg.reward_params()));
            }
            env = ToyEnvironment::from_breakdowns(std::move(b));
          } else {
            env = ToyEnvironment::from_rewards(candidate_rewards);
          }
          auto run = run_toy_training(env, cfg.grpo, {iters, cfg.seed, cfg.learning_rate});
          s.emit(out_path, trajectory_csv(run.steps));
        } else if (eval->parsed()) {
          std::vector<EvalPair> pairs;
          for (const auto& j : read_jsonl(in_path)) pairs.push_back(eval_pair_from_json(j));
          auto emb = s.embedder();
          auto judge = s.client(Role::Judge);
          auto reports = parallel_map(
              std::span<const EvalPair>(pairs), [&](const EvalPair& p) { return evaluate_pair(p, emb, *judge); },
              cfg.jobs);
          if (!summary_path.empty()) write_file(summary_path, summarize(reports).dump(2) + "\n");
          s.emit(out_path, to_jsonl(reports));
        }
      },
      err);
}

}  // namespace pathforge::cli
