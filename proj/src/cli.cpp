// Copyright 2026 The actree Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "actree/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "actree/attribution.hpp"
#include "actree/backends.hpp"
#include "actree/controller.hpp"
#include "actree/preference.hpp"
#include "actree/targeting.hpp"

namespace actree::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ParseError("config " + path.string() + " is not a JSON object");
  return from_json(std::move(doc), fs::absolute(path).parent_path());
}

RunConfig RunConfig::from_json(json doc, fs::path base_dir) {
  RunConfig c;
  c.hash = hex64(fnv1a64(doc.dump()));
  c.doc = std::move(doc);
  c.base_dir = std::move(base_dir);
  return c;
}

fs::path RunConfig::resolve(const std::string& relative) const {
  fs::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

const json& RunConfig::section(const std::string& key) const {
  static const json empty = json::object();
  auto it = doc.find(key);
  return it == doc.end() || it->is_null() ? empty : *it;
}

namespace {

std::string env_or_empty(const json& section, const char* key) {
  if (!section.contains(key)) return {};
  const std::string name = section[key].get<std::string>();
  const char* v = std::getenv(name.c_str());
  if (!v) throw UsageError("environment variable " + name + " is not set");
  return v;
}

}  // namespace

std::shared_ptr<ChatBackend> make_chat_backend(const RunConfig& config) {
  const json& b = config.section("backends");
  if (!b.contains("chat") || b["chat"].is_null()) return nullptr;
  const json& c = b["chat"];
  const std::string type = c.value("type", "mock");
  std::shared_ptr<ChatBackend> backend;
  if (type == "mock") {
    backend = MockChatBackend::from_file(config.resolve(c.at("fixture").get<std::string>()));
  } else if (type == "openai") {
    HttpChatConfig h;
    h.base_url = c.at("base_url").get<std::string>();
    h.model = c.at("model").get<std::string>();
    h.api_key = env_or_empty(c, "api_key_env");
    const std::string mode = c.value("prefill_mode", "continue_final_message");
    if (mode == "raw_completion") {
      h.prefill_mode = PrefillMode::kRawCompletion;
    } else if (mode != "continue_final_message") {
      throw ValidationError("unknown prefill_mode '" + mode + "'");
    }
    h.timeout_seconds = c.value("timeout_seconds", h.timeout_seconds);
    backend = std::make_shared<OpenAIChatBackend>(h);
  } else {
    throw ValidationError("unknown chat backend type '" + type + "'");
  }
  if (c.contains("record")) {
    backend = std::make_shared<RecordingChatBackend>(backend,
                                                     config.resolve(c["record"].get<std::string>()));
  }
  return backend;
}

std::shared_ptr<RerankBackend> make_rerank_backend(const RunConfig& config) {
  const json& b = config.section("backends");
  if (!b.contains("reranker") || b["reranker"].is_null()) return nullptr;
  const json& r = b["reranker"];
  const std::string type = r.value("type", "mock");
  if (type == "mock") {
    return MockRerankBackend::from_file(config.resolve(r.at("fixture").get<std::string>()));
  }
  if (type == "http") {
    HttpRerankConfig h;
    h.base_url = r.at("base_url").get<std::string>();
    h.model = r.value("model", "");
    h.api_key = env_or_empty(r, "api_key_env");
    h.path = r.value("path", h.path);
    h.timeout_seconds = r.value("timeout_seconds", h.timeout_seconds);
    return std::make_shared<HttpRerankBackend>(h);
  }
  throw ValidationError("unknown reranker backend type '" + type + "'");
}

std::unique_ptr<ModelGateway> make_gateway(const RunConfig& config) {
  const json& b = config.section("backends");
  GatewayOptions o;
  o.max_in_flight = b.value("max_in_flight", o.max_in_flight);
  o.max_attempts = b.value("max_attempts", o.max_attempts);
  o.initial_backoff = std::chrono::milliseconds(
      b.value("initial_backoff_ms", static_cast<int>(o.initial_backoff.count())));
  return std::make_unique<ModelGateway>(make_chat_backend(config), make_rerank_backend(config), o);
}

std::unique_ptr<Evaluator> make_evaluator(EvaluatorKind kind, const json& section,
                                          const RunConfig& config, const ModelGateway& gateway) {
  switch (kind) {
    case EvaluatorKind::kGenerative: {
      json items = json::array({{{"criterion", "Overall quality of the response for the task"},
                                 {"weight", 1.0}}});
      if (section.contains("rubric")) {
        const json& r = section["rubric"];
        if (r.is_string()) {
          std::ifstream in(config.resolve(r.get<std::string>()), std::ios::binary);
          if (!in) throw UsageError("cannot open rubric " + r.get<std::string>());
          items = json::parse(in);
        } else {
          items = r;
        }
      }
      JudgeOptions jo;
      jo.temperature = section.value("temperature", jo.temperature);
      jo.max_tokens = section.value("max_tokens", jo.max_tokens);
      return make_generative_evaluator(gateway, rubric_from_json(items, section.value("scale", 4)), jo);
    }
    case EvaluatorKind::kReranker:
      return make_reranker_evaluator(
          gateway, section.value("criteria", std::string("A high-quality response to the task.")));
    case EvaluatorKind::kProgrammatic:
      if (!section.contains("verifier")) throw UsageError("programmatic evaluator needs a verifier");
      return make_programmatic_evaluator(make_verifier(section["verifier"]));
  }
  throw UsageError("unknown evaluator kind");
}

SearchModules Pipeline::modules() const {
  return SearchModules{gateway.get(), controller.get(), generator.get(), prm.get(), orm.get()};
}

Pipeline build_pipeline(const RunConfig& config, const json& search_override) {
  Pipeline p;
  if (!config.doc.contains("action_space")) throw UsageError("config lacks action_space");
  const fs::path space_path = config.resolve(config.doc["action_space"].get<std::string>());
  if (!fs::exists(space_path)) throw UsageError("action space manifest not found: " + space_path.string());
  p.space = std::make_unique<ActionSpace>(load_action_space(space_path));
  p.gateway = make_gateway(config);
  json search = config.section("search");
  search.merge_patch(search_override);
  p.search = search_config_from_json(search);
  if (config.doc.contains("task")) p.task = task_signature_from_json(config.doc["task"]);

  const json& g = config.section("generator");
  GeneratorOptions go;
  go.temperature = p.search.temperature;
  go.step_max_tokens = g.value("step_max_tokens", go.step_max_tokens);
  go.answer_max_tokens = g.value("answer_max_tokens", go.answer_max_tokens);
  p.generator = std::make_unique<Generator>(*p.gateway, *p.space, p.task, p.search.synthesis_mode, go);

  const json& c = config.section("controller");
  switch (p.search.controller) {
    case ControllerKind::kReranker:
      p.controller = make_reranker_controller(*p.space, *p.gateway);
      break;
    case ControllerKind::kGenerative: {
      GenerativeControllerOptions o;
      o.temperature = c.value("temperature", p.search.temperature);
      o.max_tokens = c.value("max_tokens", o.max_tokens);
      p.controller = make_generative_controller(*p.space, *p.gateway, o);
      break;
    }
    case ControllerKind::kRandom:
      p.controller = make_random_controller(*p.space);
      break;
    case ControllerKind::kForced:
      if (!c.contains("plan")) throw UsageError("forced controller needs controller.plan");
      p.controller = make_forced_controller(plan_from_json(c["plan"]));
      break;
  }
  p.prm = make_evaluator(p.search.prm, config.section("prm"), config, *p.gateway);
  p.orm = make_evaluator(p.search.orm, config.section("orm"), config, *p.gateway);
  return p;
}

namespace {

// ---------------------------------------------------------------------------
// Small I/O helpers

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_json_file(const fs::path& path, const json& doc) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError(path.string() + " is not valid JSON");
  return doc;
}

TraceImport load_traces(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("trace file not found: " + path.string());
  TraceImport t = read_traces_jsonl(path);
  for (const std::string& w : t.warnings) log_warning(path.filename().string() + ": " + w);
  return t;
}

std::vector<std::string> inputs_of(const RunConfig& config) {
  if (config.doc.contains("inputs")) return config.doc["inputs"].get<std::vector<std::string>>();
  if (config.doc.contains("input")) return {config.doc["input"].get<std::string>()};
  throw UsageError("config lacks input (or inputs)");
}

std::map<std::string, std::string> answers_by_id(const std::vector<Trace>& traces) {
  std::map<std::string, std::string> m;
  for (const Trace& t : traces) {
    if (!m.emplace(t.id(), t.final_answer).second) {
      throw ValidationError("duplicate trace id " + t.id());
    }
  }
  return m;
}

json explored_record(const ExploredNode& e) {
  json traj = json::array();
  for (const StepRecord& s : e.state.steps) traj.push_back(choice_to_json(s.choice));
  json r = {{"tree_seed", e.state.node_id.tree_seed},
            {"layer", e.layer},
            {"node_id", e.state.node_id.str()},
            {"parent_id", e.state.parent_id ? json(e.state.parent_id->str()) : json(nullptr)},
            {"kept", e.kept},
            {"trajectory", traj},
            {"step_text", e.state.steps.empty() ? "" : e.state.steps.back().step_text}};
  auto prm = e.state.prm_score();
  r["prm_score"] = prm ? json(*prm) : json(nullptr);
  return r;
}

std::string config_hash_of(const std::optional<json>& header) {
  if (header && header->contains("config_hash")) return (*header)["config_hash"].get<std::string>();
  return "unknown";
}

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
  std::string config, out = "traces.jsonl", explored;
  std::vector<std::int64_t> seeds;
  std::optional<int> branching, beam_width, depth;
  std::optional<double> temperature;
  std::string mode, controller;
};

int cmd_run(const RunOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  json over = json::object();
  if (o.branching) over["branching"] = *o.branching;
  if (o.beam_width) over["beam_width"] = *o.beam_width;
  if (o.depth) over["max_depth"] = *o.depth;
  if (o.temperature) over["temperature"] = *o.temperature;
  if (!o.mode.empty()) over["synthesis_mode"] = o.mode;
  if (!o.controller.empty()) over["controller"] = o.controller;
  Pipeline p = build_pipeline(config, over);

  std::vector<std::int64_t> seeds = o.seeds;
  if (seeds.empty()) {
    seeds = config.doc.contains("seeds") ? config.doc["seeds"].get<std::vector<std::int64_t>>()
                                         : std::vector<std::int64_t>{p.search.tree_seed};
  }
  if (std::set<std::int64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw UsageError("seeds must be distinct");
  }
  const std::vector<std::string> inputs = inputs_of(config);

  std::vector<Trace> traces, partial;
  std::vector<json> explored;
  json failed = json::array();
  std::size_t trees = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t seed : seeds) {
      SearchConfig sc = p.search;
      sc.tree_seed = seed + static_cast<std::int64_t>(i) * 1000000;
      ++trees;
      try {
        TreeResult r = run_tree(inputs[i], sc, p.modules());
        traces.insert(traces.end(), r.traces.begin(), r.traces.end());
        for (const ExploredNode& e : r.explored) explored.push_back(explored_record(e));
      } catch (const NoSolutionError& e) {
        failed.push_back({{"tree_seed", sc.tree_seed}, {"error", e.what()}});
        partial.insert(partial.end(), e.partial_traces().begin(), e.partial_traces().end());
      } catch (const Error& e) {
        failed.push_back({{"tree_seed", sc.tree_seed}, {"error", e.what()}});
      }
    }
  }
  json header = {{"config_hash", config.hash},
                 {"command", "run"},
                 {"seeds", seeds},
                 {"inputs", inputs.size()},
                 {"search", to_json(p.search)},
                 {"chat_backend", p.gateway->chat_identifier()},
                 {"reranker_backend", p.gateway->reranker_identifier()},
                 {"trees", trees},
                 {"failed_trees", failed}};
  ensure_parent(o.out);
  write_traces_jsonl(o.out, traces, header);
  if (!partial.empty()) {
    header["partial"] = true;
    write_traces_jsonl(o.out + ".partial.jsonl", partial, header);
  }
  if (!o.explored.empty()) {
    ensure_parent(o.explored);
    explored.insert(explored.begin(), json{{"header", {{"config_hash", config.hash}, {"command", "run"}}}});
    write_jsonl(o.explored, explored);
  }
  out << "wrote " << traces.size() << " traces from " << trees << " trees to " << o.out << "\n";
  if (traces.empty()) return kBackendFailure;
  return failed.empty() ? kSuccess : kPartial;
}

struct JudgeOptionsCli {
  std::string config, traces, out = "judgments.jsonl";
  std::optional<std::size_t> comparisons, consistency;
  std::optional<std::uint64_t> seed;
};

JudgePrompt judge_prompt_for(const RunConfig& config, const std::vector<Trace>& traces) {
  const json& j = config.section("judge");
  JudgePrompt prompt = j.contains("prompt") ? judge_prompt_from_json(j["prompt"]) : JudgePrompt{};
  if (prompt.task.empty() && !traces.empty()) {
    bool same = std::all_of(traces.begin(), traces.end(),
                            [&](const Trace& t) { return t.input == traces.front().input; });
    if (same) prompt.task = traces.front().input;
  }
  return prompt;
}

int cmd_judge(const JudgeOptionsCli& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const json& js = config.section("judge");
  const std::size_t comparisons = o.comparisons.value_or(js.value("comparisons", std::size_t{50000}));
  const std::uint64_t seed = o.seed.value_or(js.value("seed", std::uint64_t{0}));
  TraceImport ti = load_traces(o.traces);
  auto texts = answers_by_id(ti.traces);
  std::vector<std::string> ids;
  for (const auto& [id, text] : texts) ids.push_back(id);
  auto gateway = make_gateway(config);
  JudgePrompt prompt = judge_prompt_for(config, ti.traces);
  JudgeBatch batch = judge_pairs(sample_pairs(ids, comparisons, seed), texts, prompt, *gateway,
                                 mix_seed(seed, 1));
  json header = {{"config_hash", config.hash},
                 {"command", "judge"},
                 {"traces_config_hash", config_hash_of(ti.header)},
                 {"comparisons", comparisons},
                 {"seed", seed},
                 {"judge", gateway->chat_identifier()},
                 {"judged", batch.judgments.size()},
                 {"errors", batch.errors.size()}};
  const std::size_t consistency = o.consistency.value_or(js.value("consistency_pairs", std::size_t{0}));
  if (consistency > 0) {
    ConsistencyReport cr = judge_consistency(sample_pairs(ids, consistency, mix_seed(seed, 2)),
                                             texts, prompt, *gateway, mix_seed(seed, 3));
    header["consistency"] = {{"pairs", cr.pairs}, {"flips", cr.flips}, {"flip_rate", cr.flip_rate}};
  }
  std::vector<json> records{json{{"header", header}}};
  for (const Judgment& j : batch.judgments) records.push_back(to_json(j));
  ensure_parent(o.out);
  write_jsonl(o.out, records);
  out << "wrote " << batch.judgments.size() << " judgments (" << batch.errors.size()
      << " excluded) to " << o.out << "\n";
  if (batch.judgments.empty() && comparisons > 0) return kBackendFailure;
  return batch.errors.empty() ? kSuccess : kPartial;
}

struct FitBtOptions {
  std::string judgments, out = "bt.json", traces;
};

int cmd_fit_bt(const FitBtOptions& o, std::ostream& out) {
  if (!fs::exists(o.judgments)) throw UsageError("judgment log not found: " + o.judgments);
  std::vector<json> records = read_jsonl(o.judgments);
  std::optional<json> header;
  std::vector<Judgment> js;
  for (const json& r : records) {
    if (r.is_object() && r.size() == 1 && r.contains("header")) {
      header = r["header"];
      continue;
    }
    js.push_back(judgment_from_json(r));
  }
  std::vector<std::string> all_ids;
  if (!o.traces.empty()) {
    for (const Trace& t : load_traces(o.traces).traces) all_ids.push_back(t.id());
  }
  BTFit fit = fit_bradley_terry(js, {}, all_ids);
  json doc = to_json(fit);
  doc["config_hash"] = config_hash_of(header);
  doc["judgments"] = js.size();
  write_json_file(o.out, doc);
  out << "fitted " << fit.strengths.size() << " items in " << fit.iterations << " iterations to "
      << o.out << "\n";
  return kSuccess;
}

struct AttribOptions {
  std::string config, traces, bt, model = "m2", out = "fit.json", csv;
  bool length = false, ols = false;
  std::optional<int> depth;
};

int cmd_attrib(const AttribOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const json& a = config.section("attribution");
  const ActionSpace space = load_action_space(config.resolve(config.doc.at("action_space").get<std::string>()));
  const int depth = o.depth.value_or(a.value("depth", config.section("search").value("max_depth", 3)));
  const AttributionModel model = attribution_model_from_string(o.model);
  const bool length = o.length || a.value("length_feature", false);

  std::vector<Trace> traces = load_traces(o.traces).traces;
  const std::size_t loaded = traces.size();
  if (model == AttributionModel::kM2) traces = filter_fixed_length(traces, depth);
  const std::size_t variable_length = loaded - traces.size();
  if (variable_length) log_warning(std::to_string(variable_length) + " variable-length traces filtered out");

  BTFit bt = bt_fit_from_json(read_json_file(o.bt));
  std::vector<Trace> kept;
  std::size_t missing = 0;
  for (Trace& t : traces) {
    if (bt.standardized_ranks.count(t.id())) {
      kept.push_back(std::move(t));
    } else {
      ++missing;
    }
  }
  if (kept.size() < 4) throw UsageError("too few traces with outcomes to fit (" + std::to_string(kept.size()) + ")");

  TrainTestSplit split = split_train_test(kept, a.value("train_fraction", 0.6),
                                          a.value("seed", std::uint64_t{0}), a.value("dedupe", true));
  FeatureMatrix X = extract_model_features(model, kept, space, depth, length);
  Eigen::VectorXd y(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = bt.standardized_ranks.at(kept[i].id());
  }
  auto rows_of = [&](const std::vector<std::string>& ids) {
    std::map<std::string, Eigen::Index> where;
    for (std::size_t i = 0; i < X.row_ids.size(); ++i) where[X.row_ids[i]] = static_cast<Eigen::Index>(i);
    std::vector<Eigen::Index> rows;
    for (const std::string& id : ids) rows.push_back(where.at(id));
    return rows;
  };
  FeatureMatrix Xtr = select_rows(X, split.train), Xte = select_rows(X, split.test);
  Eigen::VectorXd ytr = y(rows_of(split.train)), yte = y(rows_of(split.test));

  RegressionFit fit;
  if (o.ols) {
    fit = fit_ols(Xtr, ytr);
  } else {
    LassoOptions lo;
    lo.folds = std::min<int>(a.value("folds", 10), static_cast<int>(Xtr.values.rows()));
    lo.seed = a.value("cv_seed", std::uint64_t{0});
    fit = fit_lasso(Xtr, ytr, lo);
  }
  FitEvaluation ev = evaluate_fit(fit, Xte, yte, a.value("bootstrap", 1000), a.value("bootstrap_seed", std::uint64_t{0}));
  fit.test_r2 = ev.r2;
  fit.test_r2_ci = std::make_pair(ev.ci_low, ev.ci_high);

  json doc = to_json(fit);
  doc["config_hash"] = config.hash;
  doc["model"] = to_string(model);
  doc["depth"] = depth;
  doc["length_feature"] = length;
  doc["split"] = {{"train", split.train.size()},
                  {"test", split.test.size()},
                  {"removed_duplicates", split.removed_duplicates.size()},
                  {"removed_variable_length", variable_length},
                  {"missing_outcome", missing}};
  doc["bootstrap_iterations"] = ev.bootstrap_iterations;
  write_json_file(o.out, doc);
  if (!o.csv.empty()) {
    ensure_parent(o.csv);
    write_feature_csv(o.csv, X, y, "config_hash: " + config.hash);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %s: train R2 %.4f, test R2 %.4f [%.4f, %.4f], %d nonzero\n",
                to_string(model).c_str(), o.ols ? "ols" : "lasso", fit.train_r2, ev.r2, ev.ci_low,
                ev.ci_high, fit.nonzero_count);
  out << buf;
  return kSuccess;
}

struct RankOptions {
  std::string config, fit, traces, out = "plans.jsonl";
  std::optional<std::size_t> top;
  std::optional<int> depth;
};

int cmd_rank_traj(const RankOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const ActionSpace space = load_action_space(config.resolve(config.doc.at("action_space").get<std::string>()));
  json fit_doc = read_json_file(o.fit);
  RegressionFit fit = regression_fit_from_json(fit_doc);
  const int depth = o.depth.value_or(fit_doc.value("depth", config.section("attribution").value("depth", 3)));
  const std::size_t top = o.top.value_or(config.section("targeting").value("top_k", std::size_t{50}));
  std::set<std::uint64_t> observed;
  if (!o.traces.empty()) observed = observed_plans(space, depth, load_traces(o.traces).traces);
  RankedPlans ranked = top_unobserved(fit, space, depth, observed, top);
  std::vector<json> records{json{{"header",
                                  {{"config_hash", config.hash},
                                   {"command", "rank-traj"},
                                   {"fit_config_hash", fit_doc.value("config_hash", "unknown")},
                                   {"depth", depth},
                                   {"top", top},
                                   {"observed", observed.size()},
                                   {"warnings", ranked.warnings}}}}};
  for (const TrajectoryPlan& p : ranked.plans) records.push_back(plan_to_json(space, p));
  ensure_parent(o.out);
  write_jsonl(o.out, records);
  out << "ranked " << ranked.plans.size() << " unobserved plans to " << o.out << "\n";
  return ranked.plans.size() < top ? kPartial : kSuccess;
}

std::vector<TrajectoryPlan> load_plans(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("plan file not found: " + path.string());
  std::vector<TrajectoryPlan> plans;
  for (const json& r : read_jsonl(path)) {
    if (r.is_object() && r.contains("header")) continue;
    plans.push_back(plan_from_json(r));
  }
  return plans;
}

struct TargetedOptions {
  std::string config, plans, out = "targeted.jsonl", baseline = "", baseline_out = "baseline.jsonl",
                             presence_fit, presence_dimension, traces;
  std::optional<int> samples;
  std::optional<std::int64_t> seed;
  std::optional<std::size_t> baseline_count;
};

int cmd_targeted(const TargetedOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const json& t = config.section("targeting");
  Pipeline p = build_pipeline(config);
  const std::vector<std::string> inputs = inputs_of(config);
  if (inputs.size() != 1) throw UsageError("targeted generation needs exactly one input");
  const int samples = o.samples.value_or(t.value("samples_per_plan", 5));
  const std::int64_t seed = o.seed.value_or(t.value("seed", std::int64_t{100000}));
  std::vector<TrajectoryPlan> plans = load_plans(o.plans);
  if (plans.empty()) throw UsageError("no plans in " + o.plans);
  const int depth = static_cast<int>(plans.front().steps.size());

  auto write_arm = [&](const std::string& path, const std::string& arm, const TargetedRun& run,
                       std::size_t plan_count) {
    json header = {{"config_hash", config.hash},
                   {"command", "targeted"},
                   {"arm", arm},
                   {"plans", plan_count},
                   {"samples_per_plan", samples},
                   {"shortfall", run.shortfall},
                   {"fidelity_violations", run.fidelity_violations},
                   {"chat_backend", p.gateway->chat_identifier()}};
    ensure_parent(path);
    write_traces_jsonl(path, run.traces, header);
  };

  TargetedRun targeted = generate_targeted(inputs.front(), plans, samples, p.search, p.modules(), seed);
  write_arm(o.out, "targeted", targeted, plans.size());
  out << "wrote " << targeted.traces.size() << " targeted traces to " << o.out << "\n";
  std::size_t shortfall = targeted.shortfall;

  const std::string baseline = o.baseline.empty() ? t.value("baseline", std::string("none")) : o.baseline;
  if (baseline != "none") {
    std::set<std::uint64_t> observed;
    if (!o.traces.empty()) observed = observed_plans(*p.space, depth, load_traces(o.traces).traces);
    for (const TrajectoryPlan& pl : plans) observed.insert(plan_index(*p.space, pl));
    const std::size_t count = o.baseline_count.value_or(plans.size());
    const std::uint64_t bseed = mix_seed(static_cast<std::uint64_t>(seed), 0xba5e);
    std::vector<TrajectoryPlan> bplans;
    if (baseline == "random") {
      bplans = random_baseline_plans(*p.space, depth, observed, count, bseed);
    } else if (baseline == "topic_presence") {
      if (o.presence_fit.empty()) throw UsageError("topic_presence baseline needs --presence-fit");
      std::string dim = o.presence_dimension;
      if (dim.empty()) dim = p.space->dimensions()[p.space->dimension_count() > 1 ? 1 : 0].name;
      bplans = topic_presence_plans(regression_fit_from_json(read_json_file(o.presence_fit)), *p.space,
                                    depth, dim, observed, count, bseed);
    } else {
      throw UsageError("unknown baseline '" + baseline + "' (none, random, topic_presence)");
    }
    TargetedRun base = generate_targeted(inputs.front(), bplans, samples, p.search, p.modules(),
                                         seed + static_cast<std::int64_t>(plans.size()) * samples);
    write_arm(o.baseline_out, baseline, base, bplans.size());
    out << "wrote " << base.traces.size() << " " << baseline << " baseline traces to "
        << o.baseline_out << "\n";
    shortfall += base.shortfall;
  }
  if (targeted.traces.empty()) return kBackendFailure;
  return shortfall ? kPartial : kSuccess;
}

struct MatchOptions {
  std::string config, targeted, baseline, out = "match.json", dataset_out;
  std::optional<std::size_t> tolerance, comparisons;
  std::optional<std::uint64_t> seed;
};

int cmd_match_eval(const MatchOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const json& t = config.section("targeting");
  const std::size_t tol = o.tolerance.value_or(t.value("tolerance", std::size_t{5}));
  const std::size_t comparisons = o.comparisons.value_or(t.value("comparisons", std::size_t{5000}));
  const std::uint64_t seed = o.seed.value_or(t.value("match_seed", std::uint64_t{0}));
  std::vector<Trace> tt = load_traces(o.targeted).traces, bt = load_traces(o.baseline).traces;
  MatchedDataset d = length_match(tt, bt, tol);
  if (!o.dataset_out.empty()) {
    json dj = to_json(d);
    dj["config_hash"] = config.hash;
    write_json_file(o.dataset_out, dj);
  }
  if (d.pairs.empty()) throw UsageError("no length-matched pairs within tolerance " + std::to_string(tol));
  std::vector<Trace> all = tt;
  all.insert(all.end(), bt.begin(), bt.end());
  auto texts = answers_by_id(all);
  auto gateway = make_gateway(config);
  std::vector<Trace> judged_pool = tt;
  MatchedEvaluation ev = evaluate_matched(d, texts, comparisons, judge_prompt_for(config, all), *gateway, seed);
  json doc = {{"config_hash", config.hash},
              {"command", "match-eval"},
              {"tolerance", tol},
              {"matched_pairs", d.pairs.size()},
              {"dropped", d.dropped},
              {"comparisons", comparisons},
              {"cross_comparisons", ev.cross_comparisons},
              {"targeted_win_rate", ev.targeted_win_rate},
              {"targeted_in_top10", ev.targeted_in_top10},
              {"targeted_in_top100", ev.targeted_in_top100},
              {"judge_errors", ev.judge_errors},
              {"bt", to_json(ev.fit)}};
  write_json_file(o.out, doc);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu pairs, targeted win rate %.3f over %zu cross comparisons, top-10 %zu\n",
                d.pairs.size(), ev.targeted_win_rate, ev.cross_comparisons, ev.targeted_in_top10);
  out << buf;
  return ev.judge_errors ? kPartial : kSuccess;
}

struct DiversityOptions {
  std::string config, out = "diversity.json", scorer, utility = "orm";
  std::vector<std::string> traces;
  std::optional<double> threshold, patience;
  std::optional<std::uint64_t> seed;
};

int cmd_diversity(const DiversityOptions& o, std::ostream& out) {
  RunConfig config = RunConfig::load(o.config);
  const json& d = config.section("diversity");
  const double threshold = o.threshold.value_or(d.value("threshold", kDefaultEquivalenceThreshold));
  const double patience = o.patience.value_or(d.value("patience", 0.8));
  const std::uint64_t seed = o.seed.value_or(d.value("seed", std::uint64_t{0}));
  const std::string scorer_name = o.scorer.empty() ? d.value("scorer", std::string("jaccard")) : o.scorer;
  std::unique_ptr<ModelGateway> gateway;
  SimilarityScorer scorer;
  if (scorer_name == "jaccard") {
    scorer = jaccard_similarity;
  } else if (scorer_name == "reranker") {
    gateway = make_gateway(config);
    scorer = make_rerank_scorer(*gateway);
  } else {
    throw UsageError("unknown diversity scorer '" + scorer_name + "' (jaccard, reranker)");
  }
  if (o.utility != "orm" && o.utility != "one") throw UsageError("--utility must be orm or one");

  json tables = json::array();
  double sum_distinct = 0, sum_utility = 0;
  std::size_t groups_total = 0;
  for (const std::string& path : o.traces) {
    std::vector<Trace> traces = load_traces(path).traces;
    std::vector<std::string> order;
    std::map<std::string, std::vector<const Trace*>> groups;
    for (const Trace& t : traces) {
      if (!groups.count(t.input)) order.push_back(t.input);
      groups[t.input].push_back(&t);
    }
    json rows = json::array();
    for (const std::string& input : order) {
      const auto& g = groups[input];
      std::vector<std::string> ids, texts;
      std::vector<double> util;
      for (const Trace* t : g) {
        ids.push_back(t->id());
        texts.push_back(t->final_answer);
        util.push_back(o.utility == "orm" ? t->orm_score.value_or(0.0) : 1.0);
      }
      EquivalencePartition part = partition_equivalence(ids, texts, scorer, threshold, seed);
      const double u = patience_utility(part.labels, util, patience);
      rows.push_back({{"input_hash", hex64(fnv1a64(input))},
                      {"generations", g.size()},
                      {"distinct", mean_distinct(part)},
                      {"utility", u}});
      sum_distinct += static_cast<double>(mean_distinct(part));
      sum_utility += u;
      ++groups_total;
    }
    tables.push_back({{"traces", fs::path(path).filename().string()}, {"inputs", rows}});
  }
  json doc = {{"config_hash", config.hash},
              {"command", "diversity"},
              {"scorer", scorer_name},
              {"threshold", threshold},
              {"patience", patience},
              {"utility", o.utility},
              {"files", tables},
              {"mean_distinct", groups_total ? sum_distinct / static_cast<double>(groups_total) : 0.0},
              {"mean_utility", groups_total ? sum_utility / static_cast<double>(groups_total) : 0.0}};
  write_json_file(o.out, doc);
  out << "mean distinct " << doc["mean_distinct"].get<double>() << ", mean utility "
      << doc["mean_utility"].get<double>() << " over " << groups_total << " inputs\n";
  return kSuccess;
}

struct ReportOptions {
  std::vector<std::string> fits, traces;
  std::string out_dir = "report";
  std::size_t bin = 100;
};

int cmd_report(const ReportOptions& o, std::ostream& out) {
  if (o.fits.empty() && o.traces.empty()) throw UsageError("report needs --fit or --traces");
  if (o.bin == 0) throw UsageError("--bin must be positive");
  fs::create_directories(o.out_dir);
  std::string hash = "unknown";
  std::ofstream cv(fs::path(o.out_dir) / "cv_curve.csv", std::ios::binary);
  std::ofstream r2(fs::path(o.out_dir) / "r2.csv", std::ios::binary);
  std::vector<json> fits;
  for (const std::string& f : o.fits) {
    fits.push_back(read_json_file(f));
    if (hash == "unknown") hash = fits.back().value("config_hash", "unknown");
  }
  if (hash == "unknown" && !o.traces.empty()) hash = config_hash_of(load_traces(o.traces.front()).header);
  auto num = [](const json& v) {
    if (!v.is_number()) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return std::string(buf);
  };
  cv << "# config_hash: " << hash << "\nfit,alpha,mean_cv_r2\n";
  r2 << "# config_hash: " << hash << "\nfit,model,kind,train_r2,test_r2,ci_low,ci_high,nonzero\n";
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const json& f = fits[i];
    const std::string label = fs::path(o.fits[i]).stem().string();
    for (const json& p : f.value("cv_curve", json::array())) {
      cv << label << ',' << num(p["alpha"]) << ',' << num(p["mean_cv_r2"]) << '\n';
    }
    const json ci = f.value("test_r2_ci", json(nullptr));
    r2 << label << ',' << f.value("model", "") << ',' << f.value("model_kind", "") << ','
       << num(f.value("train_r2", json(nullptr))) << ',' << num(f.value("test_r2", json(nullptr))) << ','
       << (ci.is_array() ? num(ci[0]) : "") << ',' << (ci.is_array() ? num(ci[1]) : "") << ','
       << f.value("nonzero_count", 0) << '\n';
  }
  std::ofstream hist(fs::path(o.out_dir) / "length_hist.csv", std::ios::binary);
  hist << "# config_hash: " << hash << "\ntraces,bin_start,count\n";
  for (const std::string& path : o.traces) {
    std::map<std::size_t, std::size_t> bins;
    for (const Trace& t : load_traces(path).traces) ++bins[char_count(t.final_answer) / o.bin * o.bin];
    for (const auto& [start, count] : bins) {
      hist << fs::path(path).filename().string() << ',' << start << ',' << count << '\n';
    }
  }
  out << "wrote cv_curve.csv, r2.csv, length_hist.csv to " << o.out_dir << "\n";
  return kSuccess;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const SchemaVersionError*>(&e) ||
      dynamic_cast<const FeatureError*>(&e) || dynamic_cast<const TemplateError*>(&e) ||
      dynamic_cast<const nlohmann::json::exception*>(&e)) {
    return kUsage;
  }
  return kBackendFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Action-guided reasoning trees: search, judging, and attribution"};
  app.name("actree");
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log debug messages");
  app.add_flag("-q,--quiet", quiet, "Log errors only");

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Grow reasoning trees and write traces");
  run_cmd->add_option("-c,--config", ro.config, "Run configuration")->required();
  run_cmd->add_option("-o,--out", ro.out, "Trace JSONL output");
  run_cmd->add_option("--explored", ro.explored, "Also write every scored candidate here");
  run_cmd->add_option("--seeds", ro.seeds, "Tree seeds (overrides config)")->delimiter(',');
  run_cmd->add_option("--branching", ro.branching, "Branching factor n");
  run_cmd->add_option("--beam-width", ro.beam_width, "Beam width k");
  run_cmd->add_option("--depth", ro.depth, "Maximum depth d");
  run_cmd->add_option("--temperature", ro.temperature, "Sampling temperature");
  run_cmd->add_option("--mode", ro.mode, "Synthesis mode");
  run_cmd->add_option("--controller", ro.controller, "Controller kind");

  JudgeOptionsCli jo;
  auto* judge_cmd = app.add_subcommand("judge", "Pairwise-judge final answers");
  judge_cmd->add_option("-c,--config", jo.config, "Run configuration")->required();
  judge_cmd->add_option("-t,--traces", jo.traces, "Trace JSONL")->required();
  judge_cmd->add_option("-o,--out", jo.out, "Judgment JSONL output");
  judge_cmd->add_option("-n,--comparisons", jo.comparisons, "Number of comparisons");
  judge_cmd->add_option("--seed", jo.seed, "Pair sampling seed");
  judge_cmd->add_option("--consistency", jo.consistency, "Pairs to judge in both orders");

  FitBtOptions fo;
  auto* bt_cmd = app.add_subcommand("fit-bt", "Fit a Bradley-Terry model to judgments");
  bt_cmd->add_option("-j,--judgments", fo.judgments, "Judgment JSONL")->required();
  bt_cmd->add_option("-o,--out", fo.out, "BT document output");
  bt_cmd->add_option("-t,--traces", fo.traces, "Traces, to report items never compared");

  AttribOptions ao;
  auto* attrib_cmd = app.add_subcommand("attrib", "Regress standardized ranks on action features");
  attrib_cmd->add_option("-c,--config", ao.config, "Run configuration")->required();
  attrib_cmd->add_option("-t,--traces", ao.traces, "Trace JSONL")->required();
  attrib_cmd->add_option("-b,--bt", ao.bt, "BT document")->required();
  attrib_cmd->add_option("-m,--model", ao.model, "m1a, m1b, m1c or m2");
  attrib_cmd->add_option("-o,--out", ao.out, "Fit report output");
  attrib_cmd->add_option("--csv", ao.csv, "Also export the feature matrix");
  attrib_cmd->add_option("--depth", ao.depth, "Trajectory depth");
  attrib_cmd->add_flag("--length", ao.length, "Add the len.chars feature");
  attrib_cmd->add_flag("--ols", ao.ols, "Ordinary least squares instead of LASSO");

  RankOptions rk;
  auto* rank_cmd = app.add_subcommand("rank-traj", "Rank unobserved trajectories under a fit");
  rank_cmd->add_option("-c,--config", rk.config, "Run configuration")->required();
  rank_cmd->add_option("-f,--fit", rk.fit, "Sequential fit report")->required();
  rank_cmd->add_option("-t,--traces", rk.traces, "Observed traces");
  rank_cmd->add_option("-k,--top", rk.top, "Plans to keep");
  rank_cmd->add_option("--depth", rk.depth, "Trajectory depth");
  rank_cmd->add_option("-o,--out", rk.out, "Plan JSONL output");

  TargetedOptions to;
  auto* tgt_cmd = app.add_subcommand("targeted", "Generate outputs that follow given plans");
  tgt_cmd->add_option("-c,--config", to.config, "Run configuration")->required();
  tgt_cmd->add_option("-p,--plans", to.plans, "Plan JSONL")->required();
  tgt_cmd->add_option("-o,--out", to.out, "Targeted trace output");
  tgt_cmd->add_option("-s,--samples", to.samples, "Samples per plan");
  tgt_cmd->add_option("--seed", to.seed, "First tree seed");
  tgt_cmd->add_option("--baseline", to.baseline, "none, random or topic_presence");
  tgt_cmd->add_option("--baseline-out", to.baseline_out, "Baseline trace output");
  tgt_cmd->add_option("--baseline-count", to.baseline_count, "Baseline plans");
  tgt_cmd->add_option("--presence-fit", to.presence_fit, "Presence fit for topic_presence");
  tgt_cmd->add_option("--presence-dimension", to.presence_dimension, "Dimension ranked by the presence fit");
  tgt_cmd->add_option("-t,--traces", to.traces, "Observed traces excluded from baselines");

  MatchOptions mo;
  auto* match_cmd = app.add_subcommand("match-eval", "Length-match and judge targeted vs baseline");
  match_cmd->add_option("-c,--config", mo.config, "Run configuration")->required();
  match_cmd->add_option("--targeted", mo.targeted, "Targeted traces")->required();
  match_cmd->add_option("--baseline", mo.baseline, "Baseline traces")->required();
  match_cmd->add_option("--tolerance", mo.tolerance, "Length tolerance in characters");
  match_cmd->add_option("-n,--comparisons", mo.comparisons, "Comparisons");
  match_cmd->add_option("--seed", mo.seed, "Pair sampling seed");
  match_cmd->add_option("-o,--out", mo.out, "Result output");
  match_cmd->add_option("--dataset-out", mo.dataset_out, "Matched dataset manifest output");

  DiversityOptions dv;
  auto* div_cmd = app.add_subcommand("diversity", "Equivalence classes and patience utility");
  div_cmd->add_option("-c,--config", dv.config, "Run configuration")->required();
  div_cmd->add_option("-t,--traces", dv.traces, "Trace JSONL files")->required();
  div_cmd->add_option("--threshold", dv.threshold, "Equivalence threshold");
  div_cmd->add_option("--patience", dv.patience, "Patience p");
  div_cmd->add_option("--scorer", dv.scorer, "jaccard or reranker");
  div_cmd->add_option("--utility", dv.utility, "orm or one");
  div_cmd->add_option("--seed", dv.seed, "Representative draw seed");
  div_cmd->add_option("-o,--out", dv.out, "Metrics output");

  ReportOptions rp;
  auto* rep_cmd = app.add_subcommand("report", "Plot-ready tables from fits and traces");
  rep_cmd->add_option("-f,--fit", rp.fits, "Fit reports");
  rep_cmd->add_option("-t,--traces", rp.traces, "Trace files for length histograms");
  rep_cmd->add_option("-o,--out-dir", rp.out_dir, "Output directory");
  rep_cmd->add_option("--bin", rp.bin, "Histogram bin width in characters");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }
  if (verbose) set_log_level(LogLevel::kDebug);
  if (quiet) set_log_level(LogLevel::kError);

  try {
    if (run_cmd->parsed()) return cmd_run(ro, out);
    if (judge_cmd->parsed()) return cmd_judge(jo, out);
    if (bt_cmd->parsed()) return cmd_fit_bt(fo, out);
    if (attrib_cmd->parsed()) return cmd_attrib(ao, out);
    if (rank_cmd->parsed()) return cmd_rank_traj(rk, out);
    if (tgt_cmd->parsed()) return cmd_targeted(to, out);
    if (match_cmd->parsed()) return cmd_match_eval(mo, out);
    if (div_cmd->parsed()) return cmd_diversity(dv, out);
    if (rep_cmd->parsed()) return cmd_report(rp, out);
  } catch (const std::exception& e) {
    err << "actree: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kUsage;
}

}  // namespace actree::cli
