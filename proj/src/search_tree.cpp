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

#include "actree/search_tree.hpp"

#include <fstream>
#include <set>

namespace actree {

using nlohmann::json;

std::string to_string(SynthesisMode mode) {
  switch (mode) {
    case SynthesisMode::kStrict:
      return "strict";
    case SynthesisMode::kFaithful:
      return "faithful";
    case SynthesisMode::kRestructured:
      return "restructured";
    case SynthesisMode::kConclusion:
      return "conclusion";
  }
  return "strict";
}

SynthesisMode synthesis_mode_from_string(const std::string& name) {
  if (name == "strict") return SynthesisMode::kStrict;
  if (name == "faithful") return SynthesisMode::kFaithful;
  if (name == "restructured") return SynthesisMode::kRestructured;
  if (name == "conclusion") return SynthesisMode::kConclusion;
  throw ParseError("unknown synthesis mode '" + name + "'");
}

std::string NodeId::str() const {
  return "s" + std::to_string(tree_seed) + "-n" + std::to_string(counter);
}

NodeId NodeId::parse(const std::string& text) {
  auto dash = text.rfind("-n");
  if (text.size() < 4 || text[0] != 's' || dash == std::string::npos) {
    throw ParseError("malformed node id '" + text + "'");
  }
  try {
    NodeId id;
    id.tree_seed = std::stoll(text.substr(1, dash - 1));
    id.counter = std::stoull(text.substr(dash + 2));
    return id;
  } catch (const std::exception&) {
    throw ParseError("malformed node id '" + text + "'");
  }
}

SearchState make_root(std::string input_text, NodeIdAllocator& ids) {
  SearchState root;
  root.node_id = ids.next();
  root.input_text = std::move(input_text);
  return root;
}

SearchState append_step(const SearchState& state, StepRecord record,
                        NodeIdAllocator& ids) {
  if (state.finalized()) {
    throw UsageError("cannot append a step to finalized state " +
                     state.node_id.str());
  }
  if (record.choice.is_finish) {
    throw UsageError("FINISH is a finalization event, not a step");
  }
  if (!record.prefix_text.empty() &&
      !starts_with(record.step_text, record.prefix_text)) {
    throw ValidationError("step text does not start with its prefix");
  }
  SearchState child;
  child.node_id = ids.next();
  child.parent_id = state.node_id;
  child.input_text = state.input_text;
  child.steps = state.steps;
  child.steps.push_back(std::move(record));
  child.prm_scores = state.prm_scores;
  child.prm_scores.push_back(std::nullopt);
  return child;
}

namespace {
void check_unit_interval(double score, const char* what) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError(std::string(what) + " score outside [0,1]: " +
                          std::to_string(score));
  }
}
}  // namespace

SearchState with_prm_score(const SearchState& state, double score) {
  check_unit_interval(score, "PRM");
  if (state.steps.empty()) throw UsageError("PRM scores apply to steps");
  SearchState out = state;
  out.prm_scores.back() = score;
  return out;
}

SearchState with_orm_score(const SearchState& state, double score) {
  check_unit_interval(score, "ORM");
  if (!state.finalized()) throw UsageError("ORM scores apply to final states");
  SearchState out = state;
  out.orm_score = score;
  return out;
}

SearchState finalize(const SearchState& state, std::string answer_text,
                     SynthesisMode mode, NodeIdAllocator& ids) {
  if (state.finalized()) {
    throw UsageError("state " + state.node_id.str() + " is already finalized");
  }
  SearchState out = state;
  out.node_id = ids.next();
  out.parent_id = state.node_id;
  out.final_answer = std::move(answer_text);
  out.synthesis_mode = mode;
  return out;
}

Trace trace_of(const SearchState& state) {
  if (!state.finalized()) {
    throw UsageError("trace_of requires a finalized state; " +
                     state.node_id.str() + " is not");
  }
  Trace t;
  t.tree_seed = state.node_id.tree_seed;
  t.node_id = state.node_id;
  t.parent_id = state.parent_id;
  t.input = state.input_text;
  for (const StepRecord& s : state.steps) t.trajectory.push_back(s.choice);
  t.steps = state.steps;
  t.final_answer = *state.final_answer;
  t.synthesis_mode = state.synthesis_mode.value_or(SynthesisMode::kStrict);
  t.prm_scores = state.prm_scores;
  t.orm_score = state.orm_score;
  return t;
}

SearchState state_of(const Trace& trace) {
  SearchState s;
  s.node_id = trace.node_id;
  s.parent_id = trace.parent_id;
  s.input_text = trace.input;
  s.steps = trace.steps;
  s.prm_scores = trace.prm_scores;
  s.prm_scores.resize(s.steps.size());
  s.final_answer = trace.final_answer;
  s.synthesis_mode = trace.synthesis_mode;
  s.orm_score = trace.orm_score;
  return s;
}

json export_trace(const Trace& t) {
  json trajectory = json::array();
  for (const ActionChoice& c : t.trajectory) trajectory.push_back(choice_to_json(c));
  json steps = json::array();
  for (const StepRecord& s : t.steps) {
    json step = {{"internal_reasoning", s.internal_reasoning_text},
                 {"prefix", s.prefix_text},
                 {"text", s.step_text}};
    if (!s.stop_reason.empty()) step["stop_reason"] = s.stop_reason;
    steps.push_back(std::move(step));
  }
  json prm = json::array();
  for (const auto& p : t.prm_scores) prm.push_back(p ? json(*p) : json(nullptr));
  return {
      {"schema_version", kTraceSchemaVersion},
      {"tree_seed", t.tree_seed},
      {"node_id", t.node_id.str()},
      {"parent_id", t.parent_id ? json(t.parent_id->str()) : json(nullptr)},
      {"input", t.input},
      {"trajectory", trajectory},
      {"steps", steps},
      {"final_answer", t.final_answer},
      {"synthesis_mode", to_string(t.synthesis_mode)},
      {"prm_scores", prm},
      {"orm_score", t.orm_score ? json(*t.orm_score) : json(nullptr)},
  };
}

std::vector<json> export_traces(const std::vector<Trace>& traces) {
  std::vector<json> out;
  out.reserve(traces.size());
  for (const Trace& t : traces) out.push_back(export_trace(t));
  return out;
}

Trace import_trace(const json& r, std::vector<std::string>* warnings) {
  static const std::set<std::string> kKnown = {
      "schema_version", "tree_seed",  "node_id",        "parent_id",
      "input",          "trajectory", "steps",          "final_answer",
      "synthesis_mode", "prm_scores", "orm_score"};
  if (!r.is_object()) throw ParseError("trace record must be an object");
  int version = r.value("schema_version", -1);
  if (version != kTraceSchemaVersion) {
    throw SchemaVersionError("trace schema version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kTraceSchemaVersion) + ")");
  }
  try {
    Trace t;
    t.tree_seed = r.at("tree_seed").get<std::int64_t>();
    t.node_id = NodeId::parse(r.at("node_id").get<std::string>());
    if (r.contains("parent_id") && !r["parent_id"].is_null()) {
      t.parent_id = NodeId::parse(r["parent_id"].get<std::string>());
    }
    t.input = r.at("input").get<std::string>();
    for (const json& c : r.at("trajectory")) {
      t.trajectory.push_back(choice_from_json(c));
    }
    const json& steps = r.at("steps");
    if (steps.size() != t.trajectory.size()) {
      throw ParseError("trace " + t.node_id.str() +
                       ": steps and trajectory lengths differ");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      StepRecord s;
      s.choice = t.trajectory[i];
      s.internal_reasoning_text = steps[i].at("internal_reasoning").get<std::string>();
      s.prefix_text = steps[i].at("prefix").get<std::string>();
      s.step_text = steps[i].at("text").get<std::string>();
      s.stop_reason = steps[i].value("stop_reason", "");
      t.steps.push_back(std::move(s));
    }
    t.final_answer = r.at("final_answer").get<std::string>();
    t.synthesis_mode =
        synthesis_mode_from_string(r.at("synthesis_mode").get<std::string>());
    for (const json& p : r.value("prm_scores", json::array())) {
      t.prm_scores.push_back(p.is_null() ? std::nullopt
                                         : std::optional<double>(p.get<double>()));
    }
    if (r.contains("orm_score") && !r["orm_score"].is_null()) {
      t.orm_score = r["orm_score"].get<double>();
    }
    if (warnings) {
      for (const auto& [key, value] : r.items()) {
        if (!kKnown.count(key)) {
          warnings->push_back("trace " + t.node_id.str() +
                              ": ignoring unknown key '" + key + "'");
        }
      }
    }
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed trace record: ") + e.what());
  }
}

TraceImport import_traces(const std::vector<json>& records) {
  TraceImport out;
  for (const json& r : records) {
    if (r.is_object() && r.size() == 1 && r.contains("header")) {
      out.header = r["header"];
      continue;
    }
    out.traces.push_back(import_trace(r, &out.warnings));
  }
  for (const std::string& w : out.warnings) log_warning(w);
  return out;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const json& r : records) out << r.dump() << '\n';
}

void write_traces_jsonl(const std::filesystem::path& path,
                        const std::vector<Trace>& traces,
                        const std::optional<json>& header) {
  std::vector<json> records;
  records.reserve(traces.size() + 1);
  if (header) records.push_back({{"header", *header}});
  for (const Trace& t : traces) records.push_back(export_trace(t));
  write_jsonl(path, records);
}

TraceImport read_traces_jsonl(const std::filesystem::path& path) {
  return import_traces(read_jsonl(path));
}

}  // namespace actree
