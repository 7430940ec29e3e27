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

#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "actree/action_space.hpp"
#include "json.hpp"

namespace actree {

enum class SynthesisMode { kStrict, kFaithful, kRestructured, kConclusion };

std::string to_string(SynthesisMode mode);
SynthesisMode synthesis_mode_from_string(const std::string& name);

// (tree seed, per-tree counter). Orders by seed then counter, which is the
// tie-break order used by beam pruning.
struct NodeId {
  std::int64_t tree_seed = 0;
  std::uint64_t counter = 0;

  auto operator<=>(const NodeId&) const = default;
  std::string str() const;
  static NodeId parse(const std::string& text);
};

// Hands out monotonically increasing node ids within one tree.
class NodeIdAllocator {
 public:
  explicit NodeIdAllocator(std::int64_t tree_seed) : tree_seed_(tree_seed) {}
  NodeId next() { return NodeId{tree_seed_, counter_++}; }
  std::int64_t tree_seed() const { return tree_seed_; }

 private:
  std::int64_t tree_seed_;
  std::uint64_t counter_ = 0;
};

struct StepRecord {
  ActionChoice choice;
  std::string internal_reasoning_text;
  std::string prefix_text;
  std::string step_text;  // prefix + model continuation
  std::string stop_reason;

  bool operator==(const StepRecord&) const = default;
};

// A node of the reasoning tree. Values are immutable in practice: every
// transition returns a new state.
struct SearchState {
  NodeId node_id;
  std::optional<NodeId> parent_id;
  std::string input_text;
  std::vector<StepRecord> steps;
  std::vector<std::optional<double>> prm_scores;  // one per step
  std::optional<std::string> final_answer;
  std::optional<SynthesisMode> synthesis_mode;
  std::optional<double> orm_score;

  std::size_t depth() const { return steps.size(); }
  bool finalized() const { return final_answer.has_value(); }
  std::optional<double> prm_score() const {
    return prm_scores.empty() ? std::nullopt : prm_scores.back();
  }

  bool operator==(const SearchState&) const = default;
};

SearchState make_root(std::string input_text, NodeIdAllocator& ids);

// Child state with one more step; the original is untouched.
SearchState append_step(const SearchState& state, StepRecord record,
                        NodeIdAllocator& ids);

// Returns a copy of `state` whose last step carries `score` (in [0,1]).
SearchState with_prm_score(const SearchState& state, double score);
SearchState with_orm_score(const SearchState& state, double score);

// Final state carrying the answer. FINISH is the finalization event and is
// not appended to the steps.
SearchState finalize(const SearchState& state, std::string answer_text,
                     SynthesisMode mode, NodeIdAllocator& ids);

// A complete root-to-final path as persisted for attribution.
struct Trace {
  std::int64_t tree_seed = 0;
  NodeId node_id;
  std::optional<NodeId> parent_id;
  std::string input;
  std::vector<ActionChoice> trajectory;
  std::vector<StepRecord> steps;
  std::string final_answer;
  SynthesisMode synthesis_mode = SynthesisMode::kStrict;
  std::vector<std::optional<double>> prm_scores;
  std::optional<double> orm_score;

  std::string id() const { return node_id.str(); }
  bool operator==(const Trace&) const = default;
};

Trace trace_of(const SearchState& state);
// Inverse of trace_of (node ids preserved).
SearchState state_of(const Trace& trace);

inline constexpr int kTraceSchemaVersion = 1;

nlohmann::json export_trace(const Trace& trace);
std::vector<nlohmann::json> export_traces(const std::vector<Trace>& traces);

struct TraceImport {
  std::vector<Trace> traces;
  std::vector<std::string> warnings;
  std::optional<nlohmann::json> header;
};

Trace import_trace(const nlohmann::json& record,
                   std::vector<std::string>* warnings = nullptr);
TraceImport import_traces(const std::vector<nlohmann::json>& records);

// JSONL file I/O. The optional header is written as the first line in the
// form {"header": {...}}.
void write_traces_jsonl(const std::filesystem::path& path,
                        const std::vector<Trace>& traces,
                        const std::optional<nlohmann::json>& header = {});
TraceImport read_traces_jsonl(const std::filesystem::path& path);

// Generic JSONL helpers shared by the other file formats.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& records);

}  // namespace actree
