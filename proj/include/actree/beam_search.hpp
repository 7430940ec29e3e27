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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "actree/controller.hpp"
#include "actree/evaluator.hpp"
#include "actree/generator.hpp"
#include "actree/search_tree.hpp"
#include "json.hpp"

namespace actree {

struct SearchConfig {
  int branching = 2;   // n
  int beam_width = 2;  // k
  int max_depth = 3;   // d
  double temperature = 0.7;
  SynthesisMode synthesis_mode = SynthesisMode::kStrict;
  ControllerKind controller = ControllerKind::kReranker;
  EvaluatorKind prm = EvaluatorKind::kReranker;
  EvaluatorKind orm = EvaluatorKind::kGenerative;
  std::int64_t tree_seed = 0;
  bool return_all_finals = false;
};

// Throws ValidationError unless n, k, d >= 1.
void validate(const SearchConfig& config);
nlohmann::json to_json(const SearchConfig& config);
// Missing keys keep their defaults.
SearchConfig search_config_from_json(const nlohmann::json& doc);

// Borrowed collaborators of one tree run.
struct SearchModules {
  const ModelGateway* gateway = nullptr;
  const Controller* controller = nullptr;
  const Generator* generator = nullptr;
  const Evaluator* prm = nullptr;
  const Evaluator* orm = nullptr;
};

// Every candidate the PRM saw (or would have seen), for the explored log.
struct ExploredNode {
  int layer = 0;
  SearchState state;
  bool kept = false;
};

struct TreeResult {
  std::int64_t tree_seed = 0;
  std::vector<SearchState> finals;  // ORM descending, node id ascending
  std::vector<Trace> traces;        // aligned with finals
  std::vector<ExploredNode> explored;
  std::vector<std::size_t> frontier_sizes;  // |L_i| for i = 1..
  std::vector<std::string> failures;
  int random_fallbacks = 0;

  // The argmax final, or all of them with return_all_finals.
  std::vector<Trace> selected(const SearchConfig& config) const;
};

class NoSolutionError : public Error {
 public:
  NoSolutionError(const std::string& what, std::vector<Trace> partial)
      : Error(what), partial_(std::move(partial)) {}
  // Deepest unfinished states, exported with an empty final answer.
  const std::vector<Trace>& partial_traces() const { return partial_; }

 private:
  std::vector<Trace> partial_;
};

// Trace of an unfinished state; final_answer is left empty.
Trace partial_trace_of(const SearchState& state);

// Descending PRM score, ties by ascending node id; keeps min(k, size).
// Throws UsageError when a candidate lacks a PRM score.
std::vector<SearchState> prune_layer(std::vector<SearchState> candidates, int k);

TreeResult run_tree(const std::string& input, const SearchConfig& config,
                    const SearchModules& modules);

struct ForestResult {
  std::vector<Trace> traces;  // tree by tree, in seed order
  std::vector<TreeResult> trees;
  std::vector<std::pair<std::int64_t, std::string>> failed_trees;
};

// One tree per seed (config.tree_seed is replaced). Failed trees are recorded
// and the rest continue.
ForestResult run_forest(const std::string& input, const SearchConfig& config,
                        const std::vector<std::int64_t>& seeds,
                        const SearchModules& modules);

}  // namespace actree
