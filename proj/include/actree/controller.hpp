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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "actree/action_space.hpp"
#include "actree/gateway.hpp"
#include "actree/search_tree.hpp"

namespace actree {

class ControllerError : public Error {
 public:
  using Error::Error;
};

// A fixed sequence of non-FINISH choices, optionally with a model score.
struct TrajectoryPlan {
  std::vector<ActionChoice> steps;
  std::optional<double> predicted_score;

  bool operator==(const TrajectoryPlan&) const = default;
};

struct ControllerDecision {
  std::vector<ActionChoice> choices;
  std::vector<std::string> rationale_texts;  // generative controller only
  bool fallback = false;  // choices came from the random fallback
};

// Candidates for the next step: every choice in enumeration order, plus
// FINISH when the space allows it and the state has at least one step.
std::vector<ActionChoice> candidate_choices(const SearchState& state,
                                            const ActionSpace& space);

// "<dimension>: <name> - <definition>" per dimension, newline-joined.
std::string choice_document(const ActionChoice& choice,
                            const ActionSpace& space);
inline constexpr const char* kFinishDocument =
    "finish reasoning and write the final answer";

// Input followed by the visible step texts.
std::string reasoning_query(const SearchState& state);

// Scores every candidate with the reranker and keeps the n best, ties in
// enumeration order. Throws ControllerError on gateway failure.
ControllerDecision select_reranker(const SearchState& state,
                                   const ActionSpace& space, int n,
                                   const ModelGateway& gateway);

// n distinct candidates drawn uniformly without replacement.
ControllerDecision select_random(const SearchState& state,
                                 const ActionSpace& space, int n,
                                 std::uint64_t seed);

struct GenerativeControllerOptions {
  double temperature = 0.7;
  int max_tokens = 1024;
  int max_reasks = 2;
};

std::string generative_controller_prompt(const ActionSpace& space, int n,
                                         bool offer_finish);

struct ParsedToolCall {
  std::optional<ActionChoice> choice;  // empty when the call is malformed
  std::string rationale;
  std::string problem;
};

// Parses a JSON array of {"name", "arguments", "rationale"} objects (or an
// object holding one under "tool_calls"). Returns nullopt when no such JSON
// can be found.
std::optional<std::vector<ParsedToolCall>> parse_tool_calls(
    const std::string& text, const ActionSpace& space, bool offer_finish);

// Asks the chat model for up to n tool calls, drops invalid and duplicate
// calls, then backfills from the reranker (or at random without one).
ControllerDecision select_generative(
    const SearchState& state, const ActionSpace& space, int n,
    const ModelGateway& gateway, std::uint64_t seed,
    const GenerativeControllerOptions& options = {});

// plan[depth], or FINISH once the plan is complete.
ControllerDecision select_forced(const SearchState& state,
                                 const TrajectoryPlan& plan);

enum class ControllerKind { kReranker, kGenerative, kForced, kRandom };
std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

// Polymorphic handle used by the beam search.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControllerDecision select(const SearchState& state, int n,
                                    std::uint64_t seed) const = 0;
  virtual ControllerKind kind() const = 0;
};

// Reranker and generative controllers fall back to select_random (logged)
// when the model call fails.
std::unique_ptr<Controller> make_reranker_controller(
    const ActionSpace& space, const ModelGateway& gateway);
std::unique_ptr<Controller> make_generative_controller(
    const ActionSpace& space, const ModelGateway& gateway,
    GenerativeControllerOptions options = {});
std::unique_ptr<Controller> make_forced_controller(TrajectoryPlan plan);
std::unique_ptr<Controller> make_random_controller(const ActionSpace& space);

}  // namespace actree
