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

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "actree/action_space.hpp"
#include "actree/gateway.hpp"
#include "actree/search_tree.hpp"
#include "json.hpp"

namespace actree {

inline constexpr std::string_view kStepStop = "</step>";
inline constexpr std::string_view kAnswerStop = "</answer>";

// Describes the task's input/output fields; bound into the system prompt.
struct TaskSignature {
  std::string task_instructions;
  std::string field_descriptions;
  std::string input_fields = "`input`";
  std::string output_fields = "`answer`";
  std::string output_field_sections = "The final answer.";
  std::string reasoning_field_name = "claim";
  std::string reasoning_field_type = "str";
  std::string reasoning_field_description =
      "a single, self-contained reasoning step";
  std::string thought_length_instruction;
  // Empty by default; set it to control answer length explicitly.
  std::string response_length_instruction;
};

TaskSignature task_signature_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSignature& sig);

// System prompt templates with {placeholder} slots, plus one final-output
// instruction block per synthesis mode.
struct PromptTemplateSet {
  std::string vanilla;
  std::string internal_reasoning;
  std::map<SynthesisMode, std::string> final_output;

  static const PromptTemplateSet& standard();
};

// Substitutes {name} placeholders. Throws TemplateError on any placeholder
// without a binding.
std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& bindings);

std::string render_system_prompt(
    SynthesisMode mode, const TaskSignature& task, bool use_internal_reasoning,
    const PromptTemplateSet& templates = PromptTemplateSet::standard());

// `<step>\n## internal_reasoning\n{ir}\n## {field}\n{text}\n</step>\n`; the
// internal_reasoning section is omitted when the step has none.
std::string serialize_step(const StepRecord& step,
                           std::string_view field = "claim");

// `<thinking>\n` + closed prior steps + an open step ending in the prefix.
std::string build_step_prefill(const SearchState& state,
                               const Intervention& intervention,
                               std::string_view field = "claim");

// `<thinking>\n` + closed steps + `</thinking>\n<answer>\n`.
std::string build_answer_prefill(const SearchState& state,
                                 std::string_view field = "claim");

struct GeneratorOptions {
  double temperature = 0.7;
  int step_max_tokens = 256;
  int answer_max_tokens = 1024;
};

// Produces reasoning steps and final answers through the gateway. Stateless
// apart from its configuration; safe to share across threads.
class Generator {
 public:
  Generator(const ModelGateway& gateway, const ActionSpace& space,
            TaskSignature task, SynthesisMode mode,
            GeneratorOptions options = {});

  SynthesisMode mode() const { return mode_; }
  const TaskSignature& task() const { return task_; }
  const std::string& system_prompt() const { return system_prompt_; }

  ChatRequest step_request(const SearchState& state, const ActionChoice& choice,
                           std::optional<std::int64_t> seed = {}) const;
  // Builds the StepRecord from a completion of step_request. Throws
  // GenerationFailure for empty continuations.
  StepRecord step_from_completion(const ActionChoice& choice,
                                  const Completion& completion) const;
  StepRecord generate_step(const SearchState& state, const ActionChoice& choice,
                           std::optional<std::int64_t> seed = {}) const;

  ChatRequest answer_request(const SearchState& state,
                             std::optional<std::int64_t> seed = {}) const;
  std::string answer_from_completion(const Completion& completion) const;
  std::string generate_answer(const SearchState& state,
                              std::optional<std::int64_t> seed = {}) const;

 private:
  const ModelGateway& gateway_;
  const ActionSpace& space_;
  TaskSignature task_;
  SynthesisMode mode_;
  GeneratorOptions options_;
  std::string system_prompt_;
};

}  // namespace actree
