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

#include "actree/generator.hpp"

namespace actree {

using nlohmann::json;

namespace {

constexpr const char* kVanillaTemplate = R"(# Instructions
{task_instructions}

{field_descriptions}

When solving this problem, you must break down your solution into a series of reasoning steps, followed by a final answer.
Each step towards the answer should be encased within <step>...</step> tags, and contain a `{reasoning_field_name}` that advances the solution towards producing {output_fields}.
{final_output_description}

Your reasoning process should follow the rules below:
- Each `{reasoning_field_name}` (of type `{reasoning_field_type}`) entails {reasoning_field_description}.{thought_length_instruction}
  {response_length_instruction}

## Response Format
Once a user provides {input_fields}, your response must follow this template:

<thinking>
<step>
## {reasoning_field_name}
The first reasoning step towards producing {output_fields}
</step>
<step>
## {reasoning_field_name}
The second reasoning step towards producing {output_fields}
</step>
...
<step>
## {reasoning_field_name}
The final reasoning step towards producing {output_fields}
</step>
</thinking>
<answer>
{output_field_sections}
</answer>)";

constexpr const char* kInternalReasoningTemplate = R"(# Instructions

{task_instructions}

{field_descriptions}

When solving this problem, you must break down your solution into a series of reasoning steps, followed by a final answer.
Each step towards the answer should be encased within <step>...</step> tags, and contain a `{reasoning_field_name}` that advances the solution towards producing {output_fields}.
{final_output_description}

Your reasoning process should follow the rules below:
- Each `{reasoning_field_name}` (of type `{reasoning_field_type}`) entails {reasoning_field_description}.
- Before writing a new `{reasoning_field_name}`, start with some internal reasoning which discusses and guides what to do with the next `{reasoning_field_name}`.{thought_length_instruction}
  {response_length_instruction}

## Response Format

Once a user provides {input_fields}, your response must follow this template:

<thinking>
<step>
## internal_reasoning
Your internal reasoning about the first `{reasoning_field_name}`
## {reasoning_field_name}
The first reasoning step towards producing {output_fields}
</step>
<step>
## internal_reasoning
Your internal reasoning about the second `{reasoning_field_name}`
## {reasoning_field_name}
The second reasoning step towards producing {output_fields}
</step>
...
</thinking>
<answer>
{output_field_sections}
</answer>)";

constexpr const char* kStrictBlock =
    R"(Your final answer must include the full text from all reasoning steps, copied nearly word-for-word and in sequential order.

- Preserve the exact wording, phrasing, structure, and examples.
- Maintain the original order and logical flow exactly as provided.
- You may add only: A brief introduction/conclusion, short transitions.
- Do NOT rewrite, paraphrase, summarize, or restructure.
- Do NOT add new ideas, arguments, facts, or examples.)";

constexpr const char* kFaithfulBlock =
    R"(Your final answer must remain highly faithful to the reasoning steps.

- Preserve the full set of reasoning steps and their original order.
- You may lightly rephrase for clarity, but meaning must remain unchanged.
- Structure and sequence should closely follow the original.
- Do NOT introduce new ideas or significantly alter existing reasoning.)";

constexpr const char* kRestructuredBlock =
    R"(Your final answer should preserve the same core ideas and reasoning from the steps provided, while improving clarity and coherence.

- Maintain the essential arguments and logical intent.
- You may rephrase, reorganize, and restructure the content for better flow and readability.
- The overall set of ideas should remain the same, but the presentation may differ.
- Do NOT introduce new ideas or factual content beyond what appears in the reasoning steps.

Your goal is to produce a well-structured synthesis that faithfully reflects the original reasoning while optimizing expression and organization.)";

constexpr const char* kConclusionBlock =
    R"(Your final answer must be a standalone response to the user's task and instructions.

- Focus on producing a clear, logically consistent, and high-quality final answer.
- You are not required to preserve the structure, wording, or order of the reasoning steps (between <thinking>...</thinking> tags).
- Use the reasoning steps only as internal guidance; do NOT mention them or refer to them.
- The user will *not* have access to the reasoning steps you wrote, so referencing them is confusing and unhelpful. The user will only see what you write between <answer>...</answer> tags.
- Do NOT explain what you are going to do; just produce the final deliverable. While reasoning was meant for planning, the final output should be a standalone response to the user's task and instructions.
- If the task requires strict formatting (math, formatting specifications for text, code, etc.), follow those requirements exactly in the final output.

Your goal is to output only the final answer content that satisfies the user's instructions.)";

bool space_uses_internal_reasoning(const ActionSpace& space) {
  for (const Dimension& d : space.dimensions()) {
    for (const ActionTemplate& t : d.templates) {
      if (t.internal_reasoning) return true;
    }
  }
  return false;
}

}  // namespace

const PromptTemplateSet& PromptTemplateSet::standard() {
  static const PromptTemplateSet set{
      kVanillaTemplate,
      kInternalReasoningTemplate,
      {{SynthesisMode::kStrict, kStrictBlock},
       {SynthesisMode::kFaithful, kFaithfulBlock},
       {SynthesisMode::kRestructured, kRestructuredBlock},
       {SynthesisMode::kConclusion, kConclusionBlock}}};
  return set;
}

TaskSignature task_signature_from_json(const json& j) {
  TaskSignature s;
  auto get = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j[key].get<std::string>();
  };
  get("task_instructions", s.task_instructions);
  get("field_descriptions", s.field_descriptions);
  get("input_fields", s.input_fields);
  get("output_fields", s.output_fields);
  get("output_field_sections", s.output_field_sections);
  get("reasoning_field_name", s.reasoning_field_name);
  get("reasoning_field_type", s.reasoning_field_type);
  get("reasoning_field_description", s.reasoning_field_description);
  get("thought_length_instruction", s.thought_length_instruction);
  get("response_length_instruction", s.response_length_instruction);
  return s;
}

json to_json(const TaskSignature& s) {
  return {{"task_instructions", s.task_instructions},
          {"field_descriptions", s.field_descriptions},
          {"input_fields", s.input_fields},
          {"output_fields", s.output_fields},
          {"output_field_sections", s.output_field_sections},
          {"reasoning_field_name", s.reasoning_field_name},
          {"reasoning_field_type", s.reasoning_field_type},
          {"reasoning_field_description", s.reasoning_field_description},
          {"thought_length_instruction", s.thought_length_instruction},
          {"response_length_instruction", s.response_length_instruction}};
}

std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(tpl.size() * 2);
  std::size_t i = 0;
  while (i < tpl.size()) {
    char c = tpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t close = tpl.find('}', i);
    if (close == std::string_view::npos) {
      throw TemplateError("unterminated placeholder in template");
    }
    std::string key(tpl.substr(i + 1, close - i - 1));
    auto it = bindings.find(key);
    if (it == bindings.end()) {
      throw TemplateError("unbound template placeholder {" + key + "}");
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

std::string render_system_prompt(SynthesisMode mode, const TaskSignature& task,
                                 bool use_internal_reasoning,
                                 const PromptTemplateSet& templates) {
  auto block = templates.final_output.find(mode);
  if (block == templates.final_output.end()) {
    throw TemplateError("no final-output instruction for mode " + to_string(mode));
  }
  const std::map<std::string, std::string> bindings = {
      {"task_instructions", task.task_instructions},
      {"field_descriptions", task.field_descriptions},
      {"input_fields", task.input_fields},
      {"output_fields", task.output_fields},
      {"output_field_sections", task.output_field_sections},
      {"reasoning_field_name", task.reasoning_field_name},
      {"reasoning_field_type", task.reasoning_field_type},
      {"reasoning_field_description", task.reasoning_field_description},
      {"thought_length_instruction", task.thought_length_instruction},
      {"response_length_instruction", task.response_length_instruction},
      {"final_output_description", block->second},
  };
  return render_template(
      use_internal_reasoning ? templates.internal_reasoning : templates.vanilla,
      bindings);
}

std::string serialize_step(const StepRecord& step, std::string_view field) {
  std::string out = "<step>\n";
  if (!step.internal_reasoning_text.empty()) {
    out += "## internal_reasoning\n";
    out += step.internal_reasoning_text;
    out += '\n';
  }
  out += "## ";
  out += field;
  out += '\n';
  out += step.step_text;
  out += "\n</step>\n";
  return out;
}

namespace {
std::string serialize_thinking(const SearchState& state, std::string_view field) {
  std::string out = "<thinking>\n";
  for (const StepRecord& s : state.steps) out += serialize_step(s, field);
  return out;
}
}  // namespace

std::string build_step_prefill(const SearchState& state,
                               const Intervention& intervention,
                               std::string_view field) {
  if (state.finalized()) throw UsageError("cannot extend a finalized state");
  std::string out = serialize_thinking(state, field);
  out += "<step>\n";
  if (!intervention.internal_reasoning_text.empty()) {
    out += "## internal_reasoning\n";
    out += intervention.internal_reasoning_text;
    out += '\n';
  }
  out += "## ";
  out += field;
  out += '\n';
  out += intervention.prefix_text;
  return out;
}

std::string build_answer_prefill(const SearchState& state,
                                 std::string_view field) {
  return serialize_thinking(state, field) + "</thinking>\n<answer>\n";
}

Generator::Generator(const ModelGateway& gateway, const ActionSpace& space,
                     TaskSignature task, SynthesisMode mode,
                     GeneratorOptions options)
    : gateway_(gateway),
      space_(space),
      task_(std::move(task)),
      mode_(mode),
      options_(options),
      system_prompt_(render_system_prompt(mode_, task_,
                                          space_uses_internal_reasoning(space))) {}

ChatRequest Generator::step_request(const SearchState& state,
                                    const ActionChoice& choice,
                                    std::optional<std::int64_t> seed) const {
  if (choice.is_finish) {
    throw UsageError("generate_step called with FINISH; use generate_answer");
  }
  Intervention iv = render_intervention(choice, space_);
  ChatRequest req;
  req.messages = {{"system", system_prompt_}, {"user", state.input_text}};
  req.prefill = build_step_prefill(state, iv, task_.reasoning_field_name);
  req.stop_sequences = {std::string(kStepStop)};
  req.temperature = options_.temperature;
  req.max_tokens = options_.step_max_tokens;
  req.seed = seed;
  return req;
}

StepRecord Generator::step_from_completion(const ActionChoice& choice,
                                           const Completion& completion) const {
  Intervention iv = render_intervention(choice, space_);
  std::string continuation = rtrim(completion.text);
  if (iv.prefix_text.empty()) continuation = trim(continuation);
  if (trim(continuation).empty()) {
    throw GenerationFailure("empty step continuation");
  }
  StepRecord rec;
  rec.choice = choice;
  rec.internal_reasoning_text = iv.internal_reasoning_text;
  rec.prefix_text = iv.prefix_text;
  rec.step_text = iv.prefix_text + continuation;
  rec.stop_reason = to_string(completion.stop_reason);
  return rec;
}

StepRecord Generator::generate_step(const SearchState& state,
                                    const ActionChoice& choice,
                                    std::optional<std::int64_t> seed) const {
  ChatRequest req = step_request(state, choice, seed);
  return step_from_completion(choice, gateway_.complete(req));
}

ChatRequest Generator::answer_request(const SearchState& state,
                                      std::optional<std::int64_t> seed) const {
  ChatRequest req;
  req.messages = {{"system", system_prompt_}, {"user", state.input_text}};
  req.prefill = build_answer_prefill(state, task_.reasoning_field_name);
  req.stop_sequences = {std::string(kAnswerStop)};
  req.temperature = options_.temperature;
  req.max_tokens = options_.answer_max_tokens;
  req.seed = seed;
  return req;
}

std::string Generator::answer_from_completion(const Completion& completion) const {
  std::string answer = trim(completion.text);
  if (answer.empty()) throw GenerationFailure("empty final answer");
  return answer;
}

std::string Generator::generate_answer(const SearchState& state,
                                       std::optional<std::int64_t> seed) const {
  return answer_from_completion(gateway_.complete(answer_request(state, seed)));
}

}  // namespace actree
