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


#include "actree/controller.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace actree {

using nlohmann::json;

std::vector<ActionChoice> candidate_choices(const SearchState& state,
                                            const ActionSpace& space) {
  return enumerate_choices(space, space.allow_finish() && state.depth() >= 1);
}

std::string choice_document(const ActionChoice& choice,
                            const ActionSpace& space) {
  if (choice.is_finish) return kFinishDocument;
  std::string doc;
  for (const Dimension& d : space.dimensions()) {
    auto it = choice.per_dimension.find(d.name);
    if (it == choice.per_dimension.end()) {
      throw ValidationError("choice lacks dimension " + d.name);
    }
    const ActionTemplate& t = space.find(d.name, it->second);
    if (!doc.empty()) doc += '\n';
    doc += d.name + ": " + t.name + " - " + t.definition;
  }
  return doc;
}

std::string reasoning_query(const SearchState& state) {
  std::string q = state.input_text;
  for (const StepRecord& s : state.steps) {
    q += "\n";
    q += s.step_text;
  }
  return q;
}

ControllerDecision select_reranker(const SearchState& state,
                                   const ActionSpace& space, int n,
                                   const ModelGateway& gateway) {
  if (n < 1) throw UsageError("controller branching must be >= 1");
  std::vector<ActionChoice> cands = candidate_choices(state, space);
  RerankRequest req;
  req.query = reasoning_query(state);
  req.documents.reserve(cands.size());
  for (const ActionChoice& c : cands) {
    req.documents.push_back(choice_document(c, space));
  }
  std::vector<double> scores;
  try {
    scores = gateway.rerank(req);
  } catch (const Error& e) {
    throw ControllerError(std::string("reranker controller failed: ") +
                          e.what());
  }
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  ControllerDecision out;
  std::size_t take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < take; ++i) out.choices.push_back(cands[order[i]]);
  return out;
}

namespace {

std::vector<ActionChoice> sample_without_replacement(
    std::vector<ActionChoice> pool, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  count = std::min(count, pool.size());
  // Partial Fisher-Yates: the first `count` slots are the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

ControllerDecision select_random(const SearchState& state,
                                 const ActionSpace& space, int n,
                                 std::uint64_t seed) {
  if (n < 1) throw UsageError("controller branching must be >= 1");
  ControllerDecision out;
  out.choices = sample_without_replacement(candidate_choices(state, space),
                                           static_cast<std::size_t>(n), seed);
  return out;
}

std::string generative_controller_prompt(const ActionSpace& space, int n,
                                         bool offer_finish) {
  json properties = json::object();
  json required = json::array();
  for (const Dimension& d : space.dimensions()) {
    json names = json::array();
    std::string desc;
    for (const ActionTemplate& t : d.templates) {
      names.push_back(t.name);
      desc += "\n- " + t.name + ": " + t.definition;
    }
    properties[d.name] = {{"type", "string"},
                          {"enum", names},
                          {"description", "Options:" + desc}};
    required.push_back(d.name);
  }
  json tools = json::array();
  tools.push_back({{"name", "take_action"},
                   {"description", "Write the next reasoning step using one "
                                   "option from every argument."},
                   {"parameters",
                    {{"type", "object"},
                     {"properties", properties},
                     {"required", required},
                     {"additionalProperties", false}}}});
  if (offer_finish) {
    tools.push_back({{"name", "finish"},
                     {"description", std::string(kFinishDocument)},
                     {"parameters", {{"type", "object"}, {"properties", json::object()}}}});
  }
  std::string prompt =
      "You guide a step-by-step reasoning process by choosing the action for "
      "the next step. Each action is a tool call.\n\n# Tools\n";
  prompt += tools.dump(2);
  prompt += "\n\n# Response Format\nPropose up to " + std::to_string(n) +
            " distinct tool calls. Reply with a JSON array only, for example:\n"
            "[{\"name\": \"take_action\", \"arguments\": {...}, "
            "\"rationale\": \"one sentence\"}]";
  return prompt;
}

namespace {

// Returns the first parseable JSON array (or object) embedded in text.
std::optional<json> find_json(const std::string& text) {
  for (char open : {'[', '{'}) {
    char close = open == '[' ? ']' : '}';
    std::size_t start = text.find(open);
    std::size_t end = text.rfind(close);
    while (start != std::string::npos && end != std::string::npos && end > start) {
      json j = json::parse(text.substr(start, end - start + 1), nullptr, false);
      if (!j.is_discarded()) return j;
      start = text.find(open, start + 1);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::vector<ParsedToolCall>> parse_tool_calls(
    const std::string& text, const ActionSpace& space, bool offer_finish) {
  std::optional<json> doc = find_json(text);
  if (!doc) return std::nullopt;
  json calls;
  if (doc->is_array()) {
    calls = *doc;
  } else if (doc->is_object() && doc->contains("tool_calls") &&
             (*doc)["tool_calls"].is_array()) {
    calls = (*doc)["tool_calls"];
  } else if (doc->is_object() && doc->contains("name")) {
    calls = json::array({*doc});
  } else {
    return std::nullopt;
  }
  std::vector<ParsedToolCall> out;
  for (const json& c : calls) {
    ParsedToolCall p;
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) {
      p.problem = "call without a name";
      out.push_back(std::move(p));
      continue;
    }
    if (c.contains("rationale") && c["rationale"].is_string()) {
      p.rationale = c["rationale"].get<std::string>();
    }
    const std::string name = c["name"].get<std::string>();
    if (name == "finish") {
      if (offer_finish) {
        p.choice = ActionChoice::finish();
      } else {
        p.problem = "finish is not available at this step";
      }
    } else if (name == "take_action") {
      const json args = c.value("arguments", json::object());
      ActionChoice choice;
      bool ok = args.is_object();
      if (ok) {
        for (auto it = args.begin(); it != args.end(); ++it) {
          if (!it.value().is_string()) {
            ok = false;
            break;
          }
          choice.per_dimension[it.key()] = it.value().get<std::string>();
        }
      }
      if (ok && space.is_valid(choice)) {
        p.choice = std::move(choice);
      } else {
        p.problem = "arguments outside the action space: " + args.dump();
      }
    } else {
      p.problem = "unknown tool " + name;
    }
    out.push_back(std::move(p));
  }
  return out;
}

ControllerDecision select_generative(const SearchState& state,
                                     const ActionSpace& space, int n,
                                     const ModelGateway& gateway,
                                     std::uint64_t seed,
                                     const GenerativeControllerOptions& options) {
  if (n < 1) throw UsageError("controller branching must be >= 1");
  const bool offer_finish = space.allow_finish() && state.depth() >= 1;
  ChatRequest req;
  std::string user = "# Task input\n" + state.input_text + "\n\n# Reasoning so far\n";
  if (state.steps.empty()) user += "(no steps yet)\n";
  for (std::size_t i = 0; i < state.steps.size(); ++i) {
    user += std::to_string(i + 1) + ". " + state.steps[i].step_text + "\n";
  }
  req.messages = {{"system", generative_controller_prompt(space, n, offer_finish)},
                  {"user", user}};
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.seed = static_cast<std::int64_t>(seed & 0x7fffffffffffffffULL);

  std::optional<std::vector<ParsedToolCall>> calls;
  for (int attempt = 0; attempt <= options.max_reasks; ++attempt) {
    Completion reply;
    try {
      reply = gateway.complete(req);
    } catch (const Error& e) {
      throw ControllerError(std::string("generative controller failed: ") +
                            e.what());
    }
    calls = parse_tool_calls(reply.text, space, offer_finish);
    if (calls) break;
    req.messages.push_back({"assistant", reply.text});
    req.messages.push_back(
        {"user", "Your reply was not a JSON array of tool calls. Reply with "
                 "the JSON array only."});
  }
  if (!calls) {
    throw ControllerError("generative controller output unparseable after " +
                          std::to_string(options.max_reasks) + " re-asks");
  }

  ControllerDecision out;
  std::set<ActionChoice> seen;
  for (ParsedToolCall& c : *calls) {
    if (!c.choice) {
      log_warning("controller dropped tool call: " + c.problem);
      continue;
    }
    if (!seen.insert(*c.choice).second) {
      log_info("controller dropped duplicate call " + describe(*c.choice));
      continue;
    }
    if (out.choices.size() >= static_cast<std::size_t>(n)) break;
    out.choices.push_back(*c.choice);
    out.rationale_texts.push_back(c.rationale);
  }

  const std::size_t target = std::min<std::size_t>(
      static_cast<std::size_t>(n), candidate_choices(state, space).size());
  if (out.choices.size() < target) {
    std::vector<ActionChoice> fill;
    bool filled = false;
    if (gateway.has_reranker()) {
      try {
        fill = select_reranker(state, space,
                               static_cast<int>(candidate_choices(state, space).size()),
                               gateway)
                   .choices;
        filled = true;
      } catch (const ControllerError& e) {
        log_warning(std::string("backfill reranker failed, sampling: ") + e.what());
      }
    }
    if (!filled) {
      std::vector<ActionChoice> pool;
      for (ActionChoice& c : candidate_choices(state, space)) {
        if (!seen.count(c)) pool.push_back(std::move(c));
      }
      const std::size_t all = pool.size();
      fill = sample_without_replacement(std::move(pool), all,
                                        mix_seed(seed, 0xb1a5));
    }
    for (ActionChoice& c : fill) {
      if (out.choices.size() >= target) break;
      if (!seen.insert(c).second) continue;
      out.choices.push_back(std::move(c));
      out.rationale_texts.emplace_back();
    }
  }
  return out;
}

ControllerDecision select_forced(const SearchState& state,
                                 const TrajectoryPlan& plan) {
  if (state.finalized()) throw UsageError("forced controller on a final state");
  if (state.depth() > plan.steps.size()) {
    throw UsageError("state depth " + std::to_string(state.depth()) +
                     " exceeds plan length " + std::to_string(plan.steps.size()));
  }
  ControllerDecision out;
  if (state.depth() == plan.steps.size()) {
    out.choices.push_back(ActionChoice::finish());
  } else {
    out.choices.push_back(plan.steps[state.depth()]);
  }
  return out;
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kReranker: return "reranker";
    case ControllerKind::kGenerative: return "generative";
    case ControllerKind::kForced: return "forced";
    case ControllerKind::kRandom: return "random";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "reranker") return ControllerKind::kReranker;
  if (name == "generative") return ControllerKind::kGenerative;
  if (name == "forced") return ControllerKind::kForced;
  if (name == "random") return ControllerKind::kRandom;
  throw ValidationError("unknown controller kind '" + name + "'");
}

namespace {

class RerankerController : public Controller {
 public:
  RerankerController(const ActionSpace& space, const ModelGateway& gateway)
      : space_(space), gateway_(gateway) {}
  ControllerDecision select(const SearchState& state, int n,
                            std::uint64_t seed) const override {
    try {
      return select_reranker(state, space_, n, gateway_);
    } catch (const ControllerError& e) {
      log_warning(std::string(e.what()) + "; falling back to random choices");
      ControllerDecision d = select_random(state, space_, n, seed);
      d.fallback = true;
      return d;
    }
  }
  ControllerKind kind() const override { return ControllerKind::kReranker; }

 private:
  const ActionSpace& space_;
  const ModelGateway& gateway_;
};

class GenerativeController : public Controller {
 public:
  GenerativeController(const ActionSpace& space, const ModelGateway& gateway,
                       GenerativeControllerOptions options)
      : space_(space), gateway_(gateway), options_(options) {}
  ControllerDecision select(const SearchState& state, int n,
                            std::uint64_t seed) const override {
    try {
      return select_generative(state, space_, n, gateway_, seed, options_);
    } catch (const ControllerError& e) {
      log_warning(std::string(e.what()) + "; falling back to random choices");
      ControllerDecision d = select_random(state, space_, n, seed);
      d.fallback = true;
      return d;
    }
  }
  ControllerKind kind() const override { return ControllerKind::kGenerative; }

 private:
  const ActionSpace& space_;
  const ModelGateway& gateway_;
  GenerativeControllerOptions options_;
};

class ForcedController : public Controller {
 public:
  explicit ForcedController(TrajectoryPlan plan) : plan_(std::move(plan)) {}
  ControllerDecision select(const SearchState& state, int,
                            std::uint64_t) const override {
    return select_forced(state, plan_);
  }
  ControllerKind kind() const override { return ControllerKind::kForced; }

 private:
  TrajectoryPlan plan_;
};

class RandomController : public Controller {
 public:
  explicit RandomController(const ActionSpace& space) : space_(space) {}
  ControllerDecision select(const SearchState& state, int n,
                            std::uint64_t seed) const override {
    return select_random(state, space_, n, seed);
  }
  ControllerKind kind() const override { return ControllerKind::kRandom; }

 private:
  const ActionSpace& space_;
};

}  // namespace

std::unique_ptr<Controller> make_reranker_controller(const ActionSpace& space,
                                                     const ModelGateway& gateway) {
  return std::make_unique<RerankerController>(space, gateway);
}

std::unique_ptr<Controller> make_generative_controller(
    const ActionSpace& space, const ModelGateway& gateway,
    GenerativeControllerOptions options) {
  return std::make_unique<GenerativeController>(space, gateway, options);
}

std::unique_ptr<Controller> make_forced_controller(TrajectoryPlan plan) {
  return std::make_unique<ForcedController>(std::move(plan));
}

std::unique_ptr<Controller> make_random_controller(const ActionSpace& space) {
  return std::make_unique<RandomController>(space);
}

}  // namespace actree
