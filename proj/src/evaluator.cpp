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


#include "actree/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace actree {

using nlohmann::json;

std::vector<double> Rubric::normalized_weights() const {
  double total = 0.0;
  for (const RubricItem& i : items) total += i.weight;
  std::vector<double> w;
  w.reserve(items.size());
  for (const RubricItem& i : items) w.push_back(i.weight / total);
  return w;
}

Rubric rubric_from_json(const json& doc, int scale) {
  if (!doc.is_array() || doc.empty()) {
    throw ParseError("rubric must be a non-empty array of {criterion, weight}");
  }
  if (scale < 1) throw ValidationError("rubric scale must be >= 1");
  Rubric r;
  r.scale = scale;
  for (const json& item : doc) {
    if (!item.is_object() || !item.contains("criterion") ||
        !item["criterion"].is_string()) {
      throw ParseError("rubric item without a criterion: " + item.dump());
    }
    RubricItem ri{item["criterion"].get<std::string>(), item.value("weight", 1.0)};
    if (!(ri.weight > 0) || !std::isfinite(ri.weight)) {
      throw ValidationError("rubric weight must be positive: " + item.dump());
    }
    r.items.push_back(std::move(ri));
  }
  return r;
}

json to_json(const Rubric& rubric) {
  json out = json::array();
  for (const RubricItem& i : rubric.items) {
    out.push_back({{"criterion", i.criterion}, {"weight", i.weight}});
  }
  return out;
}

std::string visible_text(const SearchState& state) {
  std::string out;
  for (const StepRecord& s : state.steps) {
    if (!out.empty()) out += ' ';
    out += s.step_text;
  }
  return out;
}

std::string judge_system_prompt(ScoreKind kind, const Rubric& rubric) {
  std::string p =
      kind == ScoreKind::kProcess
          ? "You evaluate a partial chain of reasoning steps. Judge how good "
            "the final answer built from these steps is likely to be.\n"
          : "You evaluate the final answer to a task.\n";
  p += "\nScore each criterion with an integer from 0 (poor) to " +
       std::to_string(rubric.scale) + " (excellent).\n\n# Criteria\n";
  for (std::size_t i = 0; i < rubric.items.size(); ++i) {
    p += std::to_string(i + 1) + ". " + rubric.items[i].criterion + "\n";
  }
  p += "\n# Response Format\nOne line per criterion, in order:\n"
       "<criterion number>: <score> | <one-line justification>";
  return p;
}

std::string judge_user_prompt(ScoreKind kind, const SearchState& state) {
  std::string p = "# Task input\n" + state.input_text + "\n\n";
  if (kind == ScoreKind::kProcess) {
    p += "# Reasoning steps\n";
    for (std::size_t i = 0; i < state.steps.size(); ++i) {
      p += std::to_string(i + 1) + ". " + state.steps[i].step_text + "\n";
    }
  } else {
    p += "# Final answer\n" + state.final_answer.value_or("") + "\n";
  }
  return p;
}

std::optional<std::vector<int>> parse_rubric_scores(const std::string& reply,
                                                    const Rubric& rubric) {
  static const std::regex line_re(R"(^\s*(?:criterion\s*)?(\d+)\s*[:.)]\s*(\d+)\b)",
                                  std::regex::icase);
  std::vector<std::optional<int>> found(rubric.items.size());
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    std::size_t nl = reply.find('\n', pos);
    std::string line = reply.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    std::smatch m;
    if (std::regex_search(line, m, line_re)) {
      std::size_t idx = std::stoul(m[1].str());
      int score = std::stoi(m[2].str());
      if (idx >= 1 && idx <= found.size() && score >= 0 && score <= rubric.scale &&
          !found[idx - 1]) {
        found[idx - 1] = score;
      }
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  std::vector<int> out;
  for (const auto& f : found) {
    if (!f) return std::nullopt;
    out.push_back(*f);
  }
  return out;
}

double weighted_rubric_score(const std::vector<int>& item_scores,
                             const Rubric& rubric) {
  if (item_scores.size() != rubric.items.size()) {
    throw ValidationError("item score count does not match rubric");
  }
  std::vector<double> w = rubric.normalized_weights();
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += w[i] * static_cast<double>(item_scores[i]) / rubric.scale;
  }
  return std::clamp(s, 0.0, 1.0);
}

double score_generative(ScoreKind kind, const SearchState& state,
                        const Rubric& rubric, const ModelGateway& gateway,
                        const JudgeOptions& options,
                        std::optional<std::int64_t> seed) {
  if (kind == ScoreKind::kOutcome && !state.finalized()) {
    throw UsageError("outcome scoring requires a final state");
  }
  ChatRequest req;
  req.messages = {{"system", judge_system_prompt(kind, rubric)},
                  {"user", judge_user_prompt(kind, state)}};
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.seed = seed;
  for (int attempt = 0; attempt <= options.max_reasks; ++attempt) {
    Completion reply;
    try {
      reply = gateway.complete(req);
    } catch (const Error& e) {
      throw EvaluationError(std::string("judge call failed: ") + e.what());
    }
    if (auto scores = parse_rubric_scores(reply.text, rubric)) {
      return weighted_rubric_score(*scores, rubric);
    }
    req.messages.push_back({"assistant", reply.text});
    req.messages.push_back(
        {"user", "Reply with exactly one line per criterion in the form "
                 "<criterion number>: <score> | <justification>."});
  }
  throw EvaluationError("judgment unparseable after " +
                        std::to_string(options.max_reasks) + " re-asks");
}

std::vector<double> score_reranker(ScoreKind kind,
                                   const std::vector<SearchState>& states,
                                   const std::string& criteria_text,
                                   const ModelGateway& gateway) {
  if (states.empty()) throw UsageError("score_reranker needs at least one state");
  RerankRequest req;
  req.query = states.front().input_text + "\n\n" + criteria_text;
  for (const SearchState& s : states) {
    if (kind == ScoreKind::kOutcome) {
      if (!s.finalized()) throw UsageError("outcome scoring requires final states");
      req.documents.push_back(*s.final_answer);
    } else {
      std::string chain;
      for (const StepRecord& st : s.steps) {
        if (!chain.empty()) chain += '\n';
        chain += st.step_text;
      }
      req.documents.push_back(chain);
    }
  }
  std::vector<double> raw;
  try {
    raw = gateway.rerank(req);
  } catch (const Error& e) {
    throw EvaluationError(std::string("reranker evaluation failed: ") + e.what());
  }
  std::vector<double> out;
  out.reserve(raw.size());
  for (double r : raw) out.push_back(logistic(r));
  return out;
}

int count_sentences(const std::string& text) {
  // A sentence is a maximal run ending in . ! or ? (or end of text) that
  // contains at least one alphanumeric character.
  int count = 0;
  bool has_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c)) has_word = true;
    if ((c == '.' || c == '!' || c == '?') && has_word) {
      bool end = i + 1 == text.size() ||
                 std::isspace(static_cast<unsigned char>(text[i + 1])) ||
                 text[i + 1] == '"' || text[i + 1] == '\'';
      if (end) {
        ++count;
        has_word = false;
      }
    }
  }
  if (has_word) ++count;
  return count;
}

namespace {

std::size_t param_count(const json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_number_integer() ||
      params[key].get<long long>() < 0) {
    throw ValidationError(std::string("verifier needs non-negative integer '") +
                          key + "'");
  }
  return params[key].get<std::size_t>();
}

std::string param_text(const json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_string()) {
    throw ValidationError(std::string("verifier needs string '") + key + "'");
  }
  return params[key].get<std::string>();
}

}  // namespace

std::vector<std::string> verifier_names() {
  return {"min_sentences", "max_sentences", "min_chars", "max_chars",
          "contains", "not_contains", "regex", "all"};
}

Verifier make_verifier(const std::string& name, const json& params) {
  Verifier v;
  v.name = name;
  if (name == "min_sentences") {
    std::size_t n = param_count(params, "n");
    v.fn = [n](const std::string&, const std::string& t) {
      return static_cast<std::size_t>(count_sentences(t)) >= n ? 1.0 : 0.0;
    };
  } else if (name == "max_sentences") {
    std::size_t n = param_count(params, "n");
    v.fn = [n](const std::string&, const std::string& t) {
      return static_cast<std::size_t>(count_sentences(t)) <= n ? 1.0 : 0.0;
    };
  } else if (name == "min_chars") {
    std::size_t n = param_count(params, "n");
    v.fn = [n](const std::string&, const std::string& t) {
      return t.size() >= n ? 1.0 : 0.0;
    };
  } else if (name == "max_chars") {
    std::size_t n = param_count(params, "n");
    v.fn = [n](const std::string&, const std::string& t) {
      return t.size() <= n ? 1.0 : 0.0;
    };
  } else if (name == "contains" || name == "not_contains") {
    std::string needle = param_text(params, "text");
    bool want = name == "contains";
    v.fn = [needle, want](const std::string&, const std::string& t) {
      return (t.find(needle) != std::string::npos) == want ? 1.0 : 0.0;
    };
  } else if (name == "regex") {
    std::string pattern = param_text(params, "pattern");
    std::regex re;
    try {
      re = std::regex(pattern);
    } catch (const std::regex_error& e) {
      throw ValidationError("bad verifier regex '" + pattern + "': " + e.what());
    }
    v.fn = [re](const std::string&, const std::string& t) {
      return std::regex_search(t, re) ? 1.0 : 0.0;
    };
  } else if (name == "all") {
    if (!params.contains("verifiers") || !params["verifiers"].is_array()) {
      throw ValidationError("verifier 'all' needs a 'verifiers' array");
    }
    std::vector<Verifier> parts;
    for (const json& spec : params["verifiers"]) parts.push_back(make_verifier(spec));
    v.fn = [parts](const std::string& in, const std::string& t) {
      double s = 1.0;
      for (const Verifier& p : parts) s *= p.fn(in, t);
      return s;
    };
  } else {
    throw ValidationError("unknown verifier '" + name + "'");
  }
  return v;
}

Verifier make_verifier(const json& spec) {
  if (!spec.is_object() || !spec.contains("name") || !spec["name"].is_string()) {
    throw ParseError("verifier spec needs a name: " + spec.dump());
  }
  return make_verifier(spec["name"].get<std::string>(),
                       spec.value("params", json::object()));
}

double score_programmatic(ScoreKind kind, const SearchState& state,
                          const Verifier& verifier) {
  const std::string text = kind == ScoreKind::kOutcome
                               ? state.final_answer.value_or("")
                               : visible_text(state);
  try {
    double s = verifier.fn(state.input_text, text);
    if (!std::isfinite(s)) throw NumericError("non-finite verifier score");
    return std::clamp(s, 0.0, 1.0);
  } catch (const std::exception& e) {
    log_warning("verifier " + verifier.name + " failed: " + e.what());
    return 0.0;
  }
}

std::string to_string(EvaluatorKind kind) {
  switch (kind) {
    case EvaluatorKind::kGenerative: return "generative";
    case EvaluatorKind::kReranker: return "reranker";
    case EvaluatorKind::kProgrammatic: return "programmatic";
  }
  return "unknown";
}

EvaluatorKind evaluator_kind_from_string(const std::string& name) {
  if (name == "generative") return EvaluatorKind::kGenerative;
  if (name == "reranker") return EvaluatorKind::kReranker;
  if (name == "programmatic") return EvaluatorKind::kProgrammatic;
  throw ValidationError("unknown evaluator kind '" + name + "'");
}

namespace {

class GenerativeEvaluator : public Evaluator {
 public:
  GenerativeEvaluator(const ModelGateway& gateway, Rubric rubric, JudgeOptions options)
      : gateway_(gateway), rubric_(std::move(rubric)), options_(options) {}

  std::vector<double> score(ScoreKind kind, const std::vector<SearchState>& states,
                            std::uint64_t seed) const override {
    std::vector<double> out(states.size(), 0.0);
    gateway_.parallel_for(states.size(), [&](std::size_t i) {
      std::int64_t s = static_cast<std::int64_t>(
          mix_seed(seed, states[i].node_id.counter) & 0x7fffffffffffffffULL);
      try {
        out[i] = score_generative(kind, states[i], rubric_, gateway_, options_, s);
      } catch (const std::exception& e) {
        log_warning("judge failed for " + states[i].node_id.str() + ": " +
                    e.what() + "; scoring 0");
      }
    });
    return out;
  }
  EvaluatorKind kind() const override { return EvaluatorKind::kGenerative; }

 private:
  const ModelGateway& gateway_;
  Rubric rubric_;
  JudgeOptions options_;
};

class RerankerEvaluator : public Evaluator {
 public:
  RerankerEvaluator(const ModelGateway& gateway, std::string criteria)
      : gateway_(gateway), criteria_(std::move(criteria)) {}

  std::vector<double> score(ScoreKind kind, const std::vector<SearchState>& states,
                            std::uint64_t) const override {
    if (states.empty()) return {};
    try {
      return score_reranker(kind, states, criteria_, gateway_);
    } catch (const EvaluationError& e) {
      log_warning(std::string(e.what()) + "; scoring the batch 0");
      return std::vector<double>(states.size(), 0.0);
    }
  }
  EvaluatorKind kind() const override { return EvaluatorKind::kReranker; }

 private:
  const ModelGateway& gateway_;
  std::string criteria_;
};

class ProgrammaticEvaluator : public Evaluator {
 public:
  explicit ProgrammaticEvaluator(Verifier v) : verifier_(std::move(v)) {}

  std::vector<double> score(ScoreKind kind, const std::vector<SearchState>& states,
                            std::uint64_t) const override {
    std::vector<double> out;
    out.reserve(states.size());
    for (const SearchState& s : states) out.push_back(score_programmatic(kind, s, verifier_));
    return out;
  }
  EvaluatorKind kind() const override { return EvaluatorKind::kProgrammatic; }

 private:
  Verifier verifier_;
};

}  // namespace

std::unique_ptr<Evaluator> make_generative_evaluator(const ModelGateway& gateway,
                                                     Rubric rubric,
                                                     JudgeOptions options) {
  if (rubric.items.empty()) throw ValidationError("rubric has no items");
  return std::make_unique<GenerativeEvaluator>(gateway, std::move(rubric), options);
}

std::unique_ptr<Evaluator> make_reranker_evaluator(const ModelGateway& gateway,
                                                   std::string criteria_text) {
  return std::make_unique<RerankerEvaluator>(gateway, std::move(criteria_text));
}

std::unique_ptr<Evaluator> make_programmatic_evaluator(Verifier verifier) {
  return std::make_unique<ProgrammaticEvaluator>(std::move(verifier));
}

}  // namespace actree
