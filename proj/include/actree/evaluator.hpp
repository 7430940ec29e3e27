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

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "actree/gateway.hpp"
#include "actree/search_tree.hpp"
#include "json.hpp"

namespace actree {

class EvaluationError : public Error {
 public:
  using Error::Error;
};

// process = PRM over a partial chain, outcome = ORM over a final answer.
enum class ScoreKind { kProcess, kOutcome };

struct RubricItem {
  std::string criterion;
  double weight = 1.0;
};

// Items are scored on 0..scale; weights are normalized to sum to 1.
struct Rubric {
  std::vector<RubricItem> items;
  int scale = 4;

  std::vector<double> normalized_weights() const;
};

// [{"criterion": "...", "weight": 0.5}, ...]
Rubric rubric_from_json(const nlohmann::json& doc, int scale = 4);
nlohmann::json to_json(const Rubric& rubric);

// Step texts joined with single spaces; internal reasoning is excluded.
std::string visible_text(const SearchState& state);

std::string judge_system_prompt(ScoreKind kind, const Rubric& rubric);
std::string judge_user_prompt(ScoreKind kind, const SearchState& state);

// Parses "<item>: <score> | <justification>" lines, one per rubric item.
std::optional<std::vector<int>> parse_rubric_scores(const std::string& reply,
                                                    const Rubric& rubric);

double weighted_rubric_score(const std::vector<int>& item_scores,
                             const Rubric& rubric);

struct JudgeOptions {
  double temperature = 0.0;
  int max_tokens = 512;
  int max_reasks = 2;
};

// Throws EvaluationError when the judgment stays unparseable.
double score_generative(ScoreKind kind, const SearchState& state,
                        const Rubric& rubric, const ModelGateway& gateway,
                        const JudgeOptions& options = {},
                        std::optional<std::int64_t> seed = {});

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// One batched rerank call; documents are reasoning chains (process) or
// answers (outcome). Raw scores go through the logistic squash.
std::vector<double> score_reranker(ScoreKind kind,
                                   const std::vector<SearchState>& states,
                                   const std::string& criteria_text,
                                   const ModelGateway& gateway);

// Deterministic check over (input, visible text) returning [0,1].
struct Verifier {
  std::string name;
  std::function<double(const std::string& input, const std::string& text)> fn;
};

// Registered names: min_sentences{n}, max_sentences{n}, min_chars{n},
// max_chars{n}, contains{text}, not_contains{text}, regex{pattern},
// all{verifiers} (product of the listed verifiers).
Verifier make_verifier(const std::string& name,
                       const nlohmann::json& params = nlohmann::json::object());
Verifier make_verifier(const nlohmann::json& spec);  // {"name", "params"}
std::vector<std::string> verifier_names();

int count_sentences(const std::string& text);

// Process kind reads the visible steps, outcome kind the final answer.
// Verifier exceptions yield 0 with a logged diagnostic.
double score_programmatic(ScoreKind kind, const SearchState& state,
                          const Verifier& verifier);

enum class EvaluatorKind { kGenerative, kReranker, kProgrammatic };
std::string to_string(EvaluatorKind kind);
EvaluatorKind evaluator_kind_from_string(const std::string& name);

// Scores a batch of states. Implementations never throw for a single
// failed item: it scores 0 and is logged.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::vector<double> score(ScoreKind kind,
                                    const std::vector<SearchState>& states,
                                    std::uint64_t seed) const = 0;
  virtual EvaluatorKind kind() const = 0;
};

std::unique_ptr<Evaluator> make_generative_evaluator(
    const ModelGateway& gateway, Rubric rubric, JudgeOptions options = {});
std::unique_ptr<Evaluator> make_reranker_evaluator(const ModelGateway& gateway,
                                                   std::string criteria_text);
std::unique_ptr<Evaluator> make_programmatic_evaluator(Verifier verifier);

}  // namespace actree
