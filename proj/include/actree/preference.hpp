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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "actree/gateway.hpp"
#include "json.hpp"

namespace actree {

enum class Winner { kLeft, kRight };

struct Judgment {
  std::string left_id;
  std::string right_id;
  Winner winner = Winner::kLeft;
  std::string judge;
  std::optional<std::int64_t> seed;

  const std::string& winner_id() const { return winner == Winner::kLeft ? left_id : right_id; }
  const std::string& loser_id() const { return winner == Winner::kLeft ? right_id : left_id; }
  bool operator==(const Judgment&) const = default;
};

// {left_id, right_id, winner: "left"|"right", judge, seed}
nlohmann::json to_json(const Judgment& j);
Judgment judgment_from_json(const nlohmann::json& doc);

// Uniform random unordered pairs of distinct ids, each in random order.
std::vector<std::pair<std::string, std::string>> sample_pairs(
    const std::vector<std::string>& ids, std::size_t count, std::uint64_t seed);

// The user prompt shows the two texts inside <option_a> and <option_b>.
struct JudgePrompt {
  std::string system =
      "You are an expert evaluator. You will see a task and two candidate "
      "responses. Decide which response is more effective. You must choose "
      "one, even when they are very similar.";
  std::string task;  // optional context shown before the options
  std::string question = "Which option is more effective? Answer with a single letter: A or B.";
};

JudgePrompt judge_prompt_from_json(const nlohmann::json& doc);
ChatRequest judge_request(const std::string& left_text, const std::string& right_text,
                          const JudgePrompt& prompt);

// "A"/"B" (also "Option A", "**B**", "Answer: A"). nullopt when absent or
// when both letters are offered as the answer.
std::optional<Winner> parse_winner(const std::string& reply);

// Re-asks once on an unparseable reply, then throws EvaluationError.
Judgment judge_pair(const std::string& left_id, const std::string& left_text,
                    const std::string& right_id, const std::string& right_text,
                    const JudgePrompt& prompt, const ModelGateway& gateway,
                    std::optional<std::int64_t> seed = {});

struct JudgeBatch {
  std::vector<Judgment> judgments;  // successful, in pair order
  std::vector<std::string> errors;  // one per excluded comparison
};

// Concurrent through the gateway; request i uses seed mix_seed(seed, i).
JudgeBatch judge_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                       const std::map<std::string, std::string>& texts,
                       const JudgePrompt& prompt, const ModelGateway& gateway,
                       std::uint64_t seed);

struct ConsistencyReport {
  std::size_t pairs = 0;  // pairs judged in both orders
  std::size_t flips = 0;  // winner changed with the order
  double flip_rate = 0;
};

// Judges each pair as (a, b) and (b, a) and counts disagreements.
ConsistencyReport judge_consistency(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    const std::map<std::string, std::string>& texts, const JudgePrompt& prompt,
    const ModelGateway& gateway, std::uint64_t seed);

struct BTOptions {
  double tolerance = 1e-8;
  int max_iterations = 10000;
  double pseudo_count = 0.01;
  double rank_tie_tolerance = 1e-9;  // relative, on strengths
};

struct BTFit {
  std::map<std::string, double> strengths;           // geometric mean 1 per component
  std::map<std::string, double> standardized_ranks;  // z-scored average ranks
  int iterations = 0;                                // max over components
  double final_log_likelihood = 0;                   // sum over components
  bool converged = true;
  std::vector<std::vector<std::string>> components;
  std::vector<std::string> pseudo_count_components;  // ids seeding each padded component
  double pseudo_count = 0;
  std::vector<std::string> excluded;  // ids with zero comparisons
  std::vector<double> log_likelihood_trace;  // largest component, per iteration
  std::vector<std::string> warnings;
};

// Fits each connected component of the comparison graph separately. A
// component whose win graph is not strongly connected (some item never wins
// or never loses within it) gets options.pseudo_count added to both
// directions of every observed pair. `all_ids` only serves to report items
// without comparisons.
BTFit fit_bradley_terry(const std::vector<Judgment>& judgments,
                        const BTOptions& options = {},
                        const std::vector<std::string>& all_ids = {});

nlohmann::json to_json(const BTFit& fit);
BTFit bt_fit_from_json(const nlohmann::json& doc);

// Kendall tau-a between two equally long score vectors.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Diversity

// similarity(candidate, representative); larger = more alike.
using SimilarityScorer =
    std::function<double(const std::string& candidate, const std::string& representative)>;

inline constexpr double kDefaultEquivalenceThreshold = 0.102;

struct EquivalenceClass {
  std::string representative;  // first member
  std::vector<std::string> members;
};

struct EquivalencePartition {
  std::vector<EquivalenceClass> classes;
  double threshold = kDefaultEquivalenceThreshold;
  std::vector<int> labels;  // class index per input, input order
};

// Scans texts in order. Each text is compared with one randomly drawn member
// of every existing class in creation order and joins the first whose score
// exceeds the threshold; otherwise it opens a new class.
EquivalencePartition partition_equivalence(const std::vector<std::string>& ids,
                                           const std::vector<std::string>& texts,
                                           const SimilarityScorer& scorer,
                                           double threshold = kDefaultEquivalenceThreshold,
                                           std::uint64_t seed = 0);

inline std::size_t mean_distinct(const EquivalencePartition& p) { return p.classes.size(); }

// (1-p)/(1-p^k) sum_i p^(i-1) [c_i novel] u_i
double patience_utility(const std::vector<int>& class_labels,
                        const std::vector<double>& utilities, double p = 0.8);

// Word-set Jaccard similarity (lowercased alphanumeric tokens).
double jaccard_similarity(const std::string& a, const std::string& b);

// Logistic of the reranker score of the candidate against the
// representative used as the query.
SimilarityScorer make_rerank_scorer(const ModelGateway& gateway);

}  // namespace actree
