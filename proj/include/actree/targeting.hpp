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
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "actree/attribution.hpp"
#include "actree/beam_search.hpp"
#include "actree/controller.hpp"
#include "actree/preference.hpp"

namespace actree {

// Plans are addressed by a mixed-radix index over per-step flat choice
// indices, step 0 most significant. Index order is the lexicographic order.
std::uint64_t trajectory_count(const ActionSpace& space, int depth);
std::uint64_t plan_index(const ActionSpace& space, const TrajectoryPlan& plan);
TrajectoryPlan plan_at(const ActionSpace& space, int depth, std::uint64_t index);

// Visits every plan as its per-step flat choice indices, in index order,
// without materializing the set. visit returns false to stop early.
void enumerate_trajectories(const ActionSpace& space, int depth,
                            const std::function<bool(const std::vector<std::uint64_t>&)>& visit);

// Precompiled coefficient tables of a sequential fit. Throws FeatureError
// when the fit's features are not exactly the sequential grammar of
// (space, depth); the length feature is rejected because a plan has no text.
class TrajectoryScorer {
 public:
  TrajectoryScorer(const RegressionFit& fit, const ActionSpace& space, int depth);

  double score(const std::vector<std::uint64_t>& step_choices) const;
  double score(const TrajectoryPlan& plan) const;
  int depth() const { return depth_; }

 private:
  const ActionSpace& space_;
  int depth_;
  double intercept_;
  std::vector<std::vector<std::size_t>> digits_;  // per flat choice
  // pos_[k][d][a], step_[k][p][a * |b| + b], trans_[k][d][a * |d| + b]
  std::vector<std::vector<std::vector<double>>> pos_, step_, trans_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

double score_trajectory(const RegressionFit& fit, const ActionSpace& space,
                        const TrajectoryPlan& plan);

struct RankedPlans {
  std::vector<TrajectoryPlan> plans;  // descending score, ties by index
  std::vector<std::uint64_t> indices;
  std::vector<std::string> warnings;
};

// Best k plans outside `observed` (plan indices).
RankedPlans top_unobserved(const RegressionFit& fit, const ActionSpace& space, int depth,
                           const std::set<std::uint64_t>& observed, std::size_t k);

std::set<std::uint64_t> observed_plans(const ActionSpace& space, int depth,
                                       const std::vector<Trace>& traces);

// Uniform sample of distinct unobserved plans.
std::vector<TrajectoryPlan> random_baseline_plans(const ActionSpace& space, int depth,
                                                  const std::set<std::uint64_t>& observed,
                                                  std::size_t count, std::uint64_t seed);

// Uniform sample of distinct unobserved plans whose `dimension` actions all
// lie among the top_n actions by presence coefficient (reference = 0).
std::vector<TrajectoryPlan> topic_presence_plans(const RegressionFit& presence_fit,
                                                 const ActionSpace& space, int depth,
                                                 const std::string& dimension,
                                                 const std::set<std::uint64_t>& observed,
                                                 std::size_t count, std::uint64_t seed,
                                                 std::size_t top_n = 3);

nlohmann::json plan_to_json(const ActionSpace& space, const TrajectoryPlan& plan);
TrajectoryPlan plan_from_json(const nlohmann::json& doc);

struct TargetedRun {
  std::vector<Trace> traces;
  std::vector<std::size_t> plan_of_trace;  // index into the plans argument
  std::vector<std::string> failures;
  std::size_t shortfall = 0;
  std::size_t fidelity_violations = 0;
};

// samples_per_plan forced runs (n = k = 1) per plan with distinct tree seeds
// base_seed + i * samples_per_plan + s. modules.controller is ignored.
TargetedRun generate_targeted(const std::string& input, const std::vector<TrajectoryPlan>& plans,
                              int samples_per_plan, const SearchConfig& base,
                              const SearchModules& modules, std::int64_t base_seed);

struct LengthItem {
  std::string id;
  std::size_t length = 0;
};

struct MatchedDataset {
  std::vector<std::pair<std::string, std::string>> pairs;  // (targeted, baseline)
  std::vector<std::pair<std::size_t, std::size_t>> lengths;
  std::size_t tolerance = 5;
  std::size_t dropped = 0;
};

// Targeted items in ascending length order each take the nearest unused
// baseline within tolerance (ties: shorter baseline, then input order).
MatchedDataset length_match(const std::vector<LengthItem>& targeted,
                            const std::vector<LengthItem>& baseline, std::size_t tolerance);
MatchedDataset length_match(const std::vector<Trace>& targeted,
                            const std::vector<Trace>& baseline, std::size_t tolerance);

struct MatchedEvaluation {
  double targeted_win_rate = 0;
  std::size_t cross_comparisons = 0;
  std::size_t targeted_in_top10 = 0;
  std::size_t targeted_in_top100 = 0;
  std::size_t judge_errors = 0;
  BTFit fit;
  std::vector<Judgment> judgments;
};

MatchedEvaluation evaluate_matched(const MatchedDataset& dataset,
                                   const std::map<std::string, std::string>& texts,
                                   std::size_t comparisons, const JudgePrompt& prompt,
                                   const ModelGateway& gateway, std::uint64_t seed);

nlohmann::json to_json(const MatchedDataset& d);
MatchedDataset matched_dataset_from_json(const nlohmann::json& doc);

}  // namespace actree
