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


#include "actree/targeting.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <unordered_map>

namespace actree {

using nlohmann::json;

std::uint64_t trajectory_count(const ActionSpace& space, int depth) {
  if (depth < 1) throw UsageError("trajectory depth must be >= 1");
  std::uint64_t total = 1;
  const std::uint64_t c = space.choice_count();
  for (int k = 0; k < depth; ++k) {
    if (total > std::numeric_limits<std::uint64_t>::max() / c) {
      throw UsageError("trajectory space too large to index");
    }
    total *= c;
  }
  return total;
}

std::uint64_t plan_index(const ActionSpace& space, const TrajectoryPlan& plan) {
  std::uint64_t idx = 0;
  for (const ActionChoice& c : plan.steps) idx = idx * space.choice_count() + space.index_of(c);
  return idx;
}

TrajectoryPlan plan_at(const ActionSpace& space, int depth, std::uint64_t index) {
  if (index >= trajectory_count(space, depth)) throw UsageError("plan index out of range");
  TrajectoryPlan p;
  p.steps.resize(static_cast<std::size_t>(depth));
  for (int k = depth - 1; k >= 0; --k) {
    p.steps[static_cast<std::size_t>(k)] = space.choice_at(index % space.choice_count());
    index /= space.choice_count();
  }
  return p;
}

void enumerate_trajectories(const ActionSpace& space, int depth,
                            const std::function<bool(const std::vector<std::uint64_t>&)>& visit) {
  trajectory_count(space, depth);  // validates depth and size
  const std::uint64_t c = space.choice_count();
  std::vector<std::uint64_t> digits(static_cast<std::size_t>(depth), 0);
  while (true) {
    if (!visit(digits)) return;
    int k = depth - 1;
    while (k >= 0 && ++digits[static_cast<std::size_t>(k)] == c) {
      digits[static_cast<std::size_t>(k)] = 0;
      --k;
    }
    if (k < 0) return;
  }
}

TrajectoryScorer::TrajectoryScorer(const RegressionFit& fit, const ActionSpace& space, int depth)
    : space_(space), depth_(depth), intercept_(fit.intercept) {
  const std::vector<std::string> grammar = sequential_feature_names(space, depth);
  std::unordered_map<std::string, double> coef;
  for (std::size_t i = 0; i < fit.feature_names.size(); ++i) {
    if (fit.feature_names[i] == kLengthFeature) {
      throw FeatureError("fit uses len.chars, which a plan without text cannot supply");
    }
    coef.emplace(fit.feature_names[i], fit.coefficients(static_cast<Eigen::Index>(i)));
  }
  std::set<std::string> known(grammar.begin(), grammar.end());
  for (const auto& [name, v] : coef) {
    if (!known.count(name)) throw FeatureError("fit feature " + name + " is not a sequential feature of this space");
  }
  for (const std::string& name : grammar) {
    if (!coef.count(name)) throw FeatureError("fit lacks sequential feature " + name);
  }

  const auto& dims = space.dimensions();
  for (std::uint64_t i = 0; i < space.choice_count(); ++i) digits_.push_back(space.digits_of(i));
  for (std::size_t a = 0; a < dims.size(); ++a) {
    for (std::size_t b = a + 1; b < dims.size(); ++b) pairs_.emplace_back(a, b);
  }
  const auto d = static_cast<std::size_t>(depth);
  pos_.assign(d, {});
  step_.assign(d, {});
  trans_.assign(d > 0 ? d - 1 : 0, {});
  for (std::size_t k = 0; k < d; ++k) {
    const std::string ks = std::to_string(k + 1);
    for (const Dimension& dim : dims) {
      std::vector<double> v;
      for (const ActionTemplate& t : dim.templates) {
        v.push_back(coef.at("pos[" + ks + "]." + dim.name + "." + t.name));
      }
      pos_[k].push_back(std::move(v));
    }
    for (const auto& [da, db] : pairs_) {
      std::vector<double> v;
      for (const ActionTemplate& ta : dims[da].templates) {
        for (const ActionTemplate& tb : dims[db].templates) {
          v.push_back(coef.at("step[" + ks + "]." + ta.name + "x" + tb.name));
        }
      }
      step_[k].push_back(std::move(v));
    }
    if (k + 1 < d) {
      const std::string span = "[" + ks + "->" + std::to_string(k + 2) + "]";
      for (const Dimension& dim : dims) {
        std::vector<double> v;
        for (const ActionTemplate& ta : dim.templates) {
          for (const ActionTemplate& tb : dim.templates) {
            v.push_back(coef.at("trans." + dim.name + "." + ta.name + "->" + tb.name + span));
          }
        }
        trans_[k].push_back(std::move(v));
      }
    }
  }
}

double TrajectoryScorer::score(const std::vector<std::uint64_t>& steps) const {
  if (steps.size() != static_cast<std::size_t>(depth_)) throw UsageError("plan length differs from scorer depth");
  const auto& dims = space_.dimensions();
  double s = intercept_;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const std::vector<std::size_t>& dg = digits_[steps[k]];
    for (std::size_t d = 0; d < dg.size(); ++d) s += pos_[k][d][dg[d]];
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      const auto [da, db] = pairs_[p];
      s += step_[k][p][dg[da] * dims[db].templates.size() + dg[db]];
    }
    if (k > 0) {
      const std::vector<std::size_t>& pg = digits_[steps[k - 1]];
      for (std::size_t d = 0; d < dg.size(); ++d) {
        s += trans_[k - 1][d][pg[d] * dims[d].templates.size() + dg[d]];
      }
    }
  }
  return s;
}

double TrajectoryScorer::score(const TrajectoryPlan& plan) const {
  std::vector<std::uint64_t> steps;
  for (const ActionChoice& c : plan.steps) steps.push_back(space_.index_of(c));
  return score(steps);
}

double score_trajectory(const RegressionFit& fit, const ActionSpace& space,
                        const TrajectoryPlan& plan) {
  return TrajectoryScorer(fit, space, static_cast<int>(plan.steps.size())).score(plan);
}

RankedPlans top_unobserved(const RegressionFit& fit, const ActionSpace& space, int depth,
                           const std::set<std::uint64_t>& observed, std::size_t k) {
  if (k < 1) throw UsageError("top_unobserved needs k >= 1");
  TrajectoryScorer scorer(fit, space, depth);
  using Entry = std::pair<double, std::uint64_t>;
  // "Better" = higher score, then lower index; the heap top is the worst kept.
  auto better = [](const Entry& a, const Entry& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
  std::uint64_t index = 0;
  enumerate_trajectories(space, depth, [&](const std::vector<std::uint64_t>& steps) {
    std::uint64_t idx = index++;
    if (observed.count(idx)) return true;
    Entry e{scorer.score(steps), idx};
    if (heap.size() < k) {
      heap.push(e);
    } else if (better(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
    return true;
  });
  std::vector<Entry> kept;
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::sort(kept.begin(), kept.end(), better);
  RankedPlans out;
  for (const auto& [score, idx] : kept) {
    TrajectoryPlan p = plan_at(space, depth, idx);
    p.predicted_score = score;
    out.plans.push_back(std::move(p));
    out.indices.push_back(idx);
  }
  if (out.plans.size() < k) {
    out.warnings.push_back("only " + std::to_string(out.plans.size()) + " unobserved plans (asked for " +
                           std::to_string(k) + ")");
    log_warning(out.warnings.back());
  }
  return out;
}

std::set<std::uint64_t> observed_plans(const ActionSpace& space, int depth,
                                       const std::vector<Trace>& traces) {
  std::set<std::uint64_t> out;
  for (const Trace& t : traces) {
    if (t.trajectory.size() != static_cast<std::size_t>(depth)) continue;
    out.insert(plan_index(space, TrajectoryPlan{t.trajectory, {}}));
  }
  return out;
}

namespace {

// Distinct uniform draws from [0, universe) outside `excluded`, mapped
// through `to_plan`. Falls back to exhaustive listing when the admissible
// set is not much larger than the request.
std::vector<TrajectoryPlan> sample_plans(
    std::uint64_t universe, std::size_t count, std::uint64_t seed,
    const std::function<bool(std::uint64_t)>& excluded,
    const std::function<TrajectoryPlan(std::uint64_t)>& to_plan) {
  std::vector<TrajectoryPlan> out;
  Rng rng(seed);
  if (universe <= 4 * static_cast<std::uint64_t>(count) + 1024) {
    std::vector<std::uint64_t> pool;
    for (std::uint64_t i = 0; i < universe; ++i) {
      if (!excluded(i)) pool.push_back(i);
    }
    shuffle_in_place(pool, rng);
    if (pool.size() < count) {
      log_warning("only " + std::to_string(pool.size()) + " admissible baseline plans");
    }
    pool.resize(std::min(pool.size(), count));
    for (std::uint64_t i : pool) out.push_back(to_plan(i));
    return out;
  }
  std::set<std::uint64_t> taken;
  std::size_t attempts = 0;
  while (out.size() < count && attempts < 1000 * count + 100000) {
    ++attempts;
    std::uint64_t i = uniform_index(rng, universe);
    if (excluded(i) || !taken.insert(i).second) continue;
    out.push_back(to_plan(i));
  }
  if (out.size() < count) log_warning("baseline sampler gave up after many rejections");
  return out;
}

}  // namespace

std::vector<TrajectoryPlan> random_baseline_plans(const ActionSpace& space, int depth,
                                                  const std::set<std::uint64_t>& observed,
                                                  std::size_t count, std::uint64_t seed) {
  return sample_plans(
      trajectory_count(space, depth), count, seed,
      [&](std::uint64_t i) { return observed.count(i) > 0; },
      [&](std::uint64_t i) { return plan_at(space, depth, i); });
}

std::vector<TrajectoryPlan> topic_presence_plans(const RegressionFit& presence_fit,
                                                 const ActionSpace& space, int depth,
                                                 const std::string& dimension,
                                                 const std::set<std::uint64_t>& observed,
                                                 std::size_t count, std::uint64_t seed,
                                                 std::size_t top_n) {
  const std::size_t di = space.dimension_index(dimension);
  const Dimension& dim = space.dimensions()[di];
  const std::map<std::string, double> coef = presence_fit.coefficient_map();
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t a = 0; a < dim.templates.size(); ++a) {
    double v = 0.0;  // reference action
    if (a > 0) {
      auto it = coef.find("presence." + dim.name + "." + dim.templates[a].name);
      if (it == coef.end()) {
        throw FeatureError("presence fit lacks presence." + dim.name + "." + dim.templates[a].name);
      }
      v = it->second;
    }
    ranked.emplace_back(v, a);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  std::set<std::size_t> top;
  for (std::size_t i = 0; i < std::min(top_n, ranked.size()); ++i) top.insert(ranked[i].second);

  if (top.empty()) throw UsageError("topic presence baseline needs top_n >= 1");
  std::vector<std::uint64_t> allowed;  // flat choice indices
  for (std::uint64_t i = 0; i < space.choice_count(); ++i) {
    if (top.count(space.digits_of(i)[di])) allowed.push_back(i);
  }
  std::uint64_t universe = 1;
  for (int k = 0; k < depth; ++k) universe *= allowed.size();
  auto to_full = [&](std::uint64_t i) {
    std::uint64_t full = 0, scale = 1;
    std::vector<std::uint64_t> steps(static_cast<std::size_t>(depth));
    for (int k = depth - 1; k >= 0; --k) {
      steps[static_cast<std::size_t>(k)] = allowed[i % allowed.size()];
      i /= allowed.size();
    }
    for (int k = depth - 1; k >= 0; --k) {
      full += steps[static_cast<std::size_t>(k)] * scale;
      scale *= space.choice_count();
    }
    return full;
  };
  return sample_plans(
      universe, count, seed, [&](std::uint64_t i) { return observed.count(to_full(i)) > 0; },
      [&](std::uint64_t i) { return plan_at(space, depth, to_full(i)); });
}

json plan_to_json(const ActionSpace& space, const TrajectoryPlan& plan) {
  json steps = json::array();
  for (const ActionChoice& c : plan.steps) steps.push_back(choice_to_json(c));
  json out = {{"plan_index", plan_index(space, plan)}, {"steps", steps}};
  out["predicted_score"] = plan.predicted_score ? json(*plan.predicted_score) : json(nullptr);
  return out;
}

TrajectoryPlan plan_from_json(const json& doc) {
  try {
    TrajectoryPlan p;
    for (const json& s : doc.at("steps")) {
      ActionChoice c = choice_from_json(s);
      if (c.is_finish) throw ParseError("plans cannot contain FINISH");
      p.steps.push_back(std::move(c));
    }
    if (doc.contains("predicted_score") && doc["predicted_score"].is_number()) {
      p.predicted_score = doc["predicted_score"].get<double>();
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad plan record: ") + e.what());
  }
}

TargetedRun generate_targeted(const std::string& input, const std::vector<TrajectoryPlan>& plans,
                              int samples_per_plan, const SearchConfig& base,
                              const SearchModules& modules, std::int64_t base_seed) {
  if (samples_per_plan < 1) throw UsageError("samples per plan must be >= 1");
  TargetedRun out;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].steps.empty()) throw UsageError("empty trajectory plan");
    auto controller = make_forced_controller(plans[i]);
    SearchModules m = modules;
    m.controller = controller.get();
    SearchConfig cfg = base;
    cfg.branching = 1;
    cfg.beam_width = 1;
    cfg.max_depth = static_cast<int>(plans[i].steps.size());
    cfg.controller = ControllerKind::kForced;
    cfg.return_all_finals = false;
    for (int s = 0; s < samples_per_plan; ++s) {
      cfg.tree_seed = base_seed + static_cast<std::int64_t>(i) * samples_per_plan + s;
      try {
        TreeResult r = run_tree(input, cfg, m);
        for (Trace& t : r.traces) {
          if (t.trajectory != plans[i].steps) ++out.fidelity_violations;
          out.traces.push_back(std::move(t));
          out.plan_of_trace.push_back(i);
        }
      } catch (const Error& e) {
        ++out.shortfall;
        out.failures.push_back("plan " + std::to_string(i) + " seed " + std::to_string(cfg.tree_seed) +
                               ": " + e.what());
        log_warning(out.failures.back());
      }
    }
  }
  return out;
}

MatchedDataset length_match(const std::vector<LengthItem>& targeted,
                            const std::vector<LengthItem>& baseline, std::size_t tolerance) {
  MatchedDataset d;
  d.tolerance = tolerance;
  std::vector<std::size_t> order(targeted.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return targeted[a].length < targeted[b].length;
  });
  std::vector<char> used(baseline.size(), 0);
  for (std::size_t ti : order) {
    const std::size_t lt = targeted[ti].length;
    std::optional<std::size_t> best;
    std::size_t best_gap = 0;
    for (std::size_t b = 0; b < baseline.size(); ++b) {
      if (used[b]) continue;
      const std::size_t lb = baseline[b].length;
      const std::size_t gap = lb > lt ? lb - lt : lt - lb;
      if (gap > tolerance) continue;
      if (!best || gap < best_gap ||
          (gap == best_gap && lb < baseline[*best].length)) {
        best = b;
        best_gap = gap;
      }
    }
    if (!best) {
      ++d.dropped;
      continue;
    }
    used[*best] = 1;
    d.pairs.emplace_back(targeted[ti].id, baseline[*best].id);
    d.lengths.emplace_back(lt, baseline[*best].length);
  }
  return d;
}

MatchedDataset length_match(const std::vector<Trace>& targeted,
                            const std::vector<Trace>& baseline, std::size_t tolerance) {
  auto items = [](const std::vector<Trace>& ts) {
    std::vector<LengthItem> v;
    for (const Trace& t : ts) v.push_back({t.id(), char_count(t.final_answer)});
    return v;
  };
  return length_match(items(targeted), items(baseline), tolerance);
}

MatchedEvaluation evaluate_matched(const MatchedDataset& dataset,
                                   const std::map<std::string, std::string>& texts,
                                   std::size_t comparisons, const JudgePrompt& prompt,
                                   const ModelGateway& gateway, std::uint64_t seed) {
  if (dataset.pairs.empty()) throw UsageError("matched dataset is empty");
  std::set<std::string> targeted;
  std::vector<std::string> pool;
  for (const auto& [t, b] : dataset.pairs) {
    targeted.insert(t);
    pool.push_back(t);
  }
  for (const auto& [t, b] : dataset.pairs) pool.push_back(b);

  MatchedEvaluation ev;
  JudgeBatch batch = judge_pairs(sample_pairs(pool, comparisons, seed), texts, prompt, gateway,
                                 mix_seed(seed, 0x6a756467ULL));
  ev.judge_errors = batch.errors.size();
  std::size_t wins = 0;
  for (const Judgment& j : batch.judgments) {
    const bool lt = targeted.count(j.left_id) > 0, rt = targeted.count(j.right_id) > 0;
    if (lt == rt) continue;
    ++ev.cross_comparisons;
    if (targeted.count(j.winner_id())) ++wins;
  }
  ev.targeted_win_rate =
      ev.cross_comparisons ? static_cast<double>(wins) / static_cast<double>(ev.cross_comparisons) : 0.0;
  ev.fit = fit_bradley_terry(batch.judgments, {}, pool);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [id, s] : ev.fit.strengths) ranked.emplace_back(s, id);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < ranked.size() && i < 100; ++i) {
    if (!targeted.count(ranked[i].second)) continue;
    if (i < 10) ++ev.targeted_in_top10;
    ++ev.targeted_in_top100;
  }
  ev.judgments = std::move(batch.judgments);
  return ev;
}

json to_json(const MatchedDataset& d) {
  json pairs = json::array();
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    pairs.push_back({{"targeted", d.pairs[i].first},
                     {"baseline", d.pairs[i].second},
                     {"targeted_length", d.lengths[i].first},
                     {"baseline_length", d.lengths[i].second}});
  }
  return {{"tolerance", d.tolerance}, {"dropped", d.dropped}, {"pairs", pairs}};
}

MatchedDataset matched_dataset_from_json(const json& doc) {
  try {
    MatchedDataset d;
    d.tolerance = doc.at("tolerance").get<std::size_t>();
    d.dropped = doc.value("dropped", std::size_t{0});
    for (const json& p : doc.at("pairs")) {
      d.pairs.emplace_back(p.at("targeted").get<std::string>(), p.at("baseline").get<std::string>());
      d.lengths.emplace_back(p.value("targeted_length", std::size_t{0}),
                             p.value("baseline_length", std::size_t{0}));
    }
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad matched dataset: ") + e.what());
  }
}

}  // namespace actree
