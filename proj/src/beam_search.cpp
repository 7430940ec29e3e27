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


#include "actree/beam_search.hpp"

#include <algorithm>
#include <set>

namespace actree {

using nlohmann::json;

void validate(const SearchConfig& c) {
  if (c.branching < 1) throw ValidationError("branching n must be >= 1");
  if (c.beam_width < 1) throw ValidationError("beam width k must be >= 1");
  if (c.max_depth < 1) throw ValidationError("max depth d must be >= 1");
  if (!(c.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
}

json to_json(const SearchConfig& c) {
  return {{"branching", c.branching},
          {"beam_width", c.beam_width},
          {"max_depth", c.max_depth},
          {"temperature", c.temperature},
          {"synthesis_mode", to_string(c.synthesis_mode)},
          {"controller", to_string(c.controller)},
          {"prm", to_string(c.prm)},
          {"orm", to_string(c.orm)},
          {"tree_seed", c.tree_seed},
          {"return_all_finals", c.return_all_finals}};
}

SearchConfig search_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("search config must be an object");
  SearchConfig c;
  try {
    c.branching = doc.value("branching", c.branching);
    c.beam_width = doc.value("beam_width", c.beam_width);
    c.max_depth = doc.value("max_depth", c.max_depth);
    c.temperature = doc.value("temperature", c.temperature);
    if (doc.contains("synthesis_mode")) {
      c.synthesis_mode = synthesis_mode_from_string(doc["synthesis_mode"].get<std::string>());
    }
    if (doc.contains("controller")) {
      c.controller = controller_kind_from_string(doc["controller"].get<std::string>());
    }
    if (doc.contains("prm")) c.prm = evaluator_kind_from_string(doc["prm"].get<std::string>());
    if (doc.contains("orm")) c.orm = evaluator_kind_from_string(doc["orm"].get<std::string>());
    c.tree_seed = doc.value("tree_seed", c.tree_seed);
    c.return_all_finals = doc.value("return_all_finals", c.return_all_finals);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad search config: ") + e.what());
  }
  validate(c);
  return c;
}

std::vector<Trace> TreeResult::selected(const SearchConfig& config) const {
  if (traces.empty()) return {};
  if (config.return_all_finals) return traces;
  return {traces.front()};
}

Trace partial_trace_of(const SearchState& state) {
  SearchState copy = state;
  if (!copy.finalized()) copy.final_answer = std::string();
  return trace_of(copy);
}

namespace {

bool score_then_id(const SearchState& a, const SearchState& b, bool prm) {
  double sa = prm ? a.prm_score().value_or(0.0) : a.orm_score.value_or(0.0);
  double sb = prm ? b.prm_score().value_or(0.0) : b.orm_score.value_or(0.0);
  if (sa != sb) return sa > sb;
  return a.node_id < b.node_id;
}

std::int64_t request_seed(std::uint64_t s) {
  return static_cast<std::int64_t>(s & 0x7fffffffffffffffULL);
}

}  // namespace

std::vector<SearchState> prune_layer(std::vector<SearchState> candidates, int k) {
  if (k < 1) throw UsageError("beam width must be >= 1");
  for (const SearchState& s : candidates) {
    if (!s.prm_score()) {
      throw UsageError("prune_layer: candidate " + s.node_id.str() + " has no PRM score");
    }
  }
  const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(k));
  std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                    [](const SearchState& a, const SearchState& b) {
                      return score_then_id(a, b, true);
                    });
  candidates.resize(keep);
  return candidates;
}

TreeResult run_tree(const std::string& input, const SearchConfig& config,
                    const SearchModules& m) {
  validate(config);
  if (!m.gateway || !m.controller || !m.generator || !m.prm || !m.orm) {
    throw UsageError("run_tree: search modules are not fully wired");
  }
  const std::uint64_t tree_seed = static_cast<std::uint64_t>(config.tree_seed);
  NodeIdAllocator ids(config.tree_seed);
  TreeResult result;
  result.tree_seed = config.tree_seed;

  std::vector<SearchState> frontier{make_root(input, ids)};
  std::vector<SearchState> finals;
  std::vector<SearchState> deepest = frontier;

  for (int layer = 1; layer <= config.max_depth + 1; ++layer) {
    const bool forced_finish = layer == config.max_depth + 1;

    // Controller decisions, one per frontier state.
    std::vector<ControllerDecision> decisions(frontier.size());
    std::vector<std::string> decision_errors(frontier.size());
    m.gateway->parallel_for(frontier.size(), [&](std::size_t i) {
      if (forced_finish) {
        decisions[i].choices = {ActionChoice::finish()};
        return;
      }
      try {
        decisions[i] = m.controller->select(
            frontier[i], config.branching, mix_seed(tree_seed, frontier[i].node_id.counter));
      } catch (const std::exception& e) {
        decision_errors[i] = e.what();
      }
    });

    struct Expansion {
      std::size_t parent;
      ActionChoice choice;
      std::int64_t seed;
      std::optional<StepRecord> step;
      std::optional<std::string> answer;
      std::string error;
    };
    std::vector<Expansion> work;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (!decision_errors[i].empty()) {
        result.failures.push_back("controller at " + frontier[i].node_id.str() + ": " +
                                  decision_errors[i]);
        continue;
      }
      if (decisions[i].fallback) ++result.random_fallbacks;
      std::set<ActionChoice> seen;
      const std::size_t cap = forced_finish ? 1 : static_cast<std::size_t>(config.branching);
      for (const ActionChoice& c : decisions[i].choices) {
        if (seen.size() >= cap || !seen.insert(c).second) continue;
        std::uint64_t s = mix_seed(mix_seed(tree_seed, frontier[i].node_id.counter),
                                   seen.size());
        work.push_back({i, c, request_seed(s), {}, {}, {}});
      }
    }

    // Generation: steps for regular choices, answers for FINISH.
    m.gateway->parallel_for(work.size(), [&](std::size_t w) {
      Expansion& e = work[w];
      const SearchState& parent = frontier[e.parent];
      try {
        if (e.choice.is_finish) {
          e.answer = m.generator->generate_answer(parent, e.seed);
        } else {
          e.step = m.generator->generate_step(parent, e.choice, e.seed);
        }
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
    });

    // Node ids are assigned sequentially in (parent, decision) order so the
    // tree is reproducible regardless of completion order.
    std::vector<SearchState> candidates;
    for (Expansion& e : work) {
      const SearchState& parent = frontier[e.parent];
      if (!e.error.empty()) {
        result.failures.push_back("layer " + std::to_string(layer) + " " +
                                  parent.node_id.str() + " [" + describe(e.choice) +
                                  "]: " + e.error);
        log_warning("branch failed: " + result.failures.back());
        continue;
      }
      if (e.answer) {
        finals.push_back(finalize(parent, std::move(*e.answer), config.synthesis_mode, ids));
      } else {
        candidates.push_back(append_step(parent, std::move(*e.step), ids));
      }
    }
    if (candidates.empty()) break;
    deepest = candidates;

    std::vector<SearchState> kept;
    if (candidates.size() > static_cast<std::size_t>(config.beam_width)) {
      std::vector<double> scores = m.prm->score(
          ScoreKind::kProcess, candidates, mix_seed(tree_seed, 0x9e3779b9ULL + layer));
      if (scores.size() != candidates.size()) {
        throw EvaluationError("PRM returned a wrong number of scores");
      }
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i] = with_prm_score(candidates[i], std::clamp(scores[i], 0.0, 1.0));
      }
      kept = prune_layer(candidates, config.beam_width);
    } else {
      kept = candidates;
    }
    std::set<NodeId> kept_ids;
    for (const SearchState& s : kept) kept_ids.insert(s.node_id);
    for (SearchState& s : candidates) {
      bool k = kept_ids.count(s.node_id) > 0;
      result.explored.push_back({layer, std::move(s), k});
    }
    std::sort(kept.begin(), kept.end(),
              [](const SearchState& a, const SearchState& b) { return a.node_id < b.node_id; });
    frontier = std::move(kept);
    result.frontier_sizes.push_back(frontier.size());
  }

  if (finals.empty()) {
    std::vector<Trace> partial;
    for (const SearchState& s : deepest) partial.push_back(partial_trace_of(s));
    throw NoSolutionError("tree " + std::to_string(config.tree_seed) +
                              " produced no final state (" +
                              std::to_string(result.failures.size()) + " failures)",
                          std::move(partial));
  }

  std::vector<double> orm = m.orm->score(ScoreKind::kOutcome, finals,
                                         mix_seed(tree_seed, 0x0f1e2d3cULL));
  if (orm.size() != finals.size()) {
    throw EvaluationError("ORM returned a wrong number of scores");
  }
  for (std::size_t i = 0; i < finals.size(); ++i) {
    finals[i] = with_orm_score(finals[i], std::clamp(orm[i], 0.0, 1.0));
  }
  std::sort(finals.begin(), finals.end(), [](const SearchState& a, const SearchState& b) {
    return score_then_id(a, b, false);
  });
  result.finals = std::move(finals);
  for (const SearchState& s : result.finals) result.traces.push_back(trace_of(s));
  return result;
}

ForestResult run_forest(const std::string& input, const SearchConfig& config,
                        const std::vector<std::int64_t>& seeds,
                        const SearchModules& modules) {
  std::set<std::int64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw UsageError("forest seeds must be distinct");
  ForestResult out;
  for (std::int64_t seed : seeds) {
    SearchConfig c = config;
    c.tree_seed = seed;
    try {
      TreeResult tree = run_tree(input, c, modules);
      std::vector<Trace> picked = tree.selected(c);
      out.traces.insert(out.traces.end(), picked.begin(), picked.end());
      out.trees.push_back(std::move(tree));
    } catch (const Error& e) {
      log_error("tree " + std::to_string(seed) + " failed: " + e.what());
      out.failed_trees.emplace_back(seed, e.what());
    }
  }
  return out;
}

}  // namespace actree
