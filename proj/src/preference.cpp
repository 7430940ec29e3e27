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


#include "actree/preference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "actree/evaluator.hpp"
#include "actree/numeric.hpp"

namespace actree {

using nlohmann::json;

json to_json(const Judgment& j) {
  json out = {{"left_id", j.left_id},
              {"right_id", j.right_id},
              {"winner", j.winner == Winner::kLeft ? "left" : "right"},
              {"judge", j.judge}};
  out["seed"] = j.seed ? json(*j.seed) : json(nullptr);
  return out;
}

Judgment judgment_from_json(const json& doc) {
  try {
    Judgment j;
    j.left_id = doc.at("left_id").get<std::string>();
    j.right_id = doc.at("right_id").get<std::string>();
    const std::string w = doc.at("winner").get<std::string>();
    if (w == "left") {
      j.winner = Winner::kLeft;
    } else if (w == "right") {
      j.winner = Winner::kRight;
    } else {
      throw ParseError("judgment winner must be left or right, got '" + w + "'");
    }
    j.judge = doc.value("judge", "");
    if (doc.contains("seed") && !doc["seed"].is_null()) j.seed = doc["seed"].get<std::int64_t>();
    if (j.left_id == j.right_id) throw ValidationError("judgment compares " + j.left_id + " with itself");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad judgment record: ") + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> sample_pairs(
    const std::vector<std::string>& ids, std::size_t count, std::uint64_t seed) {
  if (ids.size() < 2) throw UsageError("sample_pairs needs at least two ids");
  Rng rng(seed);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(count);
  const std::uint64_t n = ids.size();
  for (std::size_t c = 0; c < count; ++c) {
    // A uniform ordered pair of distinct items is a uniform unordered pair
    // presented in uniform random order.
    std::uint64_t i = uniform_index(rng, n);
    std::uint64_t j = uniform_index(rng, n - 1);
    if (j >= i) ++j;
    out.emplace_back(ids[i], ids[j]);
  }
  return out;
}

JudgePrompt judge_prompt_from_json(const json& doc) {
  JudgePrompt p;
  if (!doc.is_object()) throw ParseError("judge prompt must be an object");
  p.system = doc.value("system", p.system);
  p.task = doc.value("task", p.task);
  p.question = doc.value("question", p.question);
  return p;
}

ChatRequest judge_request(const std::string& left_text, const std::string& right_text,
                          const JudgePrompt& prompt) {
  std::string user;
  if (!prompt.task.empty()) user += "<task>\n" + prompt.task + "\n</task>\n\n";
  user += "<option_a>\n" + left_text + "\n</option_a>\n\n<option_b>\n" + right_text +
          "\n</option_b>\n\n" + prompt.question;
  ChatRequest req;
  req.messages = {{"system", prompt.system}, {"user", user}};
  req.temperature = 0.0;
  req.max_tokens = 512;
  return req;
}

std::optional<Winner> parse_winner(const std::string& reply) {
  std::string bare;
  for (char c : trim(reply)) {
    if (std::string_view("*_`\"'()[].:!").find(c) == std::string_view::npos) bare += c;
  }
  bare = trim(bare);
  if (bare == "A" || bare == "a") return Winner::kLeft;
  if (bare == "B" || bare == "b") return Winner::kRight;

  auto single = [](const std::string& text, const std::regex& re) -> std::optional<Winner> {
    std::set<char> letters;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
         it != std::sregex_iterator(); ++it) {
      letters.insert(static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0]))));
    }
    if (letters.size() != 1) return std::nullopt;
    return *letters.begin() == 'A' ? Winner::kLeft : Winner::kRight;
  };
  static const std::regex labelled(
      R"((?:option|answer|winner|choice|response|prefer)\s*(?:is)?\s*[:\-]?\s*[*_`("\[]*\s*([AB])\b)",
      std::regex::icase);
  if (auto w = single(reply, labelled)) return w;
  static const std::regex standalone(R"(\b([AB])\b)");
  return single(reply, standalone);
}

Judgment judge_pair(const std::string& left_id, const std::string& left_text,
                    const std::string& right_id, const std::string& right_text,
                    const JudgePrompt& prompt, const ModelGateway& gateway,
                    std::optional<std::int64_t> seed) {
  if (left_id == right_id) throw UsageError("judge_pair on identical ids");
  if (left_text.empty() || right_text.empty()) throw UsageError("judge_pair on empty text");
  ChatRequest req = judge_request(left_text, right_text, prompt);
  req.seed = seed;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion reply;
    try {
      reply = gateway.complete(req);
    } catch (const Error& e) {
      throw EvaluationError(std::string("judge call failed: ") + e.what());
    }
    if (auto w = parse_winner(reply.text)) {
      return Judgment{left_id, right_id, *w, gateway.chat_identifier(), seed};
    }
    req.messages.push_back({"assistant", reply.text});
    req.messages.push_back({"user", "Answer with a single letter: A or B."});
  }
  throw EvaluationError("judge reply unparseable for " + left_id + " vs " + right_id);
}

JudgeBatch judge_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                       const std::map<std::string, std::string>& texts,
                       const JudgePrompt& prompt, const ModelGateway& gateway,
                       std::uint64_t seed) {
  for (const auto& [a, b] : pairs) {
    if (!texts.count(a) || !texts.count(b)) {
      throw ValidationError("judge pair references unknown id " + (texts.count(a) ? b : a));
    }
  }
  std::vector<std::optional<Judgment>> results(pairs.size());
  std::vector<std::string> errors(pairs.size());
  gateway.parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& [a, b] = pairs[i];
    std::int64_t s = static_cast<std::int64_t>(mix_seed(seed, i) & 0x7fffffffffffffffULL);
    try {
      results[i] = judge_pair(a, texts.at(a), b, texts.at(b), prompt, gateway, s);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  JudgeBatch out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (results[i]) {
      out.judgments.push_back(std::move(*results[i]));
    } else {
      out.errors.push_back(errors[i]);
    }
  }
  return out;
}

ConsistencyReport judge_consistency(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    const std::map<std::string, std::string>& texts, const JudgePrompt& prompt,
    const ModelGateway& gateway, std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> both;
  for (const auto& [a, b] : pairs) {
    both.emplace_back(a, b);
    both.emplace_back(b, a);
  }
  std::vector<std::optional<std::string>> winners(both.size());
  gateway.parallel_for(both.size(), [&](std::size_t i) {
    const auto& [a, b] = both[i];
    std::int64_t s = static_cast<std::int64_t>(mix_seed(seed, i / 2) & 0x7fffffffffffffffULL);
    try {
      winners[i] = judge_pair(a, texts.at(a), b, texts.at(b), prompt, gateway, s).winner_id();
    } catch (const std::exception& e) {
      log_warning(std::string("consistency judgment skipped: ") + e.what());
    }
  });
  ConsistencyReport r;
  for (std::size_t i = 0; i + 1 < both.size(); i += 2) {
    if (!winners[i] || !winners[i + 1]) continue;
    ++r.pairs;
    if (*winners[i] != *winners[i + 1]) ++r.flips;
  }
  r.flip_rate = r.pairs ? static_cast<double>(r.flips) / static_cast<double>(r.pairs) : 0.0;
  return r;
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// True when every node reaches node 0 and is reached from it.
bool strongly_connected(std::size_t n,
                        const std::vector<std::vector<std::size_t>>& fwd,
                        const std::vector<std::vector<std::size_t>>& rev) {
  auto reach_all = [n](const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return reach_all(fwd) && reach_all(rev);
}

}  // namespace

BTFit fit_bradley_terry(const std::vector<Judgment>& judgments, const BTOptions& options,
                        const std::vector<std::string>& all_ids) {
  using numeric::Vec;
  BTFit fit;
  std::map<std::string, std::size_t> index;
  for (const Judgment& j : judgments) {
    if (j.left_id == j.right_id) throw ValidationError("judgment compares an item with itself");
    index.emplace(j.left_id, 0);
    index.emplace(j.right_id, 0);
  }
  std::vector<std::string> names;
  for (auto& [name, i] : index) {
    i = names.size();
    names.push_back(name);
  }
  for (const std::string& id : all_ids) {
    if (!index.count(id)) fit.excluded.push_back(id);
  }
  std::sort(fit.excluded.begin(), fit.excluded.end());
  fit.excluded.erase(std::unique(fit.excluded.begin(), fit.excluded.end()), fit.excluded.end());
  if (!fit.excluded.empty()) {
    fit.warnings.push_back(std::to_string(fit.excluded.size()) +
                           " item(s) without comparisons excluded");
  }
  if (names.empty()) {
    fit.warnings.push_back("no judgments");
    return fit;
  }

  // Aggregate (low, high) index pairs -> (low wins, high wins).
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> counts;
  DisjointSets sets(names.size());
  for (const Judgment& j : judgments) {
    std::size_t w = index.at(j.winner_id()), l = index.at(j.loser_id());
    auto key = std::minmax(w, l);
    auto& c = counts[{key.first, key.second}];
    (w < l ? c.first : c.second) += 1.0;
    sets.unite(w, l);
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < names.size(); ++i) by_root[sets.find(i)].push_back(i);
  if (by_root.size() > 1) {
    fit.warnings.push_back("comparison graph has " + std::to_string(by_root.size()) +
                           " components; strengths are comparable only within one");
    log_warning(fit.warnings.back());
  }

  std::vector<double> strength(names.size(), 1.0);
  std::size_t largest = 0;
  for (const auto& [root, members] : by_root) {
    std::vector<std::string> comp_names;
    std::map<std::size_t, Eigen::Index> local;
    for (std::size_t m : members) {
      local[m] = static_cast<Eigen::Index>(comp_names.size());
      comp_names.push_back(names[m]);
    }
    fit.components.push_back(comp_names);

    numeric::PairCounts<double> pc;
    pc.items = static_cast<Eigen::Index>(members.size());
    std::vector<std::pair<double, double>> w;
    std::vector<std::vector<std::size_t>> fwd(members.size()), rev(members.size());
    for (const auto& [key, c] : counts) {
      if (sets.find(key.first) != root) continue;
      Eigen::Index a = local.at(key.first), b = local.at(key.second);
      pc.pairs.emplace_back(a, b);
      w.push_back(c);
      auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
      if (c.first > 0) {
        fwd[ua].push_back(ub);
        rev[ub].push_back(ua);
      }
      if (c.second > 0) {
        fwd[ub].push_back(ua);
        rev[ua].push_back(ub);
      }
    }
    const bool pad = !strongly_connected(members.size(), fwd, rev);
    if (pad) {
      fit.pseudo_count_components.push_back(comp_names.front());
      fit.pseudo_count = options.pseudo_count;
    }
    pc.wins.resize(static_cast<Eigen::Index>(w.size()), 2);
    for (std::size_t e = 0; e < w.size(); ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      pc.wins(ei, 0) = w[e].first + (pad ? options.pseudo_count : 0.0);
      pc.wins(ei, 1) = w[e].second + (pad ? options.pseudo_count : 0.0);
    }
    numeric::BTResult<double> r = numeric::bt_mm(pc, options.tolerance, options.max_iterations);
    if (!r.converged) {
      fit.converged = false;
      fit.warnings.push_back("Bradley-Terry fit did not converge for the component of " +
                             comp_names.front());
    }
    fit.iterations = std::max(fit.iterations, r.iterations);
    fit.final_log_likelihood += r.log_likelihood.back();
    if (members.size() > largest) {
      largest = members.size();
      fit.log_likelihood_trace = r.log_likelihood;
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      strength[members[i]] = r.strengths(static_cast<Eigen::Index>(i));
    }
  }
  if (!fit.pseudo_count_components.empty()) {
    fit.warnings.push_back("pseudo-count " + std::to_string(options.pseudo_count) +
                           " added in " + std::to_string(fit.pseudo_count_components.size()) +
                           " component(s) with all-win or all-loss items");
  }

  Vec<double> logs(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    logs(static_cast<Eigen::Index>(i)) = std::log(strength[i]);
  }
  Vec<double> z = numeric::z_scores(numeric::average_ranks(logs, options.rank_tie_tolerance));
  for (std::size_t i = 0; i < names.size(); ++i) {
    fit.strengths[names[i]] = strength[i];
    fit.standardized_ranks[names[i]] = z(static_cast<Eigen::Index>(i));
  }
  return fit;
}

json to_json(const BTFit& fit) {
  json sizes = json::array();
  for (const auto& c : fit.components) sizes.push_back(c.size());
  return {{"strengths", fit.strengths},
          {"standardized_ranks", fit.standardized_ranks},
          {"diagnostics",
           {{"iterations", fit.iterations},
            {"final_log_likelihood", fit.final_log_likelihood},
            {"converged", fit.converged},
            {"component_sizes", sizes},
            {"pseudo_count", fit.pseudo_count},
            {"pseudo_count_components", fit.pseudo_count_components},
            {"excluded", fit.excluded},
            {"warnings", fit.warnings}}}};
}

BTFit bt_fit_from_json(const json& doc) {
  try {
    BTFit fit;
    fit.strengths = doc.at("strengths").get<std::map<std::string, double>>();
    fit.standardized_ranks = doc.at("standardized_ranks").get<std::map<std::string, double>>();
    if (doc.contains("diagnostics")) {
      const json& d = doc["diagnostics"];
      fit.iterations = d.value("iterations", 0);
      fit.final_log_likelihood = d.value("final_log_likelihood", 0.0);
      fit.converged = d.value("converged", true);
      fit.pseudo_count = d.value("pseudo_count", 0.0);
      fit.excluded = d.value("excluded", std::vector<std::string>{});
      fit.warnings = d.value("warnings", std::vector<std::string>{});
    }
    return fit;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad Bradley-Terry document: ") + e.what());
  }
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw UsageError("kendall_tau needs equal sizes >= 2");
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) ++concordant;
      if (s < 0) ++discordant;
    }
  }
  const double pairs = static_cast<double>(a.size() * (a.size() - 1) / 2);
  return static_cast<double>(concordant - discordant) / pairs;
}

EquivalencePartition partition_equivalence(const std::vector<std::string>& ids,
                                           const std::vector<std::string>& texts,
                                           const SimilarityScorer& scorer,
                                           double threshold, std::uint64_t seed) {
  if (ids.size() != texts.size()) throw UsageError("ids and texts differ in length");
  EquivalencePartition p;
  p.threshold = threshold;
  std::vector<std::vector<std::size_t>> members;
  Rng rng(seed);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    int label = -1;
    for (std::size_t c = 0; c < members.size() && label < 0; ++c) {
      std::size_t rep = members[c][uniform_index(rng, members[c].size())];
      if (scorer(texts[i], texts[rep]) > threshold) label = static_cast<int>(c);
    }
    if (label < 0) {
      label = static_cast<int>(members.size());
      members.emplace_back();
    }
    members[static_cast<std::size_t>(label)].push_back(i);
    p.labels.push_back(label);
  }
  for (const auto& m : members) {
    EquivalenceClass cls;
    cls.representative = ids[m.front()];
    for (std::size_t i : m) cls.members.push_back(ids[i]);
    p.classes.push_back(std::move(cls));
  }
  return p;
}

double patience_utility(const std::vector<int>& class_labels,
                        const std::vector<double>& utilities, double p) {
  if (class_labels.empty()) throw UsageError("patience_utility needs k >= 1");
  if (class_labels.size() != utilities.size()) throw UsageError("labels and utilities differ in length");
  if (!(p > 0.0 && p < 1.0)) throw UsageError("patience p must lie in (0, 1)");
  const double k = static_cast<double>(class_labels.size());
  std::set<int> seen;
  double sum = 0.0, weight = 1.0;
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    if (seen.insert(class_labels[i]).second) sum += weight * utilities[i];
    weight *= p;
  }
  return (1.0 - p) / (1.0 - std::pow(p, k)) * sum;
}

namespace {
std::set<std::string> word_set(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}
}  // namespace

double jaccard_similarity(const std::string& a, const std::string& b) {
  std::set<std::string> wa = word_set(a), wb = word_set(b);
  if (wa.empty() && wb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const std::string& w : wa) inter += wb.count(w);
  return static_cast<double>(inter) / static_cast<double>(wa.size() + wb.size() - inter);
}

SimilarityScorer make_rerank_scorer(const ModelGateway& gateway) {
  return [&gateway](const std::string& candidate, const std::string& representative) {
    std::vector<double> s = gateway.rerank(RerankRequest{representative, {candidate}});
    return logistic(s.at(0));
  };
}

}  // namespace actree
