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


#include <fstream>
#include <set>
#include <sstream>

#include "actree/backends.hpp"
#include "actree/beam_search.hpp"
#include "actree/controller.hpp"
#include "actree/evaluator.hpp"
#include "actree/generator.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace actree;
using namespace actree::testing;
using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

StepRecord record_for(const ActionSpace& space, const ActionChoice& c, const std::string& text) {
  Intervention iv = render_intervention(c, space);
  return StepRecord{c, iv.internal_reasoning_text, iv.prefix_text, text, "stop_sequence_hit"};
}

ActionChoice arg_choice(const std::string& structure, const std::string& subtopic) {
  return ActionChoice{{{"structure", structure}, {"subtopic", subtopic}}};
}

std::shared_ptr<FunctionChatBackend> constant_chat(std::string reply) {
  return std::make_shared<FunctionChatBackend>(
      [reply](const ChatRequest&) { return Completion{reply, StopReason::kStopSequence}; });
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("step prefills follow the grammar") {
    const ActionSpace& s = argument_space();
    NodeIdAllocator ids(0);
    SearchState root = make_root("x", ids);
    ActionChoice first = arg_choice("conditional", "risk_and_unintended_consequences");
    CHECK(build_step_prefill(root, render_intervention(first, s)) ==
          read_file(golden_dir() / "prefill_first.txt"));
    SearchState one = append_step(
        root,
        record_for(s, first,
                   "If current levels of plastic waste continue, they will cause permanent harm to marine ecosystems."),
        ids);
    ActionChoice second = arg_choice("exemplification", "precedent_and_long_term_effects");
    std::string p = build_step_prefill(one, render_intervention(second, s));
    CHECK(p == read_file(golden_dir() / "prefill_intermediate.txt"));
    CHECK(std::count(p.begin(), p.end(), '<') == 4);  // <thinking>, <step>, </step>, <step>
  }

  TEST_CASE("empty prefix leaves the claim header open") {
    NodeIdAllocator ids(0);
    std::string p = build_step_prefill(make_root("x", ids), Intervention{"", ""});
    CHECK(ends_with(p, "## claim\n"));
    CHECK(p.find("internal_reasoning") == std::string::npos);
  }

  TEST_CASE("finalized states cannot be extended") {
    NodeIdAllocator ids(0);
    SearchState f = finalize(make_root("x", ids), "y", SynthesisMode::kStrict, ids);
    CHECK_THROWS_AS(build_step_prefill(f, Intervention{"If", ""}), UsageError);
  }

  TEST_CASE("system prompts carry the mode blocks") {
    TaskSignature t;
    std::string strict = render_system_prompt(SynthesisMode::kStrict, t, true);
    CHECK(strict.find("Do NOT rewrite, paraphrase, summarize, or restructure.") != std::string::npos);
    CHECK(render_system_prompt(SynthesisMode::kFaithful, t, true).find("meaning must remain unchanged") !=
          std::string::npos);
    CHECK(strict == render_system_prompt(SynthesisMode::kStrict, t, true));
    CHECK(strict.find('{') == std::string::npos);
    CHECK(render_system_prompt(SynthesisMode::kConclusion, t, false).find("## internal_reasoning") ==
          std::string::npos);
  }

  TEST_CASE("render_template rejects unbound placeholders") {
    CHECK(render_template("a {x} b", {{"x", "1"}}) == "a 1 b");
    CHECK_THROWS_AS(render_template("a {y}", {{"x", "1"}}), TemplateError);
  }

  TEST_CASE("generate_step joins prefix and continuation") {
    const ActionSpace& s = argument_space();
    ModelGateway gw(constant_chat(" current levels of plastic waste continue\n"), nullptr, fast_options(1));
    Generator g(gw, s, {}, SynthesisMode::kStrict);
    NodeIdAllocator ids(0);
    StepRecord r = g.generate_step(make_root("x", ids), arg_choice("conditional", "ethical_principles"), 1);
    CHECK(r.step_text == "If current levels of plastic waste continue");
    CHECK(r.stop_reason == "stop_sequence_hit");
  }

  TEST_CASE("length-limited continuations are kept and flagged") {
    auto chat = std::make_shared<FunctionChatBackend>(
        [](const ChatRequest&) { return Completion{" and then", StopReason::kLength}; });
    ModelGateway gw(chat, nullptr, fast_options(1));
    Generator g(gw, argument_space(), {}, SynthesisMode::kStrict);
    NodeIdAllocator ids(0);
    StepRecord r = g.generate_step(make_root("x", ids), arg_choice("conditional", "ethical_principles"));
    CHECK(r.stop_reason == "length");
  }

  TEST_CASE("empty continuation fails the branch") {
    ModelGateway gw(constant_chat(" "), nullptr, fast_options(1));
    Generator g(gw, argument_space(), {}, SynthesisMode::kStrict);
    NodeIdAllocator ids(0);
    CHECK_THROWS_AS(g.generate_step(make_root("x", ids), arg_choice("conditional", "ethical_principles")),
                    GenerationFailure);
  }

  TEST_CASE("strict mock answers echo the claims in order") {
    auto gw = mock_gateway();
    const ActionSpace& s = demo_space();
    Generator g(*gw, s, {}, SynthesisMode::kStrict);
    NodeIdAllocator ids(0);
    SearchState st = make_root("x", ids);
    st = append_step(st, record_for(s, s.choice_at(0), "If one."), ids);
    st = append_step(st, record_for(s, s.choice_at(3), "For example two."), ids);
    CHECK(g.generate_answer(st, 1) == "If one. For example two.");
    ChatRequest r = g.answer_request(st);
    CHECK(r.stop_sequences == std::vector<std::string>{"</answer>"});
    CHECK(ends_with(*r.prefill, "</thinking>\n<answer>\n"));
  }

  TEST_CASE("zero-step states still get an answer") {
    ModelGateway gw(constant_chat("A direct answer."), nullptr, fast_options(1));
    Generator g(gw, demo_space(), {}, SynthesisMode::kConclusion);
    NodeIdAllocator ids(0);
    CHECK(g.generate_answer(make_root("x", ids)) == "A direct answer.");
  }
}

TEST_SUITE("controller") {
  TEST_CASE("reranker controller keeps the n best") {
    const ActionSpace& s = argument_space();
    auto rr = std::make_shared<FunctionRerankBackend>([](const RerankRequest& r) {
      std::vector<double> v;
      for (std::size_t i = 0; i < r.documents.size(); ++i) v.push_back(static_cast<double>((i * 37) % 100));
      return v;
    });
    ModelGateway gw(nullptr, rr, fast_options(1));
    NodeIdAllocator ids(0);
    ControllerDecision d = select_reranker(make_root("x", ids), s, 10, gw);
    REQUIRE(d.choices.size() == 10);
    std::set<std::uint64_t> got;
    for (const ActionChoice& c : d.choices) got.insert(s.index_of(c));
    std::set<std::uint64_t> want;
    for (std::uint64_t i = 0; i < 100; ++i) {
      if ((i * 37) % 100 >= 90) want.insert(i);
    }
    CHECK(got == want);
  }

  TEST_CASE("n beyond the choice count returns everything in order") {
    const ActionSpace s = line_space(3);
    auto rr = std::make_shared<FunctionRerankBackend>(
        [](const RerankRequest& r) { return std::vector<double>(r.documents.size(), 1.0); });
    ModelGateway gw(nullptr, rr, fast_options(1));
    NodeIdAllocator ids(0);
    ControllerDecision d = select_reranker(make_root("x", ids), s, 10, gw);
    REQUIRE(d.choices.size() == 3);
    for (std::uint64_t i = 0; i < 3; ++i) CHECK(s.index_of(d.choices[i]) == i);
  }

  TEST_CASE("finish can win once reasoning has started") {
    const ActionSpace s = line_space(3, true);
    auto rr = std::make_shared<FunctionRerankBackend>([](const RerankRequest& r) {
      std::vector<double> v;
      for (const auto& d : r.documents) v.push_back(d == kFinishDocument ? 10.0 : 0.0);
      return v;
    });
    ModelGateway gw(nullptr, rr, fast_options(1));
    NodeIdAllocator ids(0);
    SearchState root = make_root("x", ids);
    for (const ActionChoice& c : select_reranker(root, s, 3, gw).choices) CHECK_FALSE(c.is_finish);
    SearchState one = append_step(root, record_for(s, s.choice_at(0), "P0 a."), ids);
    SearchState two = append_step(one, record_for(s, s.choice_at(1), "P1 b."), ids);
    CHECK(select_reranker(two, s, 1, gw).choices.front().is_finish);
  }

  TEST_CASE("generative controller passes valid calls through") {
    const ActionSpace& s = demo_space();
    ModelGateway gw(constant_chat(R"([
      {"name": "take_action", "arguments": {"structure": "conditional", "subtopic": "economic"}, "rationale": "a"},
      {"name": "take_action", "arguments": {"structure": "exemplification", "subtopic": "economic"}, "rationale": "b"},
      {"name": "take_action", "arguments": {"structure": "conditional", "subtopic": "environmental"}, "rationale": "c"}])"),
                    nullptr, fast_options(1));
    NodeIdAllocator ids(0);
    ControllerDecision d = select_generative(make_root("x", ids), s, 3, gw, 1);
    REQUIRE(d.choices.size() == 3);
    CHECK(d.rationale_texts == std::vector<std::string>{"a", "b", "c"});
    CHECK(d.choices[1] == arg_choice("exemplification", "economic"));
  }

  TEST_CASE("duplicates collapse and invalid calls are dropped") {
    const ActionSpace& s = demo_space();
    ModelGateway gw(constant_chat(R"([
      {"name": "take_action", "arguments": {"structure": "conditional", "subtopic": "economic"}},
      {"name": "take_action", "arguments": {"structure": "conditional", "subtopic": "economic"}},
      {"name": "take_action", "arguments": {"structure": "sarcasm", "subtopic": "economic"}}])"),
                    nullptr, fast_options(1));
    NodeIdAllocator ids(0);
    ControllerDecision d = select_generative(make_root("x", ids), s, 3, gw, 1);
    REQUIRE(d.choices.size() == 3);
    CHECK(d.choices[0] == arg_choice("conditional", "economic"));
    std::set<ActionChoice> distinct(d.choices.begin(), d.choices.end());
    CHECK(distinct.size() == 3);
    for (const ActionChoice& c : d.choices) CHECK(s.is_valid(c));
  }

  TEST_CASE("unparseable proposals exhaust the re-asks") {
    ModelGateway gw(constant_chat("I would rather not."), nullptr, fast_options(1));
    NodeIdAllocator ids(0);
    CHECK_THROWS_AS(select_generative(make_root("x", ids), demo_space(), 2, gw, 1), ControllerError);
  }

  TEST_CASE("forced controller follows the plan") {
    const ActionSpace& s = demo_space();
    TrajectoryPlan plan{{s.choice_at(2), s.choice_at(1), s.choice_at(3)}, {}};
    NodeIdAllocator ids(0);
    SearchState st = make_root("x", ids);
    CHECK(select_forced(st, plan).choices == std::vector<ActionChoice>{s.choice_at(2)});
    for (int i = 0; i < 3; ++i) st = append_step(st, record_for(s, plan.steps[i], render_intervention(plan.steps[i], s).prefix_text + " x."), ids);
    CHECK(select_forced(st, plan).choices.front().is_finish);
    SearchState deeper = append_step(st, record_for(s, s.choice_at(0), render_intervention(s.choice_at(0), s).prefix_text + " y."), ids);
    CHECK_THROWS(select_forced(deeper, plan));
  }

  TEST_CASE("random controller draws distinct choices reproducibly") {
    const ActionSpace& s = argument_space();
    NodeIdAllocator ids(0);
    SearchState root = make_root("x", ids);
    ControllerDecision a = select_random(root, s, 10, 5), b = select_random(root, s, 10, 5);
    CHECK(a.choices == b.choices);
    CHECK(std::set<ActionChoice>(a.choices.begin(), a.choices.end()).size() == 10);
  }

  TEST_CASE("controller kinds round trip") {
    for (auto k : {ControllerKind::kReranker, ControllerKind::kGenerative, ControllerKind::kForced,
                   ControllerKind::kRandom}) {
      CHECK(controller_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS(controller_kind_from_string("oracle"));
  }
}

TEST_SUITE("evaluator") {
  SearchState answered(const std::string& answer) {
    NodeIdAllocator ids(0);
    const ActionSpace& s = demo_space();
    SearchState st = append_step(make_root("task", ids), record_for(s, s.choice_at(0), "If a."), ids);
    return finalize(st, answer, SynthesisMode::kStrict, ids);
  }

  TEST_CASE("weighted rubric arithmetic") {
    Rubric r = rubric_from_json(json::array({{{"criterion", "a"}, {"weight", 3}}, {{"criterion", "b"}, {"weight", 1}}}));
    CHECK(weighted_rubric_score({4, 0}, r) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(weighted_rubric_score({4, 4}, r) == doctest::Approx(1.0));
    CHECK(weighted_rubric_score({0, 0}, r) == 0.0);
  }

  TEST_CASE("generative scoring parses numbered lines") {
    Rubric r = rubric_from_json(json::array({{{"criterion", "a"}, {"weight", 0.75}}, {{"criterion", "b"}, {"weight", 0.25}}}));
    ModelGateway gw(constant_chat("1: 4 | strong\n2: 0 | weak"), nullptr, fast_options(1));
    CHECK(score_generative(ScoreKind::kOutcome, answered("y"), r, gw) == doctest::Approx(0.75));
    ModelGateway bad(constant_chat("great job"), nullptr, fast_options(1));
    CHECK_THROWS_AS(score_generative(ScoreKind::kOutcome, answered("y"), r, bad), EvaluationError);
  }

  TEST_CASE("reranker scores keep the document order") {
    auto rr = std::make_shared<FunctionRerankBackend>([](const RerankRequest& r) {
      std::vector<double> v;
      for (const auto& d : r.documents) v.push_back(d == "one" ? 3.0 : d == "two" ? 1.0 : 2.0);
      return v;
    });
    ModelGateway gw(nullptr, rr, fast_options(1));
    std::vector<double> s =
        score_reranker(ScoreKind::kOutcome, {answered("one"), answered("two"), answered("three")}, "c", gw);
    REQUIRE(s.size() == 3);
    CHECK(s[0] > s[2]);
    CHECK(s[2] > s[1]);
    for (double v : s) CHECK((v > 0 && v < 1));
  }

  TEST_CASE("programmatic verifiers") {
    Verifier three = make_verifier("min_sentences", json{{"n", 3}});
    CHECK(score_programmatic(ScoreKind::kOutcome, answered("If a. For example b. Moreover c."), three) == 1.0);
    CHECK(score_programmatic(ScoreKind::kOutcome, answered("Only one."), three) == 0.0);
    NodeIdAllocator ids(0);
    CHECK(score_programmatic(ScoreKind::kProcess, make_root("x", ids), make_verifier("min_chars", json{{"n", 1}})) ==
          0.0);
    Verifier no_x = make_verifier("not_contains", json{{"text", "forbidden"}});
    CHECK(no_x.fn("", "a forbidden word") == 0.0);
    CHECK(no_x.fn("", "a forbidden word and more") == 0.0);
    CHECK(no_x.fn("", "clean") == 1.0);
    CHECK_THROWS(make_verifier(std::string("telepathy")));
    CHECK(count_sentences("One. Two! Three?") == 3);
  }
}

TEST_SUITE("beam_search") {
  SearchState scored(std::uint64_t counter, double score) {
    SearchState s;
    s.node_id = NodeId{0, counter};
    s.steps.push_back(StepRecord{});
    s.prm_scores.push_back(score);
    return s;
  }

  TEST_CASE("prune keeps the best by score then node id") {
    auto kept = prune_layer({scored(1, 0.9), scored(2, 0.5), scored(3, 0.7)}, 2);
    REQUIRE(kept.size() == 2);
    std::set<std::uint64_t> ids{kept[0].node_id.counter, kept[1].node_id.counter};
    CHECK(ids == std::set<std::uint64_t>{1, 3});
    auto ties = prune_layer({scored(7, 0.5), scored(4, 0.5), scored(9, 0.5)}, 2);
    CHECK(ties[0].node_id.counter == 4);
    CHECK(ties[1].node_id.counter == 7);
    CHECK(prune_layer({scored(2, 0.1)}, 5).size() == 1);
  }

  TEST_CASE("prune agrees with a sort oracle at 25 from 50") {
    Rng rng(8);
    std::vector<SearchState> c;
    for (std::uint64_t i = 0; i < 50; ++i) c.push_back(scored(i, static_cast<double>(uniform_index(rng, 10))));
    auto oracle = c;
    std::sort(oracle.begin(), oracle.end(), [](const SearchState& a, const SearchState& b) {
      if (*a.prm_score() != *b.prm_score()) return *a.prm_score() > *b.prm_score();
      return a.node_id < b.node_id;
    });
    auto kept = prune_layer(c, 25);
    std::set<std::uint64_t> got, want;
    for (const auto& s : kept) got.insert(s.node_id.counter);
    for (int i = 0; i < 25; ++i) want.insert(oracle[i].node_id.counter);
    CHECK(got == want);
  }

  struct Rig {
    std::unique_ptr<ModelGateway> gw = mock_gateway();
    ActionSpace space = grid_space(4, 4);
    Generator gen{*gw, space, {}, SynthesisMode::kStrict};
    std::unique_ptr<Controller> ctrl = make_reranker_controller(space, *gw);
    std::unique_ptr<Evaluator> prm = make_reranker_evaluator(*gw, "quality");
    std::unique_ptr<Evaluator> orm = make_reranker_evaluator(*gw, "quality");
    SearchModules modules() const { return {gw.get(), ctrl.get(), &gen, prm.get(), orm.get()}; }
  };

  TEST_CASE("wide depth-1 trees give n finals") {
    Rig rig;
    SearchConfig c;
    c.branching = 10;
    c.beam_width = 10;
    c.max_depth = 1;
    c.return_all_finals = true;
    TreeResult r = run_tree("x", c, rig.modules());
    CHECK(r.finals.size() == 10);
    std::set<ActionChoice> first;
    for (const Trace& t : r.traces) first.insert(t.trajectory.at(0));
    CHECK(first.size() == 10);
    for (std::size_t i = 1; i < r.finals.size(); ++i) CHECK(*r.finals[i - 1].orm_score >= *r.finals[i].orm_score);
  }

  TEST_CASE("forced n=k=1 follows a depth-3 plan") {
    Rig rig;
    TrajectoryPlan plan{{rig.space.choice_at(5), rig.space.choice_at(0), rig.space.choice_at(15)}, {}};
    auto forced = make_forced_controller(plan);
    SearchModules m = rig.modules();
    m.controller = forced.get();
    SearchConfig c;
    c.branching = 1;
    c.beam_width = 1;
    c.max_depth = 3;
    c.controller = ControllerKind::kForced;
    TreeResult r = run_tree("x", c, m);
    REQUIRE(r.traces.size() == 1);
    CHECK(r.traces[0].trajectory == plan.steps);
  }

  TEST_CASE("run_forest uses seed-scoped ids") {
    Rig rig;
    SearchConfig c;
    c.max_depth = 2;
    ForestResult one = run_forest("x", c, {3}, rig.modules());
    c.tree_seed = 3;
    TreeResult tree = run_tree("x", c, rig.modules());
    CHECK(one.traces == tree.selected(c));
    ForestResult two = run_forest("x", c, {3, 4}, rig.modules());
    std::set<std::int64_t> seeds;
    for (const Trace& t : two.traces) seeds.insert(t.node_id.tree_seed);
    CHECK(seeds == std::set<std::int64_t>{3, 4});
    CHECK_THROWS(run_forest("x", c, {3, 3}, rig.modules()));
  }

  TEST_CASE("runs are deterministic under concurrency") {
    Rig a, b;
    SearchConfig c;
    c.branching = 4;
    c.beam_width = 3;
    c.max_depth = 3;
    c.return_all_finals = true;
    c.tree_seed = 77;
    CHECK(run_tree("x", c, a.modules()).traces == run_tree("x", c, b.modules()).traces);
  }

  TEST_CASE("total generation failure raises no-solution") {
    auto gw = std::make_unique<ModelGateway>(
        std::make_shared<FunctionChatBackend>(
            [](const ChatRequest&) -> Completion { throw GenerationFailure("refused"); }),
        MockRerankBackend::from_file(data_dir() / "mock/rerank.json"), fast_options(1));
    ActionSpace s = grid_space(2, 2);
    Generator gen(*gw, s, {}, SynthesisMode::kStrict);
    auto ctrl = make_reranker_controller(s, *gw);
    auto ev = make_reranker_evaluator(*gw, "q");
    SearchConfig c;
    CHECK_THROWS_AS(run_tree("x", c, {gw.get(), ctrl.get(), &gen, ev.get(), ev.get()}), NoSolutionError);
  }

  TEST_CASE("config validation") {
    SearchConfig c;
    c.branching = 0;
    CHECK_THROWS(validate(c));
    SearchConfig d;
    d.temperature = 0.3;
    d.controller = ControllerKind::kRandom;
    SearchConfig back = search_config_from_json(to_json(d));
    CHECK(back.temperature == 0.3);
    CHECK(back.controller == ControllerKind::kRandom);
  }
}
