#include "toolbudget/core.hpp"
#include "toolbudget/rng.hpp"

#include <doctest.h>

#include <functional>

using namespace toolbudget;

namespace {

TaskInstance small_task(const Rat& budget) {
    TaskInstance t;
    t.task_id = "t0";
    t.query = "q";
    t.budget = budget;
    t.market.tools = {{"a", "tool a", "d", "{}", Rat(9)}, {"b", "tool b", "d", "{}", Rat(38)}};
    t.seed = 1;
    return t;
}

History h0() { return History::initial("sys", "query", "budget: 50", "market"); }

}  // namespace

TEST_CASE("initial history is the [System, Query, Budget, Market] scaffold") {
    const History h = h0();
    REQUIRE(h.size() == 4);
    CHECK(h.blocks()[0].kind == BlockKind::System);
    CHECK(h.blocks()[1].kind == BlockKind::Query);
    CHECK(h.blocks()[2].kind == BlockKind::Budget);
    CHECK(h.blocks()[3].kind == BlockKind::Market);
}

TEST_CASE("append_block grows the history and keeps the prefix intact") {
    const History h = h0();
    const History h1 = append_block(h, {BlockKind::Reasoning, "think", 1});
    CHECK(h1.size() == 5);
    CHECK(h.size() == 4);  // source history untouched

    const History h2 = append_block(h1, {BlockKind::Action, "act", 1});
    CHECK(h2.size() == 6);
    for (std::size_t i = 0; i < h1.size(); ++i) {
        CHECK(h2.blocks()[i].payload == h1.blocks()[i].payload);
        CHECK(h2.blocks()[i].kind == h1.blocks()[i].kind);
    }
}

TEST_CASE("append_block rejects a decreasing step index") {
    History h = append_block(h0(), {BlockKind::Reasoning, "r", 3});
    CHECK_THROWS_AS(append_block(h, ContextBlock{BlockKind::Action, "a", 2}), StructuralError);
}

TEST_CASE("context blocks must be non-empty except observations") {
    CHECK_THROWS_AS(ContextBlock(BlockKind::Reasoning, "", 0), StructuralError);
    CHECK_NOTHROW(ContextBlock(BlockKind::Observation, "", 0));
    CHECK_THROWS_AS(ContextBlock(BlockKind::Query, "q", -1), StructuralError);
}

TEST_CASE("history monotonicity under random append sequences") {
    RngStream rng(17);
    History h = h0();
    std::vector<std::string> seen;
    for (const auto& b : h.blocks()) seen.push_back(b.payload);
    int step = 0;
    for (int i = 0; i < 200; ++i) {
        step += static_cast<int>(rng.next_in(0, 2));
        const std::string payload = "p" + std::to_string(i);
        const std::size_t before = h.size();
        h = h.append({BlockKind::Observation, payload, step});
        CHECK(h.size() == before + 1);
        seen.push_back(payload);
        for (std::size_t k = 0; k < seen.size(); ++k) CHECK(h.blocks()[k].payload == seen[k]);
    }
}

TEST_CASE("compute_reward gates the judge score on feasibility") {
    Trajectory t;
    t.task = small_task(50);

    SUBCASE("within budget keeps the score") {
        t.total_cost = Rat(43);
        CHECK(compute_reward(t, Rat(1)) == Rat(1));
        CHECK(*t.reward == Rat(1));
        CHECK(*t.judge_score == Rat(1));
    }
    SUBCASE("over budget zeroes the reward") {
        t.total_cost = Rat(61);
        CHECK(compute_reward(t, Rat(1)) == Rat(0));
        CHECK(*t.judge_score == Rat(1));
    }
    SUBCASE("zero-cost trajectory is feasible by construction") {
        t.total_cost = 0;
        CHECK(compute_reward(t, Rat(3, 10)) == Rat(3, 10));
    }
    SUBCASE("scores outside [0,1] are a domain error") {
        t.total_cost = 0;
        CHECK_THROWS_AS(compute_reward(t, Rat(3, 2)), DomainError);
        CHECK_THROWS_AS(compute_reward(t, Rat(-1, 2)), DomainError);
    }
}

TEST_CASE("task json round-trips bit-exactly") {
    const TaskInstance t = small_task(Rat(101, 2));
    const auto j = task_to_json(t);
    const TaskInstance back = task_from_json(j);
    CHECK(task_to_json(back).dump() == j.dump());
    CHECK(back.budget == Rat(101, 2));
    CHECK(back.market.tools.size() == 2);
}

TEST_CASE("task json validation") {
    auto j = task_to_json(small_task(50));
    j["budget"] = "0";
    CHECK_THROWS_AS(task_from_json(j), StructuralError);
    j = task_to_json(small_task(50));
    j["market"]["tools"][1]["tool_id"] = "a";  // duplicate
    CHECK_THROWS_AS(task_from_json(j), StructuralError);
}

TEST_CASE("action json round-trip") {
    const Action call = Action::call("a", "{\"x\":1}");
    const Action ans = Action::answer("done");
    CHECK(action_from_json(action_to_json(call)) == call);
    CHECK(action_from_json(action_to_json(ans)) == ans);
}

TEST_CASE("trajectory jsonl round-trips and validates") {
    Trajectory t;
    t.task = small_task(50);
    t.steps.push_back({"r1", Action::call("a", "{}"), "obs", Rat(9), Verdict::Accepted, Rat(41)});
    t.steps.push_back({"r2", Action::answer("done"), "", 0, Verdict::NotConsulted, Rat(41)});
    t.terminal = Terminal::answered("done");
    t.total_cost = Rat(9);
    compute_reward(t, Rat(1));

    const std::string jsonl = trajectory_to_jsonl(t);
    const Trajectory back = trajectory_from_jsonl(jsonl);
    CHECK(trajectory_to_jsonl(back) == jsonl);
    CHECK(validate_trajectory(back).empty());
}

TEST_CASE("validate_trajectory flags a broken budget ledger") {
    Trajectory t;
    t.task = small_task(50);
    t.steps.push_back({"r1", Action::call("a", "{}"), "obs", Rat(9), Verdict::Accepted, Rat(40)});
    t.terminal = Terminal::step_cap();
    t.total_cost = Rat(9);
    const auto violations = validate_trajectory(t);
    REQUIRE(!violations.empty());
    CHECK(violations[0].find("ledger") != std::string::npos);
}

TEST_CASE("validate_trajectory flags charged rejections and infeasible rewards") {
    Trajectory t;
    t.task = small_task(50);
    t.steps.push_back({"r1", Action::call("b", "{}"), "no", Rat(38), Verdict::Rejected, Rat(12)});
    t.terminal = Terminal::step_cap();
    t.total_cost = Rat(38);
    CHECK(!validate_trajectory(t).empty());

    Trajectory t2;
    t2.task = small_task(50);
    t2.terminal = Terminal::answered("x");
    t2.total_cost = Rat(61);
    t2.judge_score = Rat(1);
    t2.reward = Rat(1);  // must have been zeroed
    CHECK(!validate_trajectory(t2).empty());
}

TEST_CASE("market rendering includes costs only when disclosed") {
    const TaskInstance t = small_task(50);
    const std::string with = render_market_block(t.market, true);
    const std::string without = render_market_block(t.market, false);
    CHECK(with.find("cost=9.00") != std::string::npos);
    CHECK(without.find("cost=") == std::string::npos);
    CHECK(without.find("tool a") != std::string::npos);
    CHECK(render_budget_block(Rat(50), false) == "Budget: (not disclosed)");
    CHECK(render_budget_block(Rat(50), true).find("50.00") != std::string::npos);
}
