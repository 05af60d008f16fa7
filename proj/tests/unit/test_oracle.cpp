#include "toolbudget/oracle.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

using namespace toolbudget;
using namespace tbtest;

namespace {

struct IntentHarness {
    SyntheticTask task = golden_task();
    std::unique_ptr<TablePredictor> predictor = golden_predictor(task);
    SyntheticGenerator generator{task};
    OracleState state = OracleState::for_task(task.task);
    RngStream rng{7, "oracle"};
    IntentConfig config;
    History history = History::initial(default_system_prompt(), task.task.query,
                                       render_budget_block(task.task.budget, true),
                                       render_market_block(task.task.market, true));

    OracleDecision consult(PolicyInterface& policy, const Action& action,
                           const Money& remaining, const std::string& reasoning = "r") {
        return intent_consult(history, reasoning, action, remaining, policy, *predictor,
                              generator, rng, state, config);
    }
};

}  // namespace

TEST_CASE("geometric_cost is exact division with clamping") {
    CHECK(geometric_cost(38, rat_parse("0.35"), rat_parse("0.001")) == Rat(760, 7));
    CHECK(geometric_cost(11, 1, rat_parse("0.001")) == Rat(11));
    CHECK(geometric_cost(10, 0, rat_parse("0.001")) == Rat(10000));
    CHECK(geometric_cost(10, 2, rat_parse("0.001")) == Rat(10));  // rho clamped to 1
    CHECK_THROWS_AS(geometric_cost(-1, 1, rat_parse("0.001")), DomainError);
}

TEST_CASE("calibrated cost dominates the raw price") {
    RngStream rng(5);
    for (int i = 0; i < 200; ++i) {
        const Rat cost(static_cast<std::int64_t>(rng.next_in(0, 5000)), 100);
        const Rat rho(static_cast<std::int64_t>(rng.next_in(1, 1000)), 1000);
        CHECK(geometric_cost(cost, rho, rat_parse("0.001")) >= cost);
    }
}

TEST_CASE("actions_match respects the configured granularity") {
    const Action a = Action::call("t", "{\"x\":1}");
    const Action b = Action::call("t", "{\"x\":2}");
    const Action c = Action::call("u", "{\"x\":1}");
    CHECK(actions_match(a, b, ActionMatch::ToolNameOnly));
    CHECK_FALSE(actions_match(a, b, ActionMatch::ToolNameAndArgs));
    CHECK_FALSE(actions_match(a, c, ActionMatch::ToolNameOnly));
    CHECK_FALSE(actions_match(a, Action::answer("x"), ActionMatch::ToolNameOnly));
}

TEST_CASE("mco accepts an affordable simulated plan and rejects an overdraft") {
    const SyntheticTask task = golden_task();
    SyntheticWorldModel wm(task);
    wm.set_diversity(0.0);  // deterministic: every draw follows the majority outcome
    RngStream rng(7, "oracle");
    IntentConfig config;
    const History h = History::initial("s", "q", "b", "m");

    SUBCASE("projected 9+11+23 = 43 <= 50 is accepted") {
        ScriptPolicy policy(call_script({{"t9", "{}"}, {"t11", "{}"}, {"t23", "{}"}}), "done");
        const auto d = mco_consult(h, "r", Action::call("t9", "{}"), Rat(50), task.task.market,
                                   policy, wm, rng, config);
        CHECK(d.accept);
    }
    SUBCASE("projected 38+23 = 61 > 50 is rejected with the simulated trace") {
        ScriptPolicy policy(call_script({{"t38", "{}"}, {"t23", "{}"}}), "done");
        const auto d = mco_consult(h, "r", Action::call("t38", "{}"), Rat(50), task.task.market,
                                   policy, wm, rng, config);
        REQUIRE_FALSE(d.accept);
        const auto payload = parse_feedback_trace(d.feedback);
        CHECK(payload["projected_total"] == "61.00");
        CHECK(payload["overflow"] == false);
        REQUIRE(payload["trace"].size() == 2);
        CHECK(payload["trace"][0]["price"] == "38.00");
        CHECK(payload["trace"][1]["price"] == "23.00");
    }
    SUBCASE("a zero-cost plan is accepted at zero remaining budget") {
        SyntheticTask free_task = golden_task();
        free_task.tools.push_back(make_tool("free", 0, Rat(1), "extra"));
        free_task.sync_market();
        SyntheticWorldModel wm2(free_task);
        wm2.set_diversity(0.0);
        ScriptPolicy policy(call_script({{"free", "{}"}}), "done");
        const auto d = mco_consult(h, "r", Action::call("free", "{}"), Rat(0),
                                   free_task.task.market, policy, wm2, rng, config);
        CHECK(d.accept);
    }
    SUBCASE("horizon overflow is rejected pessimistically") {
        class LoopPolicy : public PolicyInterface {
        public:
            PolicyStep step(const History&) override {
                return {"again", Action::call("t9", "{}")};
            }
        } policy;
        const auto d = mco_consult(h, "r", Action::call("t9", "{}"), Rat(10000),
                                   task.task.market, policy, wm, rng, config);
        REQUIRE_FALSE(d.accept);
        CHECK(parse_feedback_trace(d.feedback)["overflow"] == true);
    }
}

TEST_CASE("ideal_rollout prices each step by cost over rho, exactly") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t38", "{}")},
                         PolicyStep{"r", Action::call("t11", "a0")}},
                        "done");
    const auto rollout = ideal_rollout(h.history, "r", Action::call("t38", "{}"), policy,
                                       *h.predictor, h.generator, h.rng, h.state, h.config);
    REQUIRE(rollout.reached_answer);
    REQUIRE(rollout.steps.size() == 2);
    CHECK(rollout.steps[0].rho == rat_parse("0.35"));
    CHECK(rollout.steps[0].calibrated_cost == Rat(760, 7));
    CHECK(rollout.steps[1].rho == rat_parse("0.97"));
    CHECK(rollout.steps[1].calibrated_cost == Rat(1100, 97));
    CHECK(rollout.steps[0].observation.rfind("OK", 0) == 0);  // z=1 payloads parse as success
    CHECK(h.state.ideal_rollouts == 1);
}

TEST_CASE("rollout blacklists tools whose rho falls below delta") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t7", "{}")},
                         PolicyStep{"r", Action::call("t45", "{}")}},
                        "done");
    const auto rollout = ideal_rollout(h.history, "r", Action::call("t7", "{}"), policy,
                                       *h.predictor, h.generator, h.rng, h.state, h.config);
    CHECK(rollout.reached_answer);
    CHECK(h.state.blacklist == std::set<std::string>{"t7"});
    CHECK(h.state.pruned_market.tools.size() == h.task.tools.size() - 1);
    CHECK(h.state.pruned_market.find("t7") == nullptr);
}

TEST_CASE("degenerate plan: proposal immediately followed by a simulated answer") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t11", "{}")}}, "done");
    const auto rollout = ideal_rollout(h.history, "r", Action::call("t11", "{}"), policy,
                                       *h.predictor, h.generator, h.rng, h.state, h.config);
    CHECK(rollout.reached_answer);
    CHECK(rollout.steps.size() == 1);
}

// The three case-study verdicts, with displayed probabilities and exact
// rational arithmetic throughout.
TEST_CASE("intent golden verdict: the 38-credit plan is rejected at 59.96") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t38", "{}")},
                         PolicyStep{"r", Action::call("t11", "a0")}},
                        "done");

    // exact risk-adjusted total, via an independent rollout
    {
        IntentHarness probe;
        ScriptPolicy p2({PolicyStep{"r", Action::call("t38", "{}")},
                         PolicyStep{"r", Action::call("t11", "a0")}},
                        "done");
        const auto rollout = ideal_rollout(probe.history, "r", Action::call("t38", "{}"), p2,
                                           *probe.predictor, probe.generator, probe.rng,
                                           probe.state, probe.config);
        Rat sigma = 0;
        for (const auto& s : rollout.steps) sigma += s.calibrated_cost;
        CHECK(sigma == Rat(81420, 679));
        CHECK(probe.config.gamma * sigma == Rat(40710, 679));
        CHECK(rat_decimal(probe.config.gamma * sigma, 2) == "59.96");
    }

    const auto d = h.consult(policy, Action::call("t38", "{}"), Rat(50));
    REQUIRE_FALSE(d.accept);
    const auto payload = parse_feedback_trace(d.feedback);
    CHECK(payload["risk_adjusted_total"] == "59.96");
    REQUIRE(payload["trace"].size() == 2);
    CHECK(payload["trace"][0]["p_success"] == "0.350");
    CHECK(payload["trace"][0]["expected_cost"] == "108.57");
    CHECK(payload["trace"][1]["p_success"] == "0.970");
    CHECK(payload["trace"][1]["expected_cost"] == "11.34");
    // feedback exposes names, prices, probabilities only
    CHECK(d.feedback.find("{}") == std::string::npos);        // no simulated arguments
    CHECK(d.feedback.find("OK") == std::string::npos);        // no simulated observations
}

TEST_CASE("intent golden verdict: the low-rho plan is rejected and blacklisted") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t7", "{}")},
                         PolicyStep{"r", Action::call("t13", "{}")},
                         PolicyStep{"r", Action::call("t45", "{}")}},
                        "done");
    const auto d = h.consult(policy, Action::call("t7", "{}"), Rat(50));
    REQUIRE_FALSE(d.accept);
    CHECK(h.state.blacklist == std::set<std::string>{"t13", "t7"});
    CHECK(d.newly_blacklisted.size() == 2);
    CHECK(parse_feedback_trace(d.feedback)["risk_adjusted_total"] == "856.25");

    // blacklist permanence: the pruned tools are never accepted again
    const auto again = h.consult(policy, Action::call("t7", "{}"), Rat(50));
    CHECK_FALSE(again.accept);
    CHECK(again.feedback.find("removed from the market") != std::string::npos);
    CHECK(h.state.pruned_market.find("t7") == nullptr);
    CHECK(h.state.pruned_market.find("t13") == nullptr);
}

TEST_CASE("intent golden verdict: the 49.88 plan is accepted and cached") {
    IntentHarness h;
    const std::vector<PolicyStep> steps = {
        PolicyStep{"r", Action::call("t9", "{}")},  PolicyStep{"r", Action::call("t11", "{}")},
        PolicyStep{"r", Action::call("t23", "{}")}, PolicyStep{"r", Action::call("t13", "alt")},
        PolicyStep{"r", Action::call("t9", "b")},
    };

    {
        IntentHarness probe;
        ScriptPolicy p2(steps, "done");
        const auto rollout = ideal_rollout(probe.history, "r", Action::call("t9", "{}"), p2,
                                           *probe.predictor, probe.generator, probe.rng,
                                           probe.state, probe.config);
        REQUIRE(rollout.reached_answer);
        Rat sigma = 0;
        for (const auto& s : rollout.steps) sigma += s.calibrated_cost;
        CHECK(sigma == Rat(20971100, 210231));
        CHECK(probe.config.gamma * sigma == Rat(10485550, 210231));
        CHECK(rat_decimal(probe.config.gamma * sigma, 2) == "49.88");
        CHECK(probe.config.gamma * sigma <= Rat(50));
    }

    ScriptPolicy policy(steps, "done");
    const auto d = h.consult(policy, Action::call("t9", "{}"), Rat(50));
    CHECK(d.accept);
    REQUIRE(h.state.rollout_cache.size() == 4);
    CHECK(h.state.rollout_cache.front().as_call().tool_id == "t11");
}

TEST_CASE("rollout cache grants plan continuity without re-simulation") {
    IntentHarness h;
    const std::vector<PolicyStep> steps = {
        PolicyStep{"r", Action::call("t9", "{}")},
        PolicyStep{"r", Action::call("t11", "{}")},
        PolicyStep{"r", Action::call("t23", "{}")},
    };
    ScriptPolicy policy(steps, "done");
    REQUIRE(h.consult(policy, Action::call("t9", "{}"), Rat(50)).accept);
    const auto rollouts_before = h.state.ideal_rollouts;

    // matching head: pop and accept, no rollout
    CHECK(h.consult(policy, Action::call("t11", "other-args"), Rat(41)).accept);
    CHECK(h.state.ideal_rollouts == rollouts_before);  // ToolNameOnly match
    CHECK(h.state.rollout_cache.size() == 1);

    CHECK(h.consult(policy, Action::call("t23", "{}"), Rat(30)).accept);
    CHECK(h.state.rollout_cache.empty());
    CHECK(h.state.cache_hits == 2);
}

TEST_CASE("an unaffordable cache hit is a miss and clears the cache") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t9", "{}")},
                         PolicyStep{"r", Action::call("t38", "{}")}},
                        "done");
    REQUIRE(h.consult(policy, Action::call("t9", "{}"), Rat(50)).accept);
    REQUIRE(h.state.rollout_cache.size() == 1);  // [t38]

    // t38 head matches but 38 > 20 remaining: treated as a miss
    ScriptPolicy policy2({PolicyStep{"r", Action::call("t38", "{}")}}, "done");
    const auto d = h.consult(policy2, Action::call("t38", "{}"), Rat(20));
    CHECK_FALSE(d.accept);
    CHECK(h.state.rollout_cache.empty());
}

TEST_CASE("cache mismatch clears the rollout cache") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t9", "{}")},
                         PolicyStep{"r", Action::call("t11", "{}")}},
                        "done");
    REQUIRE(h.consult(policy, Action::call("t9", "{}"), Rat(50)).accept);
    REQUIRE_FALSE(h.state.rollout_cache.empty());

    ScriptPolicy deviate({PolicyStep{"r", Action::call("t23", "{}")}}, "done");
    CHECK(h.consult(deviate, Action::call("t23", "{}"), Rat(41)).accept);  // fresh rollout
    CHECK(h.state.ideal_rollouts == 2);
}

TEST_CASE("last-call cache accepts an immediate identical re-proposal") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t38", "{}")},
                         PolicyStep{"r", Action::call("t11", "a0")}},
                        "done");
    REQUIRE_FALSE(h.consult(policy, Action::call("t38", "{}"), Rat(50)).accept);
    REQUIRE(h.state.last_rejected.has_value());

    const auto rollouts_before = h.state.ideal_rollouts;
    const auto d = h.consult(policy, Action::call("t38", "{}"), Rat(50));
    CHECK(d.accept);
    CHECK(h.state.ideal_rollouts == rollouts_before);  // no rollout performed
    CHECK_FALSE(h.state.last_rejected.has_value());    // cleared on accept
}

TEST_CASE("last-call cache never overrides affordability") {
    IntentHarness h;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t38", "{}")},
                         PolicyStep{"r", Action::call("t11", "a0")}},
                        "done");
    REQUIRE_FALSE(h.consult(policy, Action::call("t38", "{}"), Rat(50)).accept);
    const auto d = h.consult(policy, Action::call("t38", "{}"), Rat(20));
    CHECK_FALSE(d.accept);  // 38 > 20: falls through to a rollout and fails the immediate check
}

TEST_CASE("every accept path requires immediate affordability") {
    IntentHarness h;
    h.config.gamma = Rat(1, 1000);  // make the risk-adjusted check trivially pass
    ScriptPolicy policy({PolicyStep{"r", Action::call("t45", "{}")}}, "done");
    const auto d = h.consult(policy, Action::call("t45", "{}"), Rat(44));
    CHECK_FALSE(d.accept);  // 45 > 44 even though gamma * sigma is tiny
}

TEST_CASE("gamma monotonicity over a fixed rollout") {
    // plan: single call t9 with rho 0.71 -> sigma = 900/71 ~ 12.68
    const Rat sigma(900, 71);
    std::vector<Rat> gammas = {Rat(1, 4), Rat(1, 2), Rat(1), Rat(4)};
    std::vector<bool> accepted;
    for (const auto& g : gammas) {
        IntentHarness h;
        h.config.gamma = g;
        ScriptPolicy policy({PolicyStep{"r", Action::call("t9", "{}")}}, "done");
        accepted.push_back(h.consult(policy, Action::call("t9", "{}"), Rat(13)).accept);
    }
    // gamma * sigma vs 13: 3.17 ok, 6.34 ok, 12.68 ok, 50.7 rejected
    CHECK(accepted == std::vector<bool>{true, true, true, false});
    for (std::size_t i = 1; i < accepted.size(); ++i)
        CHECK((accepted[i] ? accepted[i - 1] : true));  // accept at g2 implies accept at g1 <= g2
}

TEST_CASE("rollout horizon overflow rejects with an overflow tag") {
    IntentHarness h;
    class LoopPolicy : public PolicyInterface {
    public:
        PolicyStep step(const History&) override { return {"again", Action::call("t11", "{}")}; }
    } policy;
    const auto d = h.consult(policy, Action::call("t11", "{}"), Rat(10000));
    REQUIRE_FALSE(d.accept);
    CHECK(parse_feedback_trace(d.feedback)["overflow"] == true);
}

TEST_CASE("rho is clamped to rho_min before division") {
    IntentHarness h;
    h.predictor->set_override("t11", "zero", Rat(0));
    ScriptPolicy policy({PolicyStep{"r", Action::call("t11", "zero")}}, "done");
    const auto rollout = ideal_rollout(h.history, "r", Action::call("t11", "zero"), policy,
                                       *h.predictor, h.generator, h.rng, h.state, h.config);
    REQUIRE(rollout.steps.size() == 1);
    CHECK(rollout.steps[0].rho == Rat(1, 1000));
    CHECK(rollout.steps[0].calibrated_cost == Rat(11000));
}

TEST_CASE("oracle state is rebuilt per task: no cross-task leakage") {
    IntentHarness h1;
    ScriptPolicy policy({PolicyStep{"r", Action::call("t7", "{}")}}, "done");
    h1.consult(policy, Action::call("t7", "{}"), Rat(50));
    CHECK(!h1.state.blacklist.empty());

    IntentHarness h2;
    CHECK(h2.state.blacklist.empty());
    CHECK(h2.state.pruned_market.find("t7") != nullptr);
}
