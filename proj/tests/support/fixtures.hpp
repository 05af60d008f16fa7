#pragma once
// Shared fixtures for unit and acceptance tests.

#include "toolbudget/bench.hpp"
#include "toolbudget/core.hpp"
#include "toolbudget/engine.hpp"
#include "toolbudget/oracle.hpp"
#include "toolbudget/simenv.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace tbtest {

using namespace toolbudget;

inline SyntheticTool make_tool(const std::string& id, const Rat& cost, const Rat& prob,
                               const std::string& fact) {
    SyntheticTool t;
    t.spec = {id, id, "fixture tool", "{}", cost};
    t.success_prob = prob;
    t.success_payload_template = "OK {facts} retrieved by {tool}";
    t.failure_payload_template = "ERROR: {tool} returned no usable data";
    t.provides_facts = {fact};
    return t;
}

// Price/probability pool from the case-study arithmetic: prices
// {38, 11, 23, 9, 7, 13, 45}, probabilities {0.35, 0.97, 0.90, 0.71, 0.02,
// 0.01, 0.72, 0.94} (0.97 is reachable through a per-argument override on
// the 11-credit tool).
inline SyntheticTask golden_task(const Rat& budget = Rat(50)) {
    SyntheticTask st;
    st.tools = {
        make_tool("t38", 38, rat_parse("0.35"), "cashflow"),
        make_tool("t11", 11, rat_parse("0.94"), "income"),
        make_tool("t23", 23, rat_parse("0.90"), "balance"),
        make_tool("t9", 9, rat_parse("0.71"), "cashflow"),
        make_tool("t7", 7, rat_parse("0.02"), "cashflow"),
        make_tool("t13", 13, rat_parse("0.01"), "income"),
        make_tool("t45", 45, rat_parse("0.72"), "ratios"),
    };
    st.required_facts = {"cashflow", "income", "balance"};
    st.reference_tools = {"t9", "t11", "t23"};
    st.task.task_id = "golden";
    st.task.query = "Collect the following facts within budget: balance, cashflow, income.";
    st.task.budget = budget;
    st.task.seed = 7;
    st.sync_market();
    return st;
}

inline std::unique_ptr<TablePredictor> golden_predictor(const SyntheticTask& task) {
    auto p = std::make_unique<TablePredictor>(task);
    p->set_override("t11", "a0", rat_parse("0.97"));
    p->set_override("t13", "alt", rat_parse("0.35"));
    return p;
}

class PermissiveOracle : public OracleInterface {
public:
    OracleDecision consult(const History&, const std::string&, const Action&,
                           const Money&) override {
        return {true, "", {}};
    }
};

class RejectOracle : public OracleInterface {
public:
    OracleDecision consult(const History&, const std::string&, const Action&,
                           const Money&) override {
        return {false, "rejected: the proposed call is not allowed", {}};
    }
};

// Enforcing oracle with no lookahead: accept iff immediately affordable.
class ThresholdOracle : public OracleInterface {
public:
    explicit ThresholdOracle(MarketSnapshot market) : market_(std::move(market)) {}
    OracleDecision consult(const History&, const std::string&, const Action& action,
                           const Money& remaining) override {
        const ToolSpec* tool = market_.find(action.as_call().tool_id);
        if (tool != nullptr && tool->per_call_cost <= remaining) return {true, "", {}};
        return {false, "rejected: call does not fit the remaining budget", {}};
    }

private:
    MarketSnapshot market_;
};

class FixedEnv : public EnvironmentInterface {
public:
    explicit FixedEnv(std::string payload = "OK done") : payload_(std::move(payload)) {}
    std::string execute(const ToolSpec&, const std::string&, RngStream&) override {
        return payload_;
    }

private:
    std::string payload_;
};

class ThrowingEnv : public EnvironmentInterface {
public:
    std::string execute(const ToolSpec&, const std::string&, RngStream&) override {
        throw std::runtime_error("backend unavailable");
    }
};

class ThrowingPolicy : public PolicyInterface {
public:
    PolicyStep step(const History&) override {
        ++calls;
        throw MalformedActionError("cannot parse");
    }
    int calls = 0;
};

class CountingPolicy : public PolicyInterface {
public:
    explicit CountingPolicy(PolicyInterface& inner) : inner_(inner) {}
    PolicyStep step(const History& history) override {
        ++calls;
        return inner_.step(history);
    }
    int calls = 0;

private:
    PolicyInterface& inner_;
};

inline std::vector<PolicyStep> call_script(const std::vector<std::pair<std::string, std::string>>& calls) {
    std::vector<PolicyStep> script;
    for (const auto& [tool, args] : calls)
        script.push_back({"call " + tool, Action::call(tool, args)});
    return script;
}

}  // namespace tbtest
