#include "toolbudget/engine.hpp"

#include <set>

namespace toolbudget {

namespace {

struct LoopState {
    History history;
    MarketSnapshot market;  // current, possibly pruned
    Money remaining;
    Trajectory trajectory;
    int real_steps = 0;
    int consecutive_rejections = 0;
    int step_index = 1;
};

bool any_affordable(const MarketSnapshot& market, const Money& remaining) {
    for (const auto& t : market.tools)
        if (t.per_call_cost <= remaining) return true;
    return false;
}

// Shared loop for oracle-guided and soft runs. `oracle == nullptr` selects
// soft semantics: tool calls execute unchecked and may overdraw the budget.
Trajectory run_loop(const TaskInstance& task, PolicyInterface& policy, EnvironmentInterface& env,
                    OracleInterface* oracle, const EngineConfig& config, SoftMode mode) {
    if (config.max_real_steps < 1 || config.max_rejections_per_step < 1)
        throw ConfigError("engine caps must be >= 1");
    if (task.budget <= 0) throw ConfigError("task budget must be positive");
    if (task.market.tools.empty()) throw ConfigError("task market is empty");

    const bool disclose = oracle != nullptr || mode == SoftMode::Prompt;
    LoopState st{History::initial(default_system_prompt(), task.query,
                                  render_budget_block(task.budget, disclose),
                                  render_market_block(task.market, disclose)),
                 task.market, task.budget, Trajectory{}, 0, 0, 1};
    st.trajectory.task = task;
    st.trajectory.total_cost = 0;

    RngStream env_rng(task.seed, "env");

    auto fail = [&](TerminalKind kind) {
        st.trajectory.terminal =
            kind == TerminalKind::BudgetExhausted ? Terminal::budget_exhausted() : Terminal::step_cap();
    };

    auto record_step = [&](const PolicyStep& ps, const std::string& observation, Money cost,
                           Verdict verdict) {
        st.trajectory.steps.push_back(
            {ps.reasoning, ps.action, observation, cost, verdict, st.remaining});
    };

    auto rejection_cap_hit = [&]() -> bool {
        ++st.consecutive_rejections;
        if (st.consecutive_rejections < config.max_rejections_per_step) return false;
        // Classify the forced stop: if nothing in the market fits the
        // remaining budget the agent is out of options, not out of patience.
        if (oracle != nullptr && !any_affordable(st.market, st.remaining))
            fail(TerminalKind::BudgetExhausted);
        else
            fail(TerminalKind::StepCapReached);
        return true;
    };

    while (true) {
        if (oracle != nullptr && st.remaining < 0) {
            // Only reachable under a non-enforcing oracle implementation.
            fail(TerminalKind::BudgetExhausted);
            break;
        }

        PolicyStep ps;
        try {
            ps = policy.step(st.history);
        } catch (const MalformedActionError& e) {
            const std::string obs = std::string("ERROR: malformed action: ") + e.what();
            st.history = st.history.append({BlockKind::Observation, obs, st.step_index});
            ++st.step_index;
            if (rejection_cap_hit()) break;
            continue;
        }

        st.history = st.history.append({BlockKind::Reasoning, ps.reasoning, st.step_index});
        st.history = st.history.append(
            {BlockKind::Action, render_action_block(ps.action), st.step_index});

        if (ps.action.is_answer()) {
            record_step(ps, "", 0, Verdict::NotConsulted);
            st.trajectory.terminal = Terminal::answered(ps.action.as_answer().text);
            break;
        }

        const auto& call = ps.action.as_call();
        const ToolSpec* tool = st.market.find(call.tool_id);
        if (tool == nullptr) {
            if (!config.validate_tool_ids)
                throw StructuralError("policy proposed unknown tool '" + call.tool_id + "'");
            const std::string obs =
                "ERROR: tool '" + call.tool_id + "' is not in the current market.";
            st.history = st.history.append({BlockKind::Observation, obs, st.step_index});
            record_step(ps, obs, 0, Verdict::NotConsulted);
            ++st.step_index;
            if (rejection_cap_hit()) break;
            continue;
        }

        if (st.real_steps >= config.max_real_steps) {
            fail(TerminalKind::StepCapReached);
            break;
        }

        OracleDecision decision{true, "", {}};
        Verdict verdict = Verdict::NotConsulted;
        if (oracle != nullptr) {
            decision = oracle->consult(st.history, ps.reasoning, ps.action, st.remaining);
            verdict = decision.accept ? Verdict::Accepted : Verdict::Rejected;
            if (!decision.newly_blacklisted.empty()) {
                std::set<std::string> pruned(decision.newly_blacklisted.begin(),
                                             decision.newly_blacklisted.end());
                st.market = st.market.without(pruned);
                st.history = st.history.append(
                    {BlockKind::Market, render_market_block(st.market, disclose), st.step_index});
            }
        }

        if (decision.accept) {
            std::string obs;
            try {
                obs = env.execute(*tool, call.arguments, env_rng);
            } catch (const std::exception& e) {
                // the call happened: cost is charged regardless
                obs = std::string("ERROR: tool execution failed: ") + e.what();
            }
            st.remaining -= tool->per_call_cost;
            st.trajectory.total_cost += tool->per_call_cost;
            ++st.real_steps;
            st.consecutive_rejections = 0;
            if (disclose) {
                obs += "\nTotal Spent: " + rat_decimal(st.trajectory.total_cost, 2) +
                       ". Remaining Budget: " + rat_decimal(st.remaining, 2) + ".";
            }
            st.history = st.history.append({BlockKind::Observation, obs, st.step_index});
            record_step(ps, obs, tool->per_call_cost, verdict);
            ++st.step_index;
        } else {
            st.history =
                st.history.append({BlockKind::OracleFeedback, decision.feedback, st.step_index});
            record_step(ps, decision.feedback, 0, Verdict::Rejected);
            ++st.step_index;
            if (rejection_cap_hit()) break;
        }
    }

    return st.trajectory;
}

}  // namespace

Trajectory run_task(const TaskInstance& task, PolicyInterface& policy, EnvironmentInterface& env,
                    OracleInterface& oracle, const EngineConfig& config) {
    return run_loop(task, policy, env, &oracle, config, SoftMode::Prompt);
}

Trajectory run_soft(const TaskInstance& task, PolicyInterface& policy, EnvironmentInterface& env,
                    const EngineConfig& config, SoftMode mode) {
    return run_loop(task, policy, env, nullptr, config, mode);
}

}  // namespace toolbudget
