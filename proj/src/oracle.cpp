#include "toolbudget/oracle.hpp"

#include <algorithm>

namespace toolbudget {

using nlohmann::json;

void WorldModelInterface::set_diversity(double d) {
    diversity_ = std::clamp(d, 0.0, 2.0);
}

void IntentConfig::check() const {
    if (gamma <= 0) throw ConfigError("gamma must be positive");
    if (delta < 0 || delta >= 1) throw ConfigError("delta must lie in [0, 1)");
    if (rho_min <= 0 || rho_min > 1) throw ConfigError("rho_min must lie in (0, 1]");
    if (rollout_horizon < 1) throw ConfigError("rollout_horizon must be >= 1");
}

Rat geometric_cost(const Rat& per_call_cost, const Rat& rho, const Rat& rho_min) {
    if (per_call_cost < 0) throw DomainError("negative per_call_cost");
    Rat clamped = rho;
    if (clamped > 1) clamped = 1;
    if (clamped < rho_min) clamped = rho_min;
    return per_call_cost / clamped;
}

bool actions_match(const Action& a, const Action& b, ActionMatch mode) {
    if (!a.is_call() || !b.is_call()) return false;
    if (a.as_call().tool_id != b.as_call().tool_id) return false;
    return mode == ActionMatch::ToolNameOnly || a.as_call().arguments == b.as_call().arguments;
}

namespace {

std::string trace_wrap(const json& payload) {
    return std::string(kTraceBegin) + payload.dump() + kTraceEnd;
}

std::string reject_feedback_intent(const std::vector<SimulatedStep>& steps,
                                   const MarketSnapshot& market, const Rat& risk_adjusted,
                                   const Money& remaining, bool overflow) {
    json trace = json::array();
    for (const auto& s : steps) {
        const auto& call = s.action.as_call();
        const ToolSpec* tool = market.find(call.tool_id);
        // calibrated_cost * rho recovers the exact price even for pruned tools
        const Rat price = tool ? tool->per_call_cost : Rat(s.calibrated_cost * s.rho);
        trace.push_back({{"action", tool ? tool->name : call.tool_id},
                         {"price", rat_decimal(price, 2)},
                         {"p_success", rat_decimal(s.rho, 3)},
                         {"expected_cost", rat_decimal(s.calibrated_cost, 2)}});
    }
    json payload = {{"overflow", overflow},
                    {"risk_adjusted_total", rat_decimal(risk_adjusted, 2)},
                    {"remaining_budget", rat_decimal(remaining, 2)},
                    {"trace", trace}};
    std::string text =
        "Budget check failed. Your current plan is predicted to exceed the remaining budget. "
        "Pay attention to the predicted success probability; some tools may have a "
        "significantly lower chance than you expected, try to avoid them in the next "
        "iteration.";
    if (overflow)
        text =
            "Budget check failed. The lookahead simulation of your current plan did not reach an "
            "answer within the horizon, so the plan cannot be certified feasible.";
    text += " Remaining budget: " + rat_decimal(remaining, 2) + ".\n";
    text += "Predicted Tool Trace: " + trace_wrap(payload) + "\n";
    text += "Please revise your plan (fewer calls / different tools / answer directly).";
    return text;
}

std::string reject_feedback_mco(const std::vector<std::pair<std::string, Money>>& calls,
                                const Money& projected_total, const Money& remaining,
                                bool overflow) {
    json trace = json::array();
    for (const auto& [name, price] : calls)
        trace.push_back({{"action", name}, {"price", rat_decimal(price, 2)}});
    json payload = {{"overflow", overflow},
                    {"projected_total", rat_decimal(projected_total, 2)},
                    {"remaining_budget", rat_decimal(remaining, 2)},
                    {"trace", trace}};
    std::string text = overflow
                           ? "Budget check failed. The lookahead rollout did not reach an answer "
                             "within the horizon, so the plan cannot be certified feasible."
                           : "Budget check failed. A lookahead rollout of your current plan "
                             "exceeds the remaining budget.";
    text += " Remaining budget: " + rat_decimal(remaining, 2) + ".\n";
    text += "Predicted Tool Trace: " + trace_wrap(payload) + "\n";
    text += "Please revise your plan (fewer calls / different tools / answer directly).";
    return text;
}

std::string blacklist_feedback(const std::string& tool_id) {
    return "Tool rejected. '" + tool_id +
           "' has been removed from the market for this task (predicted success probability "
           "below the blacklist threshold). Choose a different tool or answer directly.";
}

// Drops cached plan entries that reference blacklisted tools so a stale cache
// can never approve a pruned tool.
void scrub_caches(OracleState& state) {
    if (state.blacklist.empty()) return;
    auto blacklisted = [&](const Action& a) {
        return a.is_call() && state.blacklist.count(a.as_call().tool_id) > 0;
    };
    while (!state.rollout_cache.empty() && blacklisted(state.rollout_cache.front()))
        state.rollout_cache.pop_front();
    if (state.last_rejected && blacklisted(*state.last_rejected)) state.last_rejected.reset();
}

}  // namespace

json parse_feedback_trace(const std::string& feedback) {
    const auto begin = feedback.find(kTraceBegin);
    if (begin == std::string::npos) throw StructuralError("feedback has no trace sentinel");
    const auto start = begin + std::string(kTraceBegin).size();
    const auto end = feedback.find(kTraceEnd, start);
    if (end == std::string::npos) throw StructuralError("feedback trace is unterminated");
    return json::parse(feedback.substr(start, end - start));
}

OracleDecision mco_consult(const History& history, const std::string& reasoning,
                           const Action& action, const Money& remaining_budget,
                           const MarketSnapshot& market, PolicyInterface& policy,
                           WorldModelInterface& world_model, RngStream& rng,
                           const IntentConfig& config, OracleState* state) {
    config.check();
    if (!action.is_call()) throw DomainError("oracle consulted for a non-tool action");
    if (state) ++state->mco_rollouts;

    int next_step = history.blocks().empty() ? 1 : history.back().step_index + 1;
    History sim = history.append({BlockKind::Reasoning, reasoning, next_step})
                      .append({BlockKind::Action, render_action_block(action), next_step});

    std::vector<std::pair<std::string, Money>> calls;
    Money projected = 0;
    bool reached_answer = false;

    Action current = action;
    for (int k = 0; k < config.rollout_horizon; ++k) {
        const ToolSpec* tool = market.find(current.as_call().tool_id);
        if (!tool) break;  // dead end: treat like horizon overflow
        calls.emplace_back(tool->name, tool->per_call_cost);
        projected += tool->per_call_cost;

        std::string obs;
        try {
            obs = world_model.simulate(*tool, current.as_call().arguments, rng);
        } catch (const std::exception&) {
            break;  // world model failure mid-rollout: pessimistic
        }
        sim = sim.append({BlockKind::Observation, obs, next_step});
        ++next_step;

        PolicyStep ps;
        try {
            ps = policy.step(sim);
        } catch (const std::exception&) {
            break;
        }
        if (ps.action.is_answer()) {
            reached_answer = true;
            break;
        }
        sim = sim.append({BlockKind::Reasoning, ps.reasoning, next_step})
                  .append({BlockKind::Action, render_action_block(ps.action), next_step});
        current = ps.action;
    }

    if (reached_answer && projected <= remaining_budget) return {true, "", {}};
    return {false, reject_feedback_mco(calls, projected, remaining_budget, !reached_answer), {}};
}

RolloutResult ideal_rollout(const History& history, const std::string& reasoning,
                            const Action& action, PolicyInterface& policy,
                            IntentionPredictorInterface& predictor,
                            ConditionalGeneratorInterface& generator, RngStream& rng,
                            OracleState& state, const IntentConfig& config) {
    config.check();
    if (!action.is_call()) throw DomainError("ideal_rollout needs a tool call");
    ++state.ideal_rollouts;

    RolloutResult result;
    int next_step = history.blocks().empty() ? 1 : history.back().step_index + 1;
    History sim = history;

    std::string current_reasoning = reasoning;
    Action current = action;
    while (true) {
        const ToolSpec* tool = state.pruned_market.find(current.as_call().tool_id);
        if (!tool) {
            // proposed or simulated call into a pruned/unknown tool: the plan
            // cannot be certified
            result.reached_answer = false;
            return result;
        }

        SimulatedStep step;
        step.reasoning = current_reasoning;
        step.action = current;
        Rat rho = predictor.predict(current_reasoning, *tool, current.as_call().arguments);
        if (rho > 1) rho = 1;
        if (rho < config.rho_min) rho = config.rho_min;
        step.rho = rho;

        if (config.enable_blacklist && rho < config.delta) {
            state.blacklist.insert(tool->tool_id);
            state.pruned_market = state.pruned_market.without(state.blacklist);
        }

        step.calibrated_cost = geometric_cost(tool->per_call_cost, rho, config.rho_min);
        step.observation = generator.generate(*tool, current.as_call().arguments, true, rng);

        sim = sim.append({BlockKind::Reasoning, step.reasoning, next_step})
                  .append({BlockKind::Action, render_action_block(step.action), next_step})
                  .append({BlockKind::Observation, step.observation, next_step});
        ++next_step;
        result.steps.push_back(std::move(step));

        if (static_cast<int>(result.steps.size()) >= config.rollout_horizon) {
            result.reached_answer = false;  // horizon overflow
            return result;
        }

        // The simulated agent plans against the pruned market.
        History agent_view = sim.append(
            {BlockKind::Market, render_market_block(state.pruned_market, true), next_step});
        PolicyStep ps;
        try {
            ps = policy.step(agent_view);
        } catch (const std::exception&) {
            result.reached_answer = false;
            return result;
        }
        if (ps.action.is_answer()) {
            result.reached_answer = true;
            return result;
        }
        current_reasoning = ps.reasoning;
        current = ps.action;
    }
}

OracleDecision intent_consult(const History& history, const std::string& reasoning,
                              const Action& action, const Money& remaining_budget,
                              PolicyInterface& policy, IntentionPredictorInterface& predictor,
                              ConditionalGeneratorInterface& generator, RngStream& rng,
                              OracleState& state, const IntentConfig& config) {
    config.check();
    if (!action.is_call()) throw DomainError("oracle consulted for a non-tool action");
    const std::string& tool_id = action.as_call().tool_id;
    const ToolSpec* tool = state.pruned_market.find(tool_id);
    const Money cost = tool ? tool->per_call_cost : Money(0);

    // Blacklisted tools are never accepted, through any path.
    if (config.enable_blacklist && state.blacklist.count(tool_id))
        return {false, blacklist_feedback(tool_id), {}};

    // Last-call cache: an immediate identical re-proposal is strong evidence
    // the agent considers the action necessary.
    if (config.enable_last_call_cache && state.last_rejected &&
        actions_match(action, *state.last_rejected, config.action_match) && tool &&
        cost <= remaining_budget) {
        state.last_rejected.reset();
        ++state.cache_hits;
        return {true, "", {}};
    }

    // Rollout cache: plan continuity lets us skip the simulation. An
    // unaffordable or mismatched head is a miss and clears the cache.
    if (config.enable_rollout_cache && !state.rollout_cache.empty()) {
        if (actions_match(action, state.rollout_cache.front(), config.action_match) && tool &&
            cost <= remaining_budget) {
            state.rollout_cache.pop_front();
            ++state.cache_hits;
            return {true, "", {}};
        }
        state.rollout_cache.clear();
    }

    const auto blacklist_before = state.blacklist;
    const MarketSnapshot market_before = state.pruned_market;  // for feedback rendering
    RolloutResult rollout =
        ideal_rollout(history, reasoning, action, policy, predictor, generator, rng, state, config);
    scrub_caches(state);

    std::vector<std::string> newly_blacklisted;
    for (const auto& id : state.blacklist)
        if (!blacklist_before.count(id)) newly_blacklisted.push_back(id);

    Rat sigma = 0;
    for (const auto& s : rollout.steps) sigma += s.calibrated_cost;
    const Rat risk_adjusted = config.gamma * sigma;

    const bool proposal_blacklisted = state.blacklist.count(tool_id) > 0;
    const bool accept = tool != nullptr && !proposal_blacklisted && rollout.reached_answer &&
                        cost <= remaining_budget && risk_adjusted <= remaining_budget;

    if (accept) {
        if (config.enable_rollout_cache) {
            state.rollout_cache.clear();
            for (std::size_t i = 1; i < rollout.steps.size(); ++i)
                state.rollout_cache.push_back(rollout.steps[i].action);
        }
        state.last_rejected.reset();
        return {true, "", std::move(newly_blacklisted)};
    }

    state.last_rejected = action;
    return {false,
            reject_feedback_intent(rollout.steps, market_before, risk_adjusted, remaining_budget,
                                   !rollout.reached_answer),
            std::move(newly_blacklisted)};
}

McoOracle::McoOracle(const TaskInstance& task, PolicyInterface& policy,
                     WorldModelInterface& world_model, IntentConfig config)
    : policy_(policy),
      world_model_(world_model),
      config_(std::move(config)),
      state_(OracleState::for_task(task)),
      rng_(task.seed, "oracle") {
    config_.check();
}

OracleDecision McoOracle::consult(const History& history, const std::string& reasoning,
                                  const Action& action, const Money& remaining_budget) {
    SimulationScope scope(meter_);
    return mco_consult(history, reasoning, action, remaining_budget, state_.pruned_market, policy_,
                       world_model_, rng_, config_, &state_);
}

IntentOracle::IntentOracle(const TaskInstance& task, PolicyInterface& policy,
                           IntentionPredictorInterface& predictor,
                           ConditionalGeneratorInterface& generator, IntentConfig config)
    : policy_(policy),
      predictor_(predictor),
      generator_(generator),
      config_(std::move(config)),
      state_(OracleState::for_task(task)),
      rng_(task.seed, "oracle") {
    config_.check();
}

OracleDecision IntentOracle::consult(const History& history, const std::string& reasoning,
                                     const Action& action, const Money& remaining_budget) {
    SimulationScope scope(meter_);
    return intent_consult(history, reasoning, action, remaining_budget, policy_, predictor_,
                          generator_, rng_, state_, config_);
}

}  // namespace toolbudget
