#pragma once
// Inference-time budget oracles.
//
// Two implementations gate every proposed tool call before real execution:
//
//   * McoOracle — a single lookahead rollout through a (possibly stochastic)
//     world model; accept iff the projected total fits the remaining budget
//     and the rollout reaches an Answer.
//   * IntentOracle — deterministic ideal-trajectory simulation: every
//     simulated call is generated as satisfying its intention, each step is
//     priced cost / rho under a geometric retry model, and the proposal is
//     accepted iff gamma * sum stays within the remaining budget. Ships with
//     a rollout cache, a last-call cache, and a low-probability blacklist.
//
// Both oracles are pure simulation: they never charge credits and never
// touch the real environment.

#include "toolbudget/core.hpp"
#include "toolbudget/engine.hpp"
#include "toolbudget/rng.hpp"

#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace toolbudget {

class WorldModelInterface {
public:
    virtual ~WorldModelInterface() = default;
    virtual std::string simulate(const ToolSpec& tool, const std::string& arguments,
                                 RngStream& rng) = 0;

    // Abstract sampling-diversity knob in [0, 2]; 0 means deterministic.
    double diversity() const { return diversity_; }
    void set_diversity(double d);

    void attach_meter(UsageMeter* meter) { meter_ = meter; }

protected:
    void record_usage(std::uint64_t tokens) {
        if (meter_) meter_->record(tokens);
    }
    double diversity_ = 1.0;
    UsageMeter* meter_ = nullptr;
};

class IntentionPredictorInterface {
public:
    virtual ~IntentionPredictorInterface() = default;
    // Probability that one attempt of this call satisfies the intention
    // expressed in the reasoning. Values are clamped into [rho_min, 1] by the
    // oracle before use.
    virtual Rat predict(const std::string& reasoning, const ToolSpec& tool,
                        const std::string& arguments) = 0;
};

class ConditionalGeneratorInterface {
public:
    virtual ~ConditionalGeneratorInterface() = default;
    // Observation text consistent with satisfaction status z.
    virtual std::string generate(const ToolSpec& tool, const std::string& arguments, bool satisfied,
                                 RngStream& rng) = 0;

    void attach_meter(UsageMeter* meter) { meter_ = meter; }

protected:
    void record_usage(std::uint64_t tokens) {
        if (meter_) meter_->record(tokens);
    }
    UsageMeter* meter_ = nullptr;
};

enum class ActionMatch { ToolNameOnly, ToolNameAndArgs };

struct IntentConfig {
    Rat gamma = Rat(1, 2);      // risk preference
    Rat delta = Rat(1, 10);     // blacklist threshold
    Rat rho_min = Rat(1, 1000);
    int rollout_horizon = 10;   // max simulated tool calls per rollout
    bool enable_rollout_cache = true;
    bool enable_last_call_cache = true;
    bool enable_blacklist = true;
    ActionMatch action_match = ActionMatch::ToolNameOnly;

    void check() const;
};

struct OracleState {
    std::deque<Action> rollout_cache;      // predicted future actions of the accepted plan
    std::optional<Action> last_rejected;
    std::set<std::string> blacklist;
    MarketSnapshot pruned_market;

    // diagnostics
    std::uint64_t ideal_rollouts = 0;
    std::uint64_t mco_rollouts = 0;
    std::uint64_t cache_hits = 0;

    static OracleState for_task(const TaskInstance& task) {
        OracleState s;
        s.pruned_market = task.market;
        return s;
    }
};

struct SimulatedStep {
    std::string reasoning;
    Action action = Action::answer("?");
    std::string observation;
    Rat rho;              // clamped to [rho_min, 1]
    Rat calibrated_cost;  // per_call_cost / rho, exact
};

struct RolloutResult {
    std::vector<SimulatedStep> steps;  // tool calls only, proposal first
    bool reached_answer = false;       // false flags horizon overflow / dead ends
};

// Expected spend until first success under a geometric retry model.
Rat geometric_cost(const Rat& per_call_cost, const Rat& rho, const Rat& rho_min);

bool actions_match(const Action& a, const Action& b, ActionMatch mode);

// Single stochastic lookahead rollout (world model + policy) from the
// proposed action. Accept iff the summed per-call costs of every simulated
// tool call fit the remaining budget and the rollout terminates in Answer.
OracleDecision mco_consult(const History& history, const std::string& reasoning,
                           const Action& action, const Money& remaining_budget,
                           const MarketSnapshot& market, PolicyInterface& policy,
                           WorldModelInterface& world_model, RngStream& rng,
                           const IntentConfig& config, OracleState* state = nullptr);

// Deterministic simulation of the ideal trajectory: every simulated call is
// generated with z = 1, priced by geometric_cost, and tools whose rho falls
// below delta are blacklisted out of the pruned market as a side effect.
RolloutResult ideal_rollout(const History& history, const std::string& reasoning,
                            const Action& action, PolicyInterface& policy,
                            IntentionPredictorInterface& predictor,
                            ConditionalGeneratorInterface& generator, RngStream& rng,
                            OracleState& state, const IntentConfig& config);

// Full INTENT decision: blacklist gate, last-call cache, rollout cache, then
// ideal rollout with the risk-adjusted acceptance rule
// cost(a) <= B  and  gamma * sum(calibrated costs) <= B.
OracleDecision intent_consult(const History& history, const std::string& reasoning,
                              const Action& action, const Money& remaining_budget,
                              PolicyInterface& policy, IntentionPredictorInterface& predictor,
                              ConditionalGeneratorInterface& generator, RngStream& rng,
                              OracleState& state, const IntentConfig& config);

// Sentinel markers wrapping the machine-readable JSON payload inside
// rejection feedback.
inline constexpr const char* kTraceBegin = "<<<TRACE";
inline constexpr const char* kTraceEnd = "TRACE>>>";

// Extracts the JSON payload between the trace sentinels; throws
// StructuralError when the sentinels are missing.
nlohmann::json parse_feedback_trace(const std::string& feedback);

// --- Engine adapters ---------------------------------------------------------

class McoOracle : public OracleInterface {
public:
    McoOracle(const TaskInstance& task, PolicyInterface& policy, WorldModelInterface& world_model,
              IntentConfig config);

    OracleDecision consult(const History& history, const std::string& reasoning,
                           const Action& action, const Money& remaining_budget) override;

    const OracleState& state() const { return state_; }

private:
    PolicyInterface& policy_;
    WorldModelInterface& world_model_;
    IntentConfig config_;
    OracleState state_;
    RngStream rng_;
    UsageMeter* meter_ = nullptr;

public:
    void attach_meter(UsageMeter* meter) { meter_ = meter; }
};

class IntentOracle : public OracleInterface {
public:
    IntentOracle(const TaskInstance& task, PolicyInterface& policy,
                 IntentionPredictorInterface& predictor, ConditionalGeneratorInterface& generator,
                 IntentConfig config);

    OracleDecision consult(const History& history, const std::string& reasoning,
                           const Action& action, const Money& remaining_budget) override;

    const OracleState& state() const { return state_; }

private:
    PolicyInterface& policy_;
    IntentionPredictorInterface& predictor_;
    ConditionalGeneratorInterface& generator_;
    IntentConfig config_;
    OracleState state_;
    RngStream rng_;
    UsageMeter* meter_ = nullptr;

public:
    void attach_meter(UsageMeter* meter) { meter_ = meter; }
};

}  // namespace toolbudget
