#pragma once
// Oracle-guided agent loop.
//
// One run is strictly sequential; concurrent runs share nothing. RNG streams
// are derived from the task seed by label ("policy" / "env" / "oracle"), so a
// replay with identical seeds and deterministic interfaces yields a
// bit-identical trajectory log.

#include "toolbudget/core.hpp"
#include "toolbudget/rng.hpp"

#include <cstdint>
#include <string>

namespace toolbudget {

// Accounting for per-request token usage reported by interface
// implementations. Requests made inside oracle lookahead simulations are
// counted separately from real agent/environment traffic.
struct UsageMeter {
    std::uint64_t real_tokens = 0;
    std::uint64_t simulated_tokens = 0;
    std::uint64_t real_requests = 0;
    std::uint64_t simulated_requests = 0;
    bool simulating = false;

    void record(std::uint64_t tokens) {
        if (simulating) {
            simulated_tokens += tokens;
            ++simulated_requests;
        } else {
            real_tokens += tokens;
            ++real_requests;
        }
    }
    std::uint64_t total_tokens() const { return real_tokens + simulated_tokens; }
};

class SimulationScope {
public:
    explicit SimulationScope(UsageMeter* m) : meter_(m), prev_(m ? m->simulating : false) {
        if (meter_) meter_->simulating = true;
    }
    ~SimulationScope() {
        if (meter_) meter_->simulating = prev_;
    }
    SimulationScope(const SimulationScope&) = delete;
    SimulationScope& operator=(const SimulationScope&) = delete;

private:
    UsageMeter* meter_;
    bool prev_;
};

inline std::uint64_t approx_tokens(const std::string& text) { return (text.size() + 3) / 4; }

// Thrown by policies whose raw output cannot be parsed into an Action.
struct MalformedActionError : std::runtime_error {
    explicit MalformedActionError(const std::string& what) : std::runtime_error(what) {}
};

struct PolicyStep {
    std::string reasoning;
    Action action = Action::answer("?");
};

class PolicyInterface {
public:
    virtual ~PolicyInterface() = default;
    // May throw MalformedActionError; deterministic under a fixed seed when
    // the implementation is seeded.
    virtual PolicyStep step(const History& history) = 0;

    void attach_meter(UsageMeter* meter) { meter_ = meter; }

protected:
    void record_usage(std::uint64_t tokens) {
        if (meter_) meter_->record(tokens);
    }
    UsageMeter* meter_ = nullptr;
};

class EnvironmentInterface {
public:
    virtual ~EnvironmentInterface() = default;
    // Never mutates engine state; cost charging is the engine's job.
    virtual std::string execute(const ToolSpec& tool, const std::string& arguments,
                                RngStream& rng) = 0;
};

struct OracleDecision {
    bool accept = false;
    std::string feedback;  // non-empty iff rejected
    // Tools pruned from the task market during this consultation; the engine
    // re-renders the market block so the policy stops seeing them.
    std::vector<std::string> newly_blacklisted;
};

class OracleInterface {
public:
    virtual ~OracleInterface() = default;
    virtual OracleDecision consult(const History& history, const std::string& reasoning,
                                   const Action& action, const Money& remaining_budget) = 0;
};

struct EngineConfig {
    int max_real_steps = 16;
    int max_rejections_per_step = 3;
    bool validate_tool_ids = true;
};

enum class SoftMode { Raw, Prompt };

// Algorithm: query the policy for (reasoning, action); Answer terminates;
// tool calls are gated by the oracle. Accepted calls execute in the
// environment and charge their cost; rejected calls append the oracle
// feedback as a free observation. A consecutive-rejection cap and a real-step
// cap guarantee termination against adversarial policies.
Trajectory run_task(const TaskInstance& task, PolicyInterface& policy, EnvironmentInterface& env,
                    OracleInterface& oracle, const EngineConfig& config);

// Same loop with no oracle (verdict NotConsulted, budget never enforced).
// Raw hides costs and the budget; Prompt discloses costs and appends
// "Total Spent / Remaining Budget" lines to every observation.
Trajectory run_soft(const TaskInstance& task, PolicyInterface& policy, EnvironmentInterface& env,
                    const EngineConfig& config, SoftMode mode);

}  // namespace toolbudget
