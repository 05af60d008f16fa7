#pragma once
// Synthetic tool market with known ground truth.
//
// Every tool carries an exact success probability and a set of fact ids; the
// judge scores an answer by required-fact coverage, so task outcomes are
// checkable without any model in the loop. Ground truth (probabilities, fact
// map) is serialized to a side file, never into the agent-visible task.
//
// Fact envelope convention: success payloads embed "[fact:ID]" tokens and
// start with "OK"; failure payloads start with "ERROR".

#include "toolbudget/core.hpp"
#include "toolbudget/engine.hpp"
#include "toolbudget/oracle.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace toolbudget {

struct SyntheticTool {
    ToolSpec spec;
    Rat success_prob;  // in (0, 1]
    std::string success_payload_template;  // may reference {tool} and {facts}
    std::string failure_payload_template;
    std::set<std::string> provides_facts;
};

struct SyntheticTask {
    TaskInstance task;
    std::vector<SyntheticTool> tools;
    std::set<std::string> required_facts;
    std::set<std::string> reference_tools;  // cheapest provider per fact at generation time
    std::optional<bool> ground_truth_solvable;

    const SyntheticTool* find_tool(const std::string& tool_id) const;
    // Rebuilds the agent-visible market from the ground-truth tool list.
    void sync_market();
};

struct MarketGenConfig {
    int n_tools = 20;
    int n_facts = 3;
    Rat cost_low = 5;
    Rat cost_high = 50;
    Rat budget = 50;
    Rat prob_low = Rat(1, 4);
    Rat prob_high = 1;
    std::uint64_t seed = 0;

    void check() const;
};

// Deterministic under seed. Costs are drawn uniformly on the 2-decimal grid
// of [cost_low, cost_high], success probabilities on the 3-decimal grid of
// [prob_low, prob_high]. Every fact is covered by at least one tool; when
// n_tools > n_facts, at least one fact has two providers at different prices.
SyntheticTask gen_market(const MarketGenConfig& config);

enum class PriceSelector { ReferenceTools, All };

SyntheticTask perturb_prices(const SyntheticTask& task, const Rat& factor, PriceSelector selector);
SyntheticTask scale_budget(const SyntheticTask& task, const Rat& ratio);

// Bernoulli draw from the run's env stream: success payload (with fact
// tokens) with probability success_prob, failure payload otherwise.
std::string synthetic_env_execute(const SyntheticTool& tool, const std::string& arguments,
                                  RngStream& rng);

std::string render_success_payload(const SyntheticTool& tool);
std::string render_failure_payload(const SyntheticTool& tool);
bool is_failure_payload(const std::string& observation);

// All "[fact:ID]" tokens present in the text.
std::set<std::string> extract_facts(const std::string& text);

// Coverage score: |facts in answer ∩ required| / |required|.
Rat synthetic_judge(const SyntheticTask& task, const std::string& answer_text);

struct SolvabilityResult {
    bool solvable = false;
    // Minimum over fact-covering subsets of sum(cost/p); absent when no
    // subset covers the required facts.
    std::optional<Rat> min_expected_cost;
};

// Exact subset enumeration; enforced bounds: <= 12 tools, <= 6 facts.
SolvabilityResult brute_force_solvable(const SyntheticTask& task);

// --- Scripted agents ---------------------------------------------------------

enum class Persistence { RetryUntilSuccess };

// Deterministic plan-following policy: emits plan steps in order, repeats a
// step while the last observation was a failure (or a rejection), and answers
// with every collected fact once the plan is exhausted. All state is derived
// from the history, so the same instance can serve real and simulated runs.
std::unique_ptr<PolicyInterface> scripted_retry_policy(std::vector<ToolCall> plan,
                                                       Persistence persistence);

// Fixed proposal sequence: the k-th policy query (counted by Action blocks in
// the history) returns the k-th entry; once exhausted, answers with
// final_answer plus any facts collected so far. Used for adversarial and
// hand-traced fixtures.
class ScriptPolicy : public PolicyInterface {
public:
    ScriptPolicy(std::vector<PolicyStep> script, std::string final_answer);
    PolicyStep step(const History& history) override;

private:
    std::vector<PolicyStep> script_;
    std::string final_answer_;
};

// Cheapest provider per required fact, ordered by cost.
std::vector<ToolCall> greedy_plan(const SyntheticTask& task);

// Seeded random covering plan; may pick expensive providers and extra calls.
std::vector<ToolCall> random_plan(const SyntheticTask& task, RngStream& rng);

// --- Interface implementations backed by the ground-truth table ---------------

class SyntheticEnvironment : public EnvironmentInterface {
public:
    explicit SyntheticEnvironment(const SyntheticTask& task);
    std::string execute(const ToolSpec& tool, const std::string& arguments,
                        RngStream& rng) override;

private:
    std::map<std::string, SyntheticTool> table_;
};

// Ground-truth intention predictor: returns the exact per-tool success
// probability, with optional per-argument overrides (argument-class buckets).
class TablePredictor : public IntentionPredictorInterface {
public:
    explicit TablePredictor(const SyntheticTask& task);
    Rat predict(const std::string& reasoning, const ToolSpec& tool,
                const std::string& arguments) override;

    void set_override(const std::string& tool_id, const std::string& arguments, Rat rho);

private:
    std::map<std::string, Rat> probs_;
    std::map<std::pair<std::string, std::string>, Rat> overrides_;
};

class SyntheticGenerator : public ConditionalGeneratorInterface {
public:
    explicit SyntheticGenerator(const SyntheticTask& task);
    std::string generate(const ToolSpec& tool, const std::string& arguments, bool satisfied,
                         RngStream& rng) override;

private:
    std::map<std::string, SyntheticTool> table_;
};

class SyntheticWorldModel : public WorldModelInterface {
public:
    explicit SyntheticWorldModel(const SyntheticTask& task);
    std::string simulate(const ToolSpec& tool, const std::string& arguments,
                         RngStream& rng) override;

private:
    std::map<std::string, SyntheticTool> table_;
};

// --- Serialization -------------------------------------------------------------

// Agent-visible part uses the core task schema; ground truth goes to a
// separate document so inputs never leak probabilities.
nlohmann::json truth_to_json(const SyntheticTask& task);
SyntheticTask synthetic_task_from_json(const nlohmann::json& task_doc,
                                       const nlohmann::json& truth_doc);

nlohmann::json market_config_to_json(const MarketGenConfig& config);
MarketGenConfig market_config_from_json(const nlohmann::json& j);

}  // namespace toolbudget
