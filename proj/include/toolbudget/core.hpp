#pragma once
// Domain types shared by every other module: contexts, markets, tasks,
// actions, trajectories, and the budget ledger.
//
// All types are immutable values after construction; mutation happens only
// by constructing new values (History::append returns a new history), so
// they are safe to share across concurrently running tasks.

#include "toolbudget/errors.hpp"
#include "toolbudget/rational.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace toolbudget {

enum class BlockKind {
    System,
    Query,
    Budget,
    Market,
    Reasoning,
    Action,
    Observation,
    OracleFeedback,
};

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

// One entry of the growing textual context. Payloads are opaque text; only
// Observation blocks may be empty (a tool may legitimately return nothing).
struct ContextBlock {
    BlockKind kind;
    std::string payload;
    int step_index = 0;

    ContextBlock(BlockKind k, std::string text, int step);
};

// Append-only sequence of context blocks. The first four blocks are always
// [System, Query, Budget, Market]; appends with a decreasing step index are
// rejected with a StructuralError.
class History {
public:
    static History initial(std::string system, std::string query, std::string budget,
                           std::string market);

    History append(ContextBlock block) const;

    const std::vector<ContextBlock>& blocks() const { return blocks_; }
    std::size_t size() const { return blocks_.size(); }
    const ContextBlock& back() const { return blocks_.back(); }

    // Last block of the given kind, if any.
    const ContextBlock* last_of(BlockKind kind) const;

private:
    History() = default;
    std::vector<ContextBlock> blocks_;
};

struct ToolSpec {
    std::string tool_id;
    std::string name;
    std::string description;
    std::string input_schema;  // serialized argument schema
    Money per_call_cost;       // >= 0
};

struct MarketSnapshot {
    std::vector<ToolSpec> tools;

    const ToolSpec* find(const std::string& tool_id) const;
    MarketSnapshot without(const std::set<std::string>& excluded) const;
    Money min_cost() const;  // throws DomainError on an empty market
};

struct TaskInstance {
    std::string task_id;
    std::string query;
    Money budget;  // > 0
    MarketSnapshot market;
    std::uint64_t seed = 0;
};

struct ToolCall {
    std::string tool_id;
    std::string arguments;
};

struct Answer {
    std::string text;
};

// Either a tool call or a terminal answer.
struct Action {
    std::variant<ToolCall, Answer> value;

    static Action call(std::string tool_id, std::string arguments);
    static Action answer(std::string text);

    bool is_call() const { return std::holds_alternative<ToolCall>(value); }
    bool is_answer() const { return std::holds_alternative<Answer>(value); }
    const ToolCall& as_call() const { return std::get<ToolCall>(value); }
    const Answer& as_answer() const { return std::get<Answer>(value); }

    bool operator==(const Action& other) const;
};

enum class Verdict { Accepted, Rejected, NotConsulted };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct StepRecord {
    std::string reasoning;
    Action action;
    std::string observation;
    Money cost_charged;  // tool per-call cost when executed, 0 otherwise
    Verdict oracle_verdict = Verdict::NotConsulted;
    Money budget_after;
};

enum class TerminalKind { Answered, BudgetExhausted, StepCapReached };

std::string to_string(TerminalKind t);
TerminalKind terminal_from_string(const std::string& s);

struct Terminal {
    TerminalKind kind = TerminalKind::StepCapReached;
    std::string answer_text;  // set iff kind == Answered

    static Terminal answered(std::string text) { return {TerminalKind::Answered, std::move(text)}; }
    static Terminal budget_exhausted() { return {TerminalKind::BudgetExhausted, {}}; }
    static Terminal step_cap() { return {TerminalKind::StepCapReached, {}}; }
};

struct Trajectory {
    TaskInstance task;
    std::vector<StepRecord> steps;
    Terminal terminal;
    Money total_cost;
    std::optional<Rat> judge_score;  // in [0, 1]
    std::optional<Rat> reward;       // judge_score * I(total_cost <= budget)

    bool feasible() const { return total_cost <= task.budget; }
};

// --- Operations ------------------------------------------------------------

History append_block(const History& history, ContextBlock block);

// Stores judge_score and the budget-gated reward on the trajectory and
// returns the reward. Scores outside [0, 1] raise DomainError.
Rat compute_reward(Trajectory& trajectory, const Rat& judge_score);

// Re-checks the core invariants on a finished trajectory (budget ledger,
// cost rules per verdict, reward zeroing, step ordering). Returns one
// message per violated invariant; empty means the log is consistent.
std::vector<std::string> validate_trajectory(const Trajectory& trajectory);

// --- Canonical text rendering ----------------------------------------------
// Context serialization convention: one tool per line "id | name | cost=X".
// Raw mode omits the cost column and renders an undisclosed budget.

std::string render_market_block(const MarketSnapshot& market, bool include_costs);
std::string render_budget_block(const Money& budget, bool disclose);
std::string render_action_block(const Action& action);
std::string default_system_prompt();

// --- JSON schema -------------------------------------------------------------
// One JSON document per task; one JSON-lines record per trajectory step with
// a leading "task" record and a trailing "terminal" record. Money fields are
// canonical rational strings ("43", "760/7").

nlohmann::json task_to_json(const TaskInstance& task);
TaskInstance task_from_json(const nlohmann::json& j);

nlohmann::json action_to_json(const Action& action);
Action action_from_json(const nlohmann::json& j);

std::string trajectory_to_jsonl(const Trajectory& trajectory);
Trajectory trajectory_from_jsonl(const std::string& text);

}  // namespace toolbudget
