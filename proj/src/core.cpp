#include "toolbudget/core.hpp"

#include <algorithm>
#include <sstream>

namespace toolbudget {

using nlohmann::json;

std::string to_string(BlockKind kind) {
    switch (kind) {
        case BlockKind::System: return "System";
        case BlockKind::Query: return "Query";
        case BlockKind::Budget: return "Budget";
        case BlockKind::Market: return "Market";
        case BlockKind::Reasoning: return "Reasoning";
        case BlockKind::Action: return "Action";
        case BlockKind::Observation: return "Observation";
        case BlockKind::OracleFeedback: return "OracleFeedback";
    }
    throw DomainError("unknown block kind");
}

BlockKind block_kind_from_string(const std::string& s) {
    for (auto k : {BlockKind::System, BlockKind::Query, BlockKind::Budget, BlockKind::Market,
                   BlockKind::Reasoning, BlockKind::Action, BlockKind::Observation,
                   BlockKind::OracleFeedback}) {
        if (to_string(k) == s) return k;
    }
    throw StructuralError("unknown block kind: " + s);
}

ContextBlock::ContextBlock(BlockKind k, std::string text, int step)
    : kind(k), payload(std::move(text)), step_index(step) {
    if (step_index < 0) throw StructuralError("negative step_index");
    if (payload.empty() && kind != BlockKind::Observation)
        throw StructuralError("empty payload for block kind " + to_string(kind));
}

History History::initial(std::string system, std::string query, std::string budget,
                         std::string market) {
    History h;
    h.blocks_.emplace_back(BlockKind::System, std::move(system), 0);
    h.blocks_.emplace_back(BlockKind::Query, std::move(query), 0);
    h.blocks_.emplace_back(BlockKind::Budget, std::move(budget), 0);
    h.blocks_.emplace_back(BlockKind::Market, std::move(market), 0);
    return h;
}

History History::append(ContextBlock block) const {
    if (!blocks_.empty() && block.step_index < blocks_.back().step_index)
        throw StructuralError("step_index decreased: " + std::to_string(block.step_index) +
                              " after " + std::to_string(blocks_.back().step_index));
    History next = *this;
    next.blocks_.push_back(std::move(block));
    return next;
}

const ContextBlock* History::last_of(BlockKind kind) const {
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
        if (it->kind == kind) return &*it;
    return nullptr;
}

const ToolSpec* MarketSnapshot::find(const std::string& tool_id) const {
    for (const auto& t : tools)
        if (t.tool_id == tool_id) return &t;
    return nullptr;
}

MarketSnapshot MarketSnapshot::without(const std::set<std::string>& excluded) const {
    MarketSnapshot pruned;
    for (const auto& t : tools)
        if (!excluded.count(t.tool_id)) pruned.tools.push_back(t);
    return pruned;
}

Money MarketSnapshot::min_cost() const {
    if (tools.empty()) throw DomainError("min_cost on empty market");
    Money m = tools.front().per_call_cost;
    for (const auto& t : tools) m = std::min(m, t.per_call_cost);
    return m;
}

Action Action::call(std::string tool_id, std::string arguments) {
    return Action{ToolCall{std::move(tool_id), std::move(arguments)}};
}

Action Action::answer(std::string text) { return Action{Answer{std::move(text)}}; }

bool Action::operator==(const Action& other) const {
    if (value.index() != other.value.index()) return false;
    if (is_call())
        return as_call().tool_id == other.as_call().tool_id &&
               as_call().arguments == other.as_call().arguments;
    return as_answer().text == other.as_answer().text;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Accepted: return "Accepted";
        case Verdict::Rejected: return "Rejected";
        case Verdict::NotConsulted: return "NotConsulted";
    }
    throw DomainError("unknown verdict");
}

Verdict verdict_from_string(const std::string& s) {
    for (auto v : {Verdict::Accepted, Verdict::Rejected, Verdict::NotConsulted})
        if (to_string(v) == s) return v;
    throw StructuralError("unknown verdict: " + s);
}

std::string to_string(TerminalKind t) {
    switch (t) {
        case TerminalKind::Answered: return "Answered";
        case TerminalKind::BudgetExhausted: return "BudgetExhausted";
        case TerminalKind::StepCapReached: return "StepCapReached";
    }
    throw DomainError("unknown terminal kind");
}

TerminalKind terminal_from_string(const std::string& s) {
    for (auto t : {TerminalKind::Answered, TerminalKind::BudgetExhausted,
                   TerminalKind::StepCapReached})
        if (to_string(t) == s) return t;
    throw StructuralError("unknown terminal kind: " + s);
}

History append_block(const History& history, ContextBlock block) {
    return history.append(std::move(block));
}

Rat compute_reward(Trajectory& trajectory, const Rat& judge_score) {
    if (judge_score < 0 || judge_score > 1)
        throw DomainError("judge_score outside [0, 1]: " + rat_canonical(judge_score));
    trajectory.judge_score = judge_score;
    trajectory.reward = trajectory.feasible() ? judge_score : Rat(0);
    return *trajectory.reward;
}

std::vector<std::string> validate_trajectory(const Trajectory& t) {
    std::vector<std::string> violations;
    Money ledger = t.task.budget;
    Money total = 0;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto& s = t.steps[i];
        const std::string at = "step " + std::to_string(i) + ": ";
        Money expected_cost = 0;
        if (s.action.is_call()) {
            const ToolSpec* tool = t.task.market.find(s.action.as_call().tool_id);
            switch (s.oracle_verdict) {
                case Verdict::Accepted:
                    if (!tool)
                        violations.push_back(at + "accepted call to unknown tool " +
                                             s.action.as_call().tool_id);
                    else
                        expected_cost = tool->per_call_cost;
                    break;
                case Verdict::Rejected:
                    expected_cost = 0;
                    break;
                case Verdict::NotConsulted:
                    // soft-mode execution charges; malformed/unknown proposals are free
                    expected_cost = tool ? tool->per_call_cost : Money(0);
                    break;
            }
        }
        if (s.cost_charged != expected_cost)
            violations.push_back(at + "cost_charged " + rat_canonical(s.cost_charged) +
                                 " != expected " + rat_canonical(expected_cost));
        ledger -= s.cost_charged;
        total += s.cost_charged;
        if (s.budget_after != ledger)
            violations.push_back(at + "budget ledger mismatch: recorded " +
                                 rat_canonical(s.budget_after) + " != " + rat_canonical(ledger));
        if (s.cost_charged < 0) violations.push_back(at + "negative cost_charged");
    }
    if (t.total_cost != total)
        violations.push_back("total_cost " + rat_canonical(t.total_cost) +
                             " != sum of step costs " + rat_canonical(total));
    if (t.reward) {
        if (*t.reward > 0 && t.total_cost > t.task.budget)
            violations.push_back("positive reward on an infeasible trajectory");
        if (t.judge_score) {
            const Rat expected = t.total_cost <= t.task.budget ? *t.judge_score : Rat(0);
            if (*t.reward != expected)
                violations.push_back("reward " + rat_canonical(*t.reward) +
                                     " != judge_score * feasibility " + rat_canonical(expected));
        }
    }
    if (t.terminal.kind == TerminalKind::Answered) {
        if (t.steps.empty() || !t.steps.back().action.is_answer())
            violations.push_back("Answered terminal without a final Answer action");
    }
    return violations;
}

std::string default_system_prompt() {
    return "You are a tool-using assistant. Solve the user query by calling tools "
           "from the market below; every call is charged against a hard budget.";
}

std::string render_market_block(const MarketSnapshot& market, bool include_costs) {
    std::ostringstream out;
    out << "Available tools (" << market.tools.size() << "):\n";
    for (const auto& t : market.tools) {
        out << t.tool_id << " | " << t.name;
        if (include_costs) out << " | cost=" << rat_decimal(t.per_call_cost, 2);
        out << "\n";
    }
    return out.str();
}

std::string render_budget_block(const Money& budget, bool disclose) {
    if (!disclose) return "Budget: (not disclosed)";
    return "Budget: " + rat_decimal(budget, 2) + " credit units (hard limit)";
}

std::string render_action_block(const Action& action) {
    if (action.is_answer()) return "Answer: " + action.as_answer().text;
    const auto& c = action.as_call();
    return "ToolCall: " + c.tool_id + "(" + c.arguments + ")";
}

// --- JSON ---------------------------------------------------------------

json task_to_json(const TaskInstance& task) {
    json tools = json::array();
    for (const auto& t : task.market.tools) {
        tools.push_back({{"tool_id", t.tool_id},
                         {"name", t.name},
                         {"description", t.description},
                         {"input_schema", t.input_schema},
                         {"per_call_cost", rat_canonical(t.per_call_cost)}});
    }
    return {{"task_id", task.task_id},
            {"query", task.query},
            {"budget", rat_canonical(task.budget)},
            {"market", {{"tools", tools}}},
            {"seed", task.seed}};
}

TaskInstance task_from_json(const json& j) {
    TaskInstance task;
    task.task_id = j.at("task_id").get<std::string>();
    task.query = j.at("query").get<std::string>();
    task.budget = rat_parse(j.at("budget").get<std::string>());
    if (task.budget <= 0) throw StructuralError("task budget must be positive");
    for (const auto& t : j.at("market").at("tools")) {
        ToolSpec spec;
        spec.tool_id = t.at("tool_id").get<std::string>();
        spec.name = t.at("name").get<std::string>();
        spec.description = t.at("description").get<std::string>();
        spec.input_schema = t.at("input_schema").get<std::string>();
        spec.per_call_cost = rat_parse(t.at("per_call_cost").get<std::string>());
        if (spec.per_call_cost < 0) throw StructuralError("negative per_call_cost");
        if (task.market.find(spec.tool_id))
            throw StructuralError("duplicate tool_id: " + spec.tool_id);
        task.market.tools.push_back(std::move(spec));
    }
    task.seed = j.at("seed").get<std::uint64_t>();
    return task;
}

json action_to_json(const Action& action) {
    if (action.is_call()) {
        return {{"variant", "ToolCall"},
                {"tool_id", action.as_call().tool_id},
                {"arguments", action.as_call().arguments}};
    }
    return {{"variant", "Answer"}, {"answer_text", action.as_answer().text}};
}

Action action_from_json(const json& j) {
    const auto variant = j.at("variant").get<std::string>();
    if (variant == "ToolCall")
        return Action::call(j.at("tool_id").get<std::string>(),
                            j.at("arguments").get<std::string>());
    if (variant == "Answer") return Action::answer(j.at("answer_text").get<std::string>());
    throw StructuralError("unknown action variant: " + variant);
}

std::string trajectory_to_jsonl(const Trajectory& t) {
    std::ostringstream out;
    json header = task_to_json(t.task);
    header["record"] = "task";
    out << header.dump() << "\n";
    for (const auto& s : t.steps) {
        json rec = {{"record", "step"},
                    {"reasoning", s.reasoning},
                    {"action", action_to_json(s.action)},
                    {"observation", s.observation},
                    {"cost_charged", rat_canonical(s.cost_charged)},
                    {"oracle_verdict", to_string(s.oracle_verdict)},
                    {"budget_after", rat_canonical(s.budget_after)}};
        out << rec.dump() << "\n";
    }
    json tail = {{"record", "terminal"},
                 {"terminal", to_string(t.terminal.kind)},
                 {"total_cost", rat_canonical(t.total_cost)}};
    if (t.terminal.kind == TerminalKind::Answered) tail["answer_text"] = t.terminal.answer_text;
    if (t.judge_score) tail["judge_score"] = rat_canonical(*t.judge_score);
    if (t.reward) tail["reward"] = rat_canonical(*t.reward);
    out << tail.dump() << "\n";
    return out.str();
}

Trajectory trajectory_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    Trajectory t;
    bool have_task = false, have_terminal = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        const auto record = j.at("record").get<std::string>();
        if (record == "task") {
            t.task = task_from_json(j);
            have_task = true;
        } else if (record == "step") {
            if (!have_task) throw StructuralError("step record before task record");
            StepRecord s{j.at("reasoning").get<std::string>(),
                         action_from_json(j.at("action")),
                         j.at("observation").get<std::string>(),
                         rat_parse(j.at("cost_charged").get<std::string>()),
                         verdict_from_string(j.at("oracle_verdict").get<std::string>()),
                         rat_parse(j.at("budget_after").get<std::string>())};
            t.steps.push_back(std::move(s));
        } else if (record == "terminal") {
            t.terminal.kind = terminal_from_string(j.at("terminal").get<std::string>());
            if (t.terminal.kind == TerminalKind::Answered)
                t.terminal.answer_text = j.at("answer_text").get<std::string>();
            t.total_cost = rat_parse(j.at("total_cost").get<std::string>());
            if (j.contains("judge_score")) t.judge_score = rat_parse(j["judge_score"].get<std::string>());
            if (j.contains("reward")) t.reward = rat_parse(j["reward"].get<std::string>());
            have_terminal = true;
        } else {
            throw StructuralError("unknown record kind: " + record);
        }
    }
    if (!have_task || !have_terminal)
        throw StructuralError("trajectory log missing task or terminal record");
    return t;
}

}  // namespace toolbudget
