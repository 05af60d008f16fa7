#include "toolbudget/simenv.hpp"

#include <algorithm>
#include <sstream>

namespace toolbudget {

using nlohmann::json;

namespace {

std::string fact_token(const std::string& fact) { return "[fact:" + fact + "]"; }

std::string join_fact_tokens(const std::set<std::string>& facts) {
    std::string out;
    for (const auto& f : facts) {
        if (!out.empty()) out += " ";
        out += fact_token(f);
    }
    return out;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string render_payload(const SyntheticTool& tool, const std::string& tmpl) {
    std::string out = replace_all(tmpl, "{tool}", tool.spec.tool_id);
    return replace_all(out, "{facts}", join_fact_tokens(tool.provides_facts));
}

// integer grid draw: uniform rational on [lo, hi] with `scale` decimal steps
Rat draw_grid(RngStream& rng, const Rat& lo, const Rat& hi, std::int64_t scale) {
    const Rat lo_s = lo * scale;
    const Rat hi_s = hi * scale;
    const auto lo_i = static_cast<std::uint64_t>(to_double(lo_s) + 0.5);
    const auto hi_i = static_cast<std::uint64_t>(to_double(hi_s) + 0.5);
    return Rat(static_cast<std::int64_t>(rng.next_in(lo_i, hi_i)), scale);
}

}  // namespace

const SyntheticTool* SyntheticTask::find_tool(const std::string& tool_id) const {
    for (const auto& t : tools)
        if (t.spec.tool_id == tool_id) return &t;
    return nullptr;
}

void SyntheticTask::sync_market() {
    task.market.tools.clear();
    for (const auto& t : tools) task.market.tools.push_back(t.spec);
}

void MarketGenConfig::check() const {
    if (n_tools < 1) throw ConfigError("n_tools must be >= 1");
    if (n_facts < 1) throw ConfigError("n_facts must be >= 1");
    if (n_tools < n_facts) throw ConfigError("need at least one tool per fact");
    if (cost_low > cost_high) throw ConfigError("cost_low > cost_high");
    if (cost_low < 0) throw ConfigError("negative costs");
    if (prob_low <= 0 || prob_high > 1 || prob_low > prob_high)
        throw ConfigError("probability range must satisfy 0 < low <= high <= 1");
    if (budget <= 0) throw ConfigError("budget must be positive");
}

SyntheticTask gen_market(const MarketGenConfig& config) {
    config.check();
    RngStream rng(config.seed, "market");

    std::vector<std::string> facts;
    for (int i = 0; i < config.n_facts; ++i) facts.push_back("f" + std::to_string(i));

    SyntheticTask st;
    for (int j = 0; j < config.n_tools; ++j) {
        const std::string& fact = facts[static_cast<std::size_t>(j % config.n_facts)];
        SyntheticTool tool;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%02d", j);
        tool.spec.tool_id = "tool_" + std::string(buf);
        tool.spec.name = "get_" + fact + "_v" + std::to_string(j / config.n_facts);
        tool.spec.description = "Synthetic data source returning fact '" + fact + "'.";
        tool.spec.input_schema = R"({"type":"object","properties":{}})";
        tool.spec.per_call_cost = draw_grid(rng, config.cost_low, config.cost_high, 100);
        tool.success_prob = draw_grid(rng, config.prob_low, config.prob_high, 1000);
        tool.success_payload_template = "OK {facts} retrieved by {tool}";
        tool.failure_payload_template = "ERROR: {tool} returned no usable data";
        tool.provides_facts = {fact};
        st.tools.push_back(std::move(tool));
    }

    // substitution guarantee: fact f0 has two providers at different prices
    if (config.n_tools > config.n_facts) {
        auto& a = st.tools[0];
        auto& b = st.tools[static_cast<std::size_t>(config.n_facts)];
        if (a.spec.per_call_cost == b.spec.per_call_cost) {
            const Rat step(1, 100);
            if (b.spec.per_call_cost + step <= config.cost_high)
                b.spec.per_call_cost += step;
            else if (b.spec.per_call_cost - step >= config.cost_low)
                b.spec.per_call_cost -= step;
            else
                throw ConfigError("cost range too narrow for distinct substitute prices");
        }
    }

    st.required_facts.insert(facts.begin(), facts.end());
    for (const auto& fact : facts) {
        const SyntheticTool* cheapest = nullptr;
        for (const auto& t : st.tools)
            if (t.provides_facts.count(fact) &&
                (!cheapest || t.spec.per_call_cost < cheapest->spec.per_call_cost))
                cheapest = &t;
        st.reference_tools.insert(cheapest->spec.tool_id);
    }

    std::string fact_list;
    for (const auto& f : st.required_facts) {
        if (!fact_list.empty()) fact_list += ", ";
        fact_list += f;
    }
    st.task.task_id = "synth-" + std::to_string(config.seed);
    st.task.query = "Collect the following facts within budget: " + fact_list + ".";
    st.task.budget = config.budget;
    st.task.seed = config.seed;
    st.sync_market();
    return st;
}

SyntheticTask perturb_prices(const SyntheticTask& task, const Rat& factor,
                             PriceSelector selector) {
    if (factor <= 0) throw DomainError("price factor must be positive");
    SyntheticTask out = task;
    for (auto& t : out.tools) {
        if (selector == PriceSelector::All || task.reference_tools.count(t.spec.tool_id))
            t.spec.per_call_cost *= factor;
    }
    out.sync_market();
    out.ground_truth_solvable.reset();
    return out;
}

SyntheticTask scale_budget(const SyntheticTask& task, const Rat& ratio) {
    if (ratio <= 0) throw DomainError("budget ratio must be positive");
    SyntheticTask out = task;
    out.task.budget *= ratio;
    out.ground_truth_solvable.reset();
    return out;
}

std::string render_success_payload(const SyntheticTool& tool) {
    return render_payload(tool, tool.success_payload_template);
}

std::string render_failure_payload(const SyntheticTool& tool) {
    return render_payload(tool, tool.failure_payload_template);
}

bool is_failure_payload(const std::string& observation) {
    return observation.rfind("OK", 0) != 0;
}

std::string synthetic_env_execute(const SyntheticTool& tool, const std::string& /*arguments*/,
                                  RngStream& rng) {
    const bool success = rng.bernoulli(to_double(tool.success_prob));
    return success ? render_success_payload(tool) : render_failure_payload(tool);
}

std::set<std::string> extract_facts(const std::string& text) {
    std::set<std::string> facts;
    static const std::string kOpen = "[fact:";
    std::size_t pos = 0;
    while ((pos = text.find(kOpen, pos)) != std::string::npos) {
        const std::size_t end = text.find(']', pos + kOpen.size());
        if (end == std::string::npos) break;
        facts.insert(text.substr(pos + kOpen.size(), end - pos - kOpen.size()));
        pos = end + 1;
    }
    return facts;
}

Rat synthetic_judge(const SyntheticTask& task, const std::string& answer_text) {
    if (task.required_facts.empty()) return 1;
    const auto found = extract_facts(answer_text);
    int hits = 0;
    for (const auto& f : task.required_facts)
        if (found.count(f)) ++hits;
    return Rat(hits, static_cast<int>(task.required_facts.size()));
}

SolvabilityResult brute_force_solvable(const SyntheticTask& task) {
    const std::size_t n = task.tools.size();
    if (n > 12 || task.required_facts.size() > 6)
        throw UnsupportedSizeError("brute force supports <= 12 tools and <= 6 facts");

    std::vector<std::string> facts(task.required_facts.begin(), task.required_facts.end());
    auto fact_bit = [&](const std::string& f) -> unsigned {
        return static_cast<unsigned>(std::find(facts.begin(), facts.end(), f) - facts.begin());
    };
    const unsigned full = facts.empty() ? 0 : (1u << facts.size()) - 1;

    std::vector<unsigned> masks(n, 0);
    for (std::size_t j = 0; j < n; ++j)
        for (const auto& f : task.tools[j].provides_facts)
            if (task.required_facts.count(f)) masks[j] |= 1u << fact_bit(f);

    SolvabilityResult result;
    for (std::uint32_t subset = 1; subset < (1u << n); ++subset) {
        unsigned covered = 0;
        Money single_pass = 0;
        Rat expected = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!(subset & (1u << j))) continue;
            covered |= masks[j];
            single_pass += task.tools[j].spec.per_call_cost;
            expected += task.tools[j].spec.per_call_cost / task.tools[j].success_prob;
        }
        if (covered != full) continue;
        if (single_pass <= task.task.budget) result.solvable = true;
        if (!result.min_expected_cost || expected < *result.min_expected_cost)
            result.min_expected_cost = expected;
    }
    if (full == 0) result.solvable = true;  // nothing to collect
    return result;
}

// --- scripted agents ---------------------------------------------------------

namespace {

class RetryPlanPolicy : public PolicyInterface {
public:
    explicit RetryPlanPolicy(std::vector<ToolCall> plan) : plan_(std::move(plan)) {}

    PolicyStep step(const History& history) override {
        std::size_t completed = 0;
        const ContextBlock* last_obs = nullptr;
        std::set<std::string> collected;
        std::uint64_t prompt_size = 0;
        for (const auto& b : history.blocks()) {
            prompt_size += b.payload.size();
            if (b.kind == BlockKind::Observation) {
                last_obs = &b;
                if (!is_failure_payload(b.payload)) ++completed;
                for (const auto& f : extract_facts(b.payload)) collected.insert(f);
            }
        }
        PolicyStep ps;
        if (completed >= plan_.size()) {
            std::string facts;
            for (const auto& f : collected) facts += " " + fact_token_(f);
            ps.reasoning = "Plan complete; composing the final answer.";
            ps.action = Action::answer("Collected facts:" + facts);
        } else {
            const auto& call = plan_[completed];
            const bool retrying = last_obs != nullptr && is_failure_payload(last_obs->payload) &&
                                  completed < plan_.size();
            ps.reasoning = (retrying ? "Retrying step " : "Executing step ") +
                           std::to_string(completed + 1) + " of the plan with " + call.tool_id + ".";
            ps.action = Action::call(call.tool_id, call.arguments);
        }
        record_usage(approx_tokens_(prompt_size) +
                     approx_tokens(ps.reasoning) + approx_tokens(render_action_block(ps.action)));
        return ps;
    }

private:
    static std::string fact_token_(const std::string& f) { return "[fact:" + f + "]"; }
    static std::uint64_t approx_tokens_(std::uint64_t bytes) { return (bytes + 3) / 4; }
    std::vector<ToolCall> plan_;
};

}  // namespace

std::unique_ptr<PolicyInterface> scripted_retry_policy(std::vector<ToolCall> plan,
                                                       Persistence /*persistence*/) {
    return std::make_unique<RetryPlanPolicy>(std::move(plan));
}

ScriptPolicy::ScriptPolicy(std::vector<PolicyStep> script, std::string final_answer)
    : script_(std::move(script)), final_answer_(std::move(final_answer)) {}

PolicyStep ScriptPolicy::step(const History& history) {
    std::size_t proposals = 0;
    std::set<std::string> collected;
    std::uint64_t prompt_size = 0;
    for (const auto& b : history.blocks()) {
        prompt_size += b.payload.size();
        if (b.kind == BlockKind::Action) ++proposals;
        if (b.kind == BlockKind::Observation)
            for (const auto& f : extract_facts(b.payload)) collected.insert(f);
    }
    PolicyStep ps;
    if (proposals < script_.size()) {
        ps = script_[proposals];
    } else {
        std::string facts;
        for (const auto& f : collected) facts += " [fact:" + f + "]";
        ps.reasoning = "Script exhausted; answering.";
        ps.action = Action::answer(final_answer_ + facts);
    }
    record_usage((prompt_size + 3) / 4 + approx_tokens(ps.reasoning));
    return ps;
}

std::vector<ToolCall> greedy_plan(const SyntheticTask& task) {
    std::vector<const SyntheticTool*> picks;
    for (const auto& fact : task.required_facts) {
        const SyntheticTool* best = nullptr;
        for (const auto& t : task.tools)
            if (t.provides_facts.count(fact) &&
                (!best || t.spec.per_call_cost < best->spec.per_call_cost))
                best = &t;
        if (best && std::find(picks.begin(), picks.end(), best) == picks.end())
            picks.push_back(best);
    }
    std::sort(picks.begin(), picks.end(), [](const SyntheticTool* a, const SyntheticTool* b) {
        return a->spec.per_call_cost < b->spec.per_call_cost ||
               (a->spec.per_call_cost == b->spec.per_call_cost &&
                a->spec.tool_id < b->spec.tool_id);
    });
    std::vector<ToolCall> plan;
    for (const auto* t : picks) plan.push_back({t->spec.tool_id, "{}"});
    return plan;
}

std::vector<ToolCall> random_plan(const SyntheticTask& task, RngStream& rng) {
    std::vector<std::size_t> order(task.tools.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_in(0, i - 1)]);

    std::set<std::string> missing = task.required_facts;
    std::vector<ToolCall> plan;
    for (std::size_t idx : order) {
        if (missing.empty()) break;
        const auto& t = task.tools[idx];
        bool useful = false;
        for (const auto& f : t.provides_facts) useful = useful || missing.count(f) > 0;
        // occasionally pick a redundant tool to make plans sloppy
        if (useful || rng.next_in(0, 4) == 0) {
            plan.push_back({t.spec.tool_id, "{}"});
            for (const auto& f : t.provides_facts) missing.erase(f);
        }
    }
    return plan;
}

// --- table-backed interfaces ---------------------------------------------------

namespace {
std::map<std::string, SyntheticTool> build_table(const SyntheticTask& task) {
    std::map<std::string, SyntheticTool> table;
    for (const auto& t : task.tools) table[t.spec.tool_id] = t;
    return table;
}
}  // namespace

SyntheticEnvironment::SyntheticEnvironment(const SyntheticTask& task) : table_(build_table(task)) {}

std::string SyntheticEnvironment::execute(const ToolSpec& tool, const std::string& arguments,
                                          RngStream& rng) {
    auto it = table_.find(tool.tool_id);
    if (it == table_.end()) throw DomainError("unknown synthetic tool: " + tool.tool_id);
    return synthetic_env_execute(it->second, arguments, rng);
}

TablePredictor::TablePredictor(const SyntheticTask& task) {
    for (const auto& t : task.tools) probs_[t.spec.tool_id] = t.success_prob;
}

Rat TablePredictor::predict(const std::string& /*reasoning*/, const ToolSpec& tool,
                            const std::string& arguments) {
    auto ov = overrides_.find({tool.tool_id, arguments});
    if (ov != overrides_.end()) return ov->second;
    auto it = probs_.find(tool.tool_id);
    if (it == probs_.end()) throw DomainError("unknown synthetic tool: " + tool.tool_id);
    return it->second;
}

void TablePredictor::set_override(const std::string& tool_id, const std::string& arguments,
                                  Rat rho) {
    overrides_[{tool_id, arguments}] = std::move(rho);
}

SyntheticGenerator::SyntheticGenerator(const SyntheticTask& task) : table_(build_table(task)) {}

std::string SyntheticGenerator::generate(const ToolSpec& tool, const std::string& /*arguments*/,
                                         bool satisfied, RngStream& /*rng*/) {
    auto it = table_.find(tool.tool_id);
    if (it == table_.end()) throw DomainError("unknown synthetic tool: " + tool.tool_id);
    const std::string payload =
        satisfied ? render_success_payload(it->second) : render_failure_payload(it->second);
    record_usage(approx_tokens(payload));
    return payload;
}

SyntheticWorldModel::SyntheticWorldModel(const SyntheticTask& task) : table_(build_table(task)) {}

std::string SyntheticWorldModel::simulate(const ToolSpec& tool, const std::string& /*arguments*/,
                                          RngStream& rng) {
    auto it = table_.find(tool.tool_id);
    if (it == table_.end()) throw DomainError("unknown synthetic tool: " + tool.tool_id);
    bool success;
    if (diversity() == 0.0) {
        success = it->second.success_prob >= Rat(1, 2);
    } else {
        success = rng.bernoulli(to_double(it->second.success_prob));
    }
    const std::string payload =
        success ? render_success_payload(it->second) : render_failure_payload(it->second);
    record_usage(approx_tokens(payload));
    return payload;
}

// --- serialization -------------------------------------------------------------

json truth_to_json(const SyntheticTask& task) {
    json tools = json::array();
    for (const auto& t : task.tools) {
        tools.push_back({{"tool_id", t.spec.tool_id},
                         {"success_prob", rat_canonical(t.success_prob)},
                         {"provides_facts", t.provides_facts},
                         {"success_payload_template", t.success_payload_template},
                         {"failure_payload_template", t.failure_payload_template}});
    }
    json j = {{"task_id", task.task.task_id},
              {"required_facts", task.required_facts},
              {"reference_tools", task.reference_tools},
              {"tools", tools}};
    if (task.ground_truth_solvable) j["ground_truth_solvable"] = *task.ground_truth_solvable;
    return j;
}

json market_config_to_json(const MarketGenConfig& c) {
    return {{"n_tools", c.n_tools},
            {"n_facts", c.n_facts},
            {"cost_low", rat_canonical(c.cost_low)},
            {"cost_high", rat_canonical(c.cost_high)},
            {"budget", rat_canonical(c.budget)},
            {"prob_low", rat_canonical(c.prob_low)},
            {"prob_high", rat_canonical(c.prob_high)},
            {"seed", c.seed}};
}

MarketGenConfig market_config_from_json(const json& j) {
    MarketGenConfig c;
    if (j.contains("n_tools")) c.n_tools = j["n_tools"].get<int>();
    if (j.contains("n_facts")) c.n_facts = j["n_facts"].get<int>();
    if (j.contains("cost_low")) c.cost_low = rat_parse(j["cost_low"].get<std::string>());
    if (j.contains("cost_high")) c.cost_high = rat_parse(j["cost_high"].get<std::string>());
    if (j.contains("budget")) c.budget = rat_parse(j["budget"].get<std::string>());
    if (j.contains("prob_low")) c.prob_low = rat_parse(j["prob_low"].get<std::string>());
    if (j.contains("prob_high")) c.prob_high = rat_parse(j["prob_high"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    return c;
}

SyntheticTask synthetic_task_from_json(const json& task_doc, const json& truth_doc) {
    SyntheticTask st;
    st.task = task_from_json(task_doc);
    if (truth_doc.at("task_id").get<std::string>() != st.task.task_id)
        throw StructuralError("truth file does not match task file");
    for (const auto& f : truth_doc.at("required_facts")) st.required_facts.insert(f.get<std::string>());
    for (const auto& r : truth_doc.at("reference_tools")) st.reference_tools.insert(r.get<std::string>());
    for (const auto& tj : truth_doc.at("tools")) {
        const auto id = tj.at("tool_id").get<std::string>();
        const ToolSpec* spec = st.task.market.find(id);
        if (!spec) throw StructuralError("truth tool missing from market: " + id);
        SyntheticTool t;
        t.spec = *spec;
        t.success_prob = rat_parse(tj.at("success_prob").get<std::string>());
        if (t.success_prob <= 0 || t.success_prob > 1)
            throw StructuralError("success_prob outside (0, 1]");
        for (const auto& f : tj.at("provides_facts")) t.provides_facts.insert(f.get<std::string>());
        t.success_payload_template = tj.at("success_payload_template").get<std::string>();
        t.failure_payload_template = tj.at("failure_payload_template").get<std::string>();
        st.tools.push_back(std::move(t));
    }
    if (truth_doc.contains("ground_truth_solvable"))
        st.ground_truth_solvable = truth_doc["ground_truth_solvable"].get<bool>();
    return st;
}

}  // namespace toolbudget
