#include "toolbudget/bench.hpp"

#include "toolbudget/llmclient.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

namespace toolbudget {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Raw: return "raw";
        case RunMode::Prompt: return "prompt";
        case RunMode::Mco: return "mco";
        case RunMode::Intent: return "intent";
    }
    throw DomainError("unknown run mode");
}

RunMode run_mode_from_string(const std::string& s) {
    for (auto m : {RunMode::Raw, RunMode::Prompt, RunMode::Mco, RunMode::Intent})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown mode: " + s);
}

std::string to_string(Backend backend) {
    switch (backend) {
        case Backend::Scripted: return "scripted";
        case Backend::Synthetic: return "synthetic";
        case Backend::Http: return "http";
    }
    throw DomainError("unknown backend");
}

Backend backend_from_string(const std::string& s) {
    for (auto b : {Backend::Scripted, Backend::Synthetic, Backend::Http})
        if (to_string(b) == s) return b;
    throw ConfigError("unknown backend: " + s);
}

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::PricePerturb: return "price-perturb";
        case ExperimentKind::BudgetScale: return "budget-scale";
        case ExperimentKind::MarketScale: return "market-scale";
        case ExperimentKind::GammaSweep: return "gamma-sweep";
    }
    throw DomainError("unknown experiment kind");
}

ExperimentKind experiment_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::PricePerturb, ExperimentKind::BudgetScale,
                   ExperimentKind::MarketScale, ExperimentKind::GammaSweep})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown experiment kind: " + s);
}

void RunConfig::check() const {
    oracle.check();
    if (engine.max_real_steps < 1 || engine.max_rejections_per_step < 1)
        throw ConfigError("engine caps must be >= 1");
    if (tasks_dir.empty()) market.check();
    if (n_tasks < 1) throw ConfigError("n_tasks must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (pass_threshold < 0.0 || pass_threshold > 1.0)
        throw ConfigError("pass_threshold must lie in [0, 1]");
    if (backend == Backend::Http && endpoint_url.empty())
        throw ConfigError("http backend requires an endpoint url");
    if (calibration_temperature <= 0) throw ConfigError("calibration_temperature must be > 0");
}

namespace {

std::string to_string(ActionMatch m) {
    return m == ActionMatch::ToolNameOnly ? "ToolNameOnly" : "ToolNameAndArgs";
}

ActionMatch action_match_from_string(const std::string& s) {
    if (s == "ToolNameOnly") return ActionMatch::ToolNameOnly;
    if (s == "ToolNameAndArgs") return ActionMatch::ToolNameAndArgs;
    throw ConfigError("unknown action_match: " + s);
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"backend", to_string(c.backend)},
            {"oracle",
             {{"gamma", rat_canonical(c.oracle.gamma)},
              {"delta", rat_canonical(c.oracle.delta)},
              {"rho_min", rat_canonical(c.oracle.rho_min)},
              {"rollout_horizon", c.oracle.rollout_horizon},
              {"enable_rollout_cache", c.oracle.enable_rollout_cache},
              {"enable_last_call_cache", c.oracle.enable_last_call_cache},
              {"enable_blacklist", c.oracle.enable_blacklist},
              {"action_match", to_string(c.oracle.action_match)}}},
            {"engine",
             {{"max_real_steps", c.engine.max_real_steps},
              {"max_rejections_per_step", c.engine.max_rejections_per_step},
              {"validate_tool_ids", c.engine.validate_tool_ids}}},
            {"market", market_config_to_json(c.market)},
            {"n_tasks", c.n_tasks},
            {"workers", c.workers},
            {"pass_threshold", c.pass_threshold},
            {"seed", c.seed},
            {"tasks_dir", c.tasks_dir},
            {"out_dir", c.out_dir},
            {"endpoint_url", c.endpoint_url},
            {"model_name", c.model_name},
            {"api_key_env_var", c.api_key_env_var},
            {"calibration_temperature", c.calibration_temperature}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("mode")) c.mode = run_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("backend")) c.backend = backend_from_string(j["backend"].get<std::string>());
    if (j.contains("oracle")) {
        const auto& o = j["oracle"];
        if (o.contains("gamma")) c.oracle.gamma = rat_parse(o["gamma"].get<std::string>());
        if (o.contains("delta")) c.oracle.delta = rat_parse(o["delta"].get<std::string>());
        if (o.contains("rho_min")) c.oracle.rho_min = rat_parse(o["rho_min"].get<std::string>());
        if (o.contains("rollout_horizon")) c.oracle.rollout_horizon = o["rollout_horizon"].get<int>();
        if (o.contains("enable_rollout_cache"))
            c.oracle.enable_rollout_cache = o["enable_rollout_cache"].get<bool>();
        if (o.contains("enable_last_call_cache"))
            c.oracle.enable_last_call_cache = o["enable_last_call_cache"].get<bool>();
        if (o.contains("enable_blacklist"))
            c.oracle.enable_blacklist = o["enable_blacklist"].get<bool>();
        if (o.contains("action_match"))
            c.oracle.action_match = action_match_from_string(o["action_match"].get<std::string>());
    }
    if (j.contains("engine")) {
        const auto& e = j["engine"];
        if (e.contains("max_real_steps")) c.engine.max_real_steps = e["max_real_steps"].get<int>();
        if (e.contains("max_rejections_per_step"))
            c.engine.max_rejections_per_step = e["max_rejections_per_step"].get<int>();
        if (e.contains("validate_tool_ids"))
            c.engine.validate_tool_ids = e["validate_tool_ids"].get<bool>();
    }
    if (j.contains("market")) c.market = market_config_from_json(j["market"]);
    if (j.contains("n_tasks")) c.n_tasks = j["n_tasks"].get<int>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("pass_threshold")) c.pass_threshold = j["pass_threshold"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("tasks_dir")) c.tasks_dir = j["tasks_dir"].get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("endpoint_url")) c.endpoint_url = j["endpoint_url"].get<std::string>();
    if (j.contains("model_name")) c.model_name = j["model_name"].get<std::string>();
    if (j.contains("api_key_env_var")) c.api_key_env_var = j["api_key_env_var"].get<std::string>();
    if (j.contains("calibration_temperature"))
        c.calibration_temperature = j["calibration_temperature"].get<double>();
    return c;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("EVP_Digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string config_digest(const RunConfig& config) {
    return sha256_hex(run_config_to_json(config).dump());
}

MetricsReport compute_metrics(const std::vector<Trajectory>& trajectories,
                              const std::map<std::string, bool>& solvability,
                              double pass_threshold) {
    if (trajectories.empty()) throw DomainError("compute_metrics over empty input");

    std::size_t passed = 0, feasible = 0;
    double cost_sum = 0.0, price_sum = 0.0;
    std::size_t call_count = 0;
    for (const auto& t : trajectories) {
        if (t.reward && to_double(*t.reward) >= pass_threshold) ++passed;
        if (t.feasible()) ++feasible;
        cost_sum += to_double(t.total_cost);
        for (const auto& s : t.steps) {
            if (!s.action.is_call()) continue;
            const bool executed =
                s.oracle_verdict == Verdict::Accepted ||
                (s.oracle_verdict == Verdict::NotConsulted &&
                 t.task.market.find(s.action.as_call().tool_id) != nullptr);
            if (executed) {
                price_sum += to_double(s.cost_charged);
                ++call_count;
            }
        }
    }

    MetricsReport r;
    r.n_tasks = trajectories.size();
    r.pass_rate = static_cast<double>(passed) / static_cast<double>(r.n_tasks);
    r.feasible_rate = static_cast<double>(feasible) / static_cast<double>(r.n_tasks);
    r.avg_cost = cost_sum / static_cast<double>(r.n_tasks);
    r.avg_price = call_count > 0 ? price_sum / static_cast<double>(call_count) : 0.0;
    if (!solvability.empty()) {
        std::size_t solvable = 0;
        for (const auto& [id, s] : solvability)
            if (s) ++solvable;
        if (solvable > 0) r.optimal_pass_rate = static_cast<double>(passed) / solvable;
    }
    return r;
}

MetricsReport BatchResult::metrics(const RunConfig& config) const {
    MetricsReport r = compute_metrics(trajectories, solvability, config.pass_threshold);
    r.e2e_seconds = e2e_seconds;
    r.mean_latency_seconds = mean_latency_seconds;
    r.real_tokens = usage.real_tokens;
    r.simulated_tokens = usage.simulated_tokens;
    r.token_count = usage.total_tokens();
    r.config_digest = config_digest(config);
    return r;
}

Trajectory run_one(const SyntheticTask& task, const RunConfig& config, UsageMeter* meter,
                   OracleState* final_state) {
    SyntheticEnvironment env(task);

    std::unique_ptr<PolicyInterface> policy;
    std::shared_ptr<ChatClient> client;
    switch (config.backend) {
        case Backend::Scripted:
            policy = scripted_retry_policy(greedy_plan(task), Persistence::RetryUntilSuccess);
            break;
        case Backend::Synthetic: {
            RngStream plan_rng(task.task.seed, "plan");
            policy = scripted_retry_policy(random_plan(task, plan_rng),
                                           Persistence::RetryUntilSuccess);
            break;
        }
        case Backend::Http: {
            EndpointConfig ep;
            ep.base_url = config.endpoint_url;
            ep.model_name = config.model_name;
            ep.api_key_env_var = config.api_key_env_var;
            client = std::make_shared<ChatClient>(ep);
            policy = std::make_unique<LlmPolicy>(client);
            break;
        }
    }
    policy->attach_meter(meter);

    Trajectory traj;
    switch (config.mode) {
        case RunMode::Raw:
            traj = run_soft(task.task, *policy, env, config.engine, SoftMode::Raw);
            break;
        case RunMode::Prompt:
            traj = run_soft(task.task, *policy, env, config.engine, SoftMode::Prompt);
            break;
        case RunMode::Mco: {
            std::unique_ptr<WorldModelInterface> wm;
            if (config.backend == Backend::Http)
                wm = std::make_unique<LlmWorldModel>(client);
            else
                wm = std::make_unique<SyntheticWorldModel>(task);
            wm->attach_meter(meter);
            McoOracle oracle(task.task, *policy, *wm, config.oracle);
            oracle.attach_meter(meter);
            traj = run_task(task.task, *policy, env, oracle, config.engine);
            if (final_state) *final_state = oracle.state();
            break;
        }
        case RunMode::Intent: {
            std::unique_ptr<IntentionPredictorInterface> predictor;
            std::unique_ptr<ConditionalGeneratorInterface> generator;
            if (config.backend == Backend::Http) {
                predictor = std::make_unique<LlmPredictor>(client, config.calibration_temperature,
                                                           config.oracle.rho_min);
                generator = std::make_unique<LlmGenerator>(client);
            } else {
                predictor = std::make_unique<TablePredictor>(task);
                generator = std::make_unique<SyntheticGenerator>(task);
            }
            generator->attach_meter(meter);
            IntentOracle oracle(task.task, *policy, *predictor, *generator, config.oracle);
            oracle.attach_meter(meter);
            traj = run_task(task.task, *policy, env, oracle, config.engine);
            if (final_state) *final_state = oracle.state();
            break;
        }
    }

    const Rat score = traj.terminal.kind == TerminalKind::Answered
                          ? synthetic_judge(task, traj.terminal.answer_text)
                          : Rat(0);
    compute_reward(traj, score);
    return traj;
}

namespace {

std::vector<SyntheticTask> load_tasks(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() > 10 && name.substr(name.size() - 10) == ".task.json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no *.task.json files in " + dir);

    std::vector<SyntheticTask> tasks;
    for (const auto& f : files) {
        auto truth = f.string();
        truth.replace(truth.size() - 10, 10, ".truth.json");
        std::ifstream tf(f), uf(truth);
        if (!uf) throw ConfigError("missing ground-truth side file: " + truth);
        tasks.push_back(synthetic_task_from_json(json::parse(tf), json::parse(uf)));
    }
    return tasks;
}

BatchResult run_batch_tasks(const RunConfig& config, std::vector<SyntheticTask> tasks) {
    BatchResult result;
    result.tasks = std::move(tasks);
    const std::size_t n = result.tasks.size();
    result.trajectories.resize(n);
    std::vector<UsageMeter> meters(n);
    std::vector<double> latencies(n, 0.0);

    for (auto& task : result.tasks) {
        if (task.tools.size() <= 12 && task.required_facts.size() <= 6) {
            const auto sol = brute_force_solvable(task);
            task.ground_truth_solvable = sol.solvable;
            result.solvability[task.task.task_id] = sol.solvable;
        }
    }

    const auto batch_start = std::chrono::steady_clock::now();
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                const auto t0 = std::chrono::steady_clock::now();
                result.trajectories[i] = run_one(result.tasks[i], config, &meters[i]);
                latencies[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                   .count();
            }
        });
    }
    for (auto& t : pool) t.join();
    result.e2e_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - batch_start).count();

    double latency_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        latency_sum += latencies[i];
        result.usage.real_tokens += meters[i].real_tokens;
        result.usage.simulated_tokens += meters[i].simulated_tokens;
        result.usage.real_requests += meters[i].real_requests;
        result.usage.simulated_requests += meters[i].simulated_requests;
    }
    result.mean_latency_seconds = n > 0 ? latency_sum / static_cast<double>(n) : 0.0;
    return result;
}

}  // namespace

BatchResult run_batch(const RunConfig& config) {
    config.check();
    std::vector<SyntheticTask> tasks;
    if (!config.tasks_dir.empty()) {
        tasks = load_tasks(config.tasks_dir);
    } else {
        tasks.reserve(static_cast<std::size_t>(config.n_tasks));
        for (int i = 0; i < config.n_tasks; ++i) {
            MarketGenConfig mc = config.market;
            mc.seed = derive_seed(config.seed, "task-" + std::to_string(i));
            tasks.push_back(gen_market(mc));
        }
    }
    return run_batch_tasks(config, std::move(tasks));
}

std::vector<std::pair<Rat, MetricsReport>> sweep_gamma(const RunConfig& base,
                                                       const std::vector<Rat>& gammas) {
    if (gammas.empty()) throw DomainError("empty gamma list");
    if (!std::is_sorted(gammas.begin(), gammas.end()))
        throw DomainError("gammas must be sorted ascending");
    std::vector<std::pair<Rat, MetricsReport>> out;
    for (const auto& g : gammas) {
        RunConfig c = base;
        c.oracle.gamma = g;
        out.emplace_back(g, run_batch(c).metrics(c));
    }
    return out;
}

json report_to_json(const MetricsReport& r) {
    json metrics = {{"pass_rate", r.pass_rate},
                    {"feasible_rate", r.feasible_rate},
                    {"avg_cost", r.avg_cost},
                    {"avg_price", r.avg_price},
                    {"token_count", r.token_count},
                    {"real_tokens", r.real_tokens},
                    {"simulated_tokens", r.simulated_tokens},
                    {"n_tasks", r.n_tasks}};
    if (r.optimal_pass_rate)
        metrics["optimal_pass_rate"] = *r.optimal_pass_rate;
    else
        metrics["optimal_pass_rate"] = nullptr;
    metrics["win_rate"] = nullptr;  // reserved: needs external reference solutions
    return {{"metrics", metrics},
            {"config_digest", r.config_digest},
            {"timing",
             {{"e2e_seconds", r.e2e_seconds}, {"mean_latency_seconds", r.mean_latency_seconds}}}};
}

std::string report_to_csv(const MetricsReport& r) {
    std::ostringstream out;
    out << "pass_rate,optimal_pass_rate,feasible_rate,avg_cost,avg_price,token_count,n_tasks,"
           "config_digest\n";
    out << r.pass_rate << ",";
    if (r.optimal_pass_rate)
        out << *r.optimal_pass_rate;
    out << "," << r.feasible_rate << "," << r.avg_cost << "," << r.avg_price << ","
        << r.token_count << "," << r.n_tasks << "," << r.config_digest << "\n";
    return out.str();
}

json strip_timing(json report) {
    report.erase("timing");
    return report;
}

void write_batch_outputs(const std::string& out_dir, const RunConfig& config,
                         const BatchResult& batch) {
    fs::create_directories(fs::path(out_dir) / "trajectories");
    {
        std::ofstream f(fs::path(out_dir) / "report.json");
        f << report_to_json(batch.metrics(config)).dump(2) << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "report.csv");
        f << report_to_csv(batch.metrics(config));
    }
    for (const auto& t : batch.trajectories) {
        std::ofstream f(fs::path(out_dir) / "trajectories" / (t.task.task_id + ".jsonl"));
        f << trajectory_to_jsonl(t);
    }
}

std::vector<std::pair<std::string, MetricsReport>> run_experiment(ExperimentKind kind,
                                                                  const ExperimentParams& params,
                                                                  const RunConfig& base) {
    base.check();
    std::vector<std::pair<std::string, MetricsReport>> out;

    auto emit = [&](const std::string& label, const RunConfig& cfg, BatchResult batch) {
        const MetricsReport report = batch.metrics(cfg);
        if (!base.out_dir.empty())
            write_batch_outputs((fs::path(base.out_dir) / label).string(), cfg, batch);
        out.emplace_back(label, report);
    };

    switch (kind) {
        case ExperimentKind::GammaSweep: {
            if (params.gammas.empty()) throw DomainError("gamma sweep needs gammas");
            if (!std::is_sorted(params.gammas.begin(), params.gammas.end()))
                throw DomainError("gammas must be sorted ascending");
            for (const auto& g : params.gammas) {
                RunConfig c = base;
                c.oracle.gamma = g;
                emit("gamma_" + rat_decimal(g, 2), c, run_batch(c));
            }
            break;
        }
        case ExperimentKind::PricePerturb: {
            if (params.factors.empty()) throw DomainError("price perturbation needs factors");
            for (const auto& f : params.factors) {
                RunConfig c = base;
                std::vector<SyntheticTask> tasks;
                for (int i = 0; i < base.n_tasks; ++i) {
                    MarketGenConfig mc = base.market;
                    mc.seed = derive_seed(base.seed, "task-" + std::to_string(i));
                    tasks.push_back(perturb_prices(gen_market(mc), f, params.selector));
                }
                emit("price_" + rat_decimal(f, 2), c, run_batch_tasks(c, std::move(tasks)));
            }
            break;
        }
        case ExperimentKind::BudgetScale: {
            if (params.factors.empty()) throw DomainError("budget scaling needs ratios");
            for (const auto& f : params.factors) {
                RunConfig c = base;
                std::vector<SyntheticTask> tasks;
                for (int i = 0; i < base.n_tasks; ++i) {
                    MarketGenConfig mc = base.market;
                    mc.seed = derive_seed(base.seed, "task-" + std::to_string(i));
                    tasks.push_back(scale_budget(gen_market(mc), f));
                }
                emit("budget_" + rat_decimal(f, 2), c, run_batch_tasks(c, std::move(tasks)));
            }
            break;
        }
        case ExperimentKind::MarketScale: {
            if (params.market_sizes.empty()) throw DomainError("market scaling needs sizes");
            for (int size : params.market_sizes) {
                RunConfig c = base;
                c.market.n_tools = size;
                emit("market_" + std::to_string(size), c, run_batch(c));
            }
            break;
        }
    }

    if (!base.out_dir.empty()) {
        json summary = {{"experiment", to_string(kind)}, {"points", json::object()}};
        for (const auto& [label, report] : out) summary["points"][label] = report_to_json(report);
        std::ofstream f(fs::path(base.out_dir) / "experiment.json");
        f << summary.dump(2) << "\n";
    }
    return out;
}

}  // namespace toolbudget
