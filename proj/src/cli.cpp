#include "toolbudget/cli.hpp"

#include "toolbudget/bench.hpp"
#include "toolbudget/calibrate.hpp"
#include "toolbudget/core.hpp"
#include "toolbudget/simenv.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace toolbudget {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path.string());
    out << content;
}

// Flags mirror config keys one-to-one; an explicitly passed flag overrides
// the value loaded from --config.
struct ConfigFlags {
    std::string config_path;
    std::string mode, backend;
    std::string gamma, delta, rho_min;
    int rollout_horizon = 10;
    bool no_rollout_cache = false, no_last_call_cache = false, no_blacklist = false;
    std::string action_match;
    int max_real_steps = 16, max_rejections = 3;
    int n_tools = 20, n_facts = 3;
    std::string cost_low, cost_high, budget, prob_low, prob_high;
    int n_tasks = 100, workers = 8;
    double pass_threshold = 0.5;
    std::uint64_t seed = 0;
    std::string tasks_dir, out_dir;
    std::string endpoint_url, model_name, api_key_env;
    double calibration_temperature = 1.0;

    void add_to(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run-config file; flags take precedence");
        app.add_option("--mode", mode, "raw | prompt | mco | intent");
        app.add_option("--backend", backend, "scripted | synthetic | http");
        app.add_option("--gamma", gamma, "risk preference (rational or decimal)");
        app.add_option("--delta", delta, "blacklist threshold");
        app.add_option("--rho-min", rho_min, "predictor clamp floor");
        app.add_option("--rollout-horizon", rollout_horizon, "max simulated calls per rollout");
        app.add_flag("--no-rollout-cache", no_rollout_cache, "disable the rollout cache");
        app.add_flag("--no-last-call-cache", no_last_call_cache, "disable the last-call cache");
        app.add_flag("--no-blacklist", no_blacklist, "disable tool blacklisting");
        app.add_option("--action-match", action_match, "ToolNameOnly | ToolNameAndArgs");
        app.add_option("--max-real-steps", max_real_steps, "real tool-call cap per task");
        app.add_option("--max-rejections", max_rejections, "consecutive rejection cap");
        app.add_option("--n-tools", n_tools, "tools per generated market");
        app.add_option("--n-facts", n_facts, "required facts per generated task");
        app.add_option("--cost-low", cost_low, "lower bound of the cost distribution");
        app.add_option("--cost-high", cost_high, "upper bound of the cost distribution");
        app.add_option("--budget", budget, "task budget");
        app.add_option("--prob-low", prob_low, "lower bound of tool success probability");
        app.add_option("--prob-high", prob_high, "upper bound of tool success probability");
        app.add_option("--n-tasks", n_tasks, "number of tasks in the batch");
        app.add_option("--workers", workers, "worker pool size");
        app.add_option("--pass-threshold", pass_threshold, "judge score needed to pass");
        app.add_option("--seed", seed, "base seed");
        app.add_option("--tasks", tasks_dir, "directory of *.task.json/*.truth.json files");
        app.add_option("--out", out_dir, "output directory");
        app.add_option("--endpoint-url", endpoint_url, "chat-completions base url (http backend)");
        app.add_option("--model", model_name, "model name (http backend)");
        app.add_option("--api-key-env", api_key_env, "env var holding the API key");
        app.add_option("--calibration-temperature", calibration_temperature,
                       "predictor temperature from a calibration report");
    }

    RunConfig resolve(const CLI::App& app) const {
        RunConfig c;
        if (!config_path.empty()) c = run_config_from_json(json::parse(read_file(config_path)));
        auto set = [&](const char* flag) { return app.count(flag) > 0; };
        if (set("--mode")) c.mode = run_mode_from_string(mode);
        if (set("--backend")) c.backend = backend_from_string(backend);
        if (set("--gamma")) c.oracle.gamma = rat_parse(gamma);
        if (set("--delta")) c.oracle.delta = rat_parse(delta);
        if (set("--rho-min")) c.oracle.rho_min = rat_parse(rho_min);
        if (set("--rollout-horizon")) c.oracle.rollout_horizon = rollout_horizon;
        if (set("--no-rollout-cache")) c.oracle.enable_rollout_cache = false;
        if (set("--no-last-call-cache")) c.oracle.enable_last_call_cache = false;
        if (set("--no-blacklist")) c.oracle.enable_blacklist = false;
        if (set("--action-match"))
            c.oracle.action_match = action_match == "ToolNameAndArgs" ? ActionMatch::ToolNameAndArgs
                                                                      : ActionMatch::ToolNameOnly;
        if (set("--max-real-steps")) c.engine.max_real_steps = max_real_steps;
        if (set("--max-rejections")) c.engine.max_rejections_per_step = max_rejections;
        if (set("--n-tools")) c.market.n_tools = n_tools;
        if (set("--n-facts")) c.market.n_facts = n_facts;
        if (set("--cost-low")) c.market.cost_low = rat_parse(cost_low);
        if (set("--cost-high")) c.market.cost_high = rat_parse(cost_high);
        if (set("--budget")) c.market.budget = rat_parse(budget);
        if (set("--prob-low")) c.market.prob_low = rat_parse(prob_low);
        if (set("--prob-high")) c.market.prob_high = rat_parse(prob_high);
        if (set("--n-tasks")) c.n_tasks = n_tasks;
        if (set("--workers")) c.workers = workers;
        if (set("--pass-threshold")) c.pass_threshold = pass_threshold;
        if (set("--seed")) {
            c.seed = seed;
            c.market.seed = seed;
        }
        if (set("--tasks")) c.tasks_dir = tasks_dir;
        if (set("--out")) c.out_dir = out_dir;
        if (set("--endpoint-url")) c.endpoint_url = endpoint_url;
        if (set("--model")) c.model_name = model_name;
        if (set("--api-key-env")) c.api_key_env_var = api_key_env;
        if (set("--calibration-temperature")) c.calibration_temperature = calibration_temperature;
        return c;
    }
};

void print_metrics(std::ostream& out, const std::string& label, const MetricsReport& r) {
    std::ostringstream line;
    line << label << " PR=" << r.pass_rate;
    if (r.optimal_pass_rate) line << " OR=" << *r.optimal_pass_rate;
    line << " FR=" << r.feasible_rate << " AC=" << r.avg_cost << " AP=" << r.avg_price
         << " Time=" << r.e2e_seconds << "s Lat=" << r.mean_latency_seconds
         << "s Tok=" << r.token_count << " tasks=" << r.n_tasks;
    out << line.str() << "\n";
}

SyntheticTask load_single_task(const std::string& task_path) {
    const std::string suffix = ".task.json";
    if (task_path.size() <= suffix.size() ||
        task_path.substr(task_path.size() - suffix.size()) != suffix)
        throw ConfigError("expected a *.task.json path: " + task_path);
    std::string truth_path = task_path;
    truth_path.replace(truth_path.size() - suffix.size(), suffix.size(), ".truth.json");
    return synthetic_task_from_json(json::parse(read_file(task_path)),
                                    json::parse(read_file(truth_path)));
}

int cmd_gen_market(const MarketGenConfig& base, int count, const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        MarketGenConfig mc = base;
        mc.seed = derive_seed(base.seed, "task-" + std::to_string(i));
        const SyntheticTask task = gen_market(mc);
        const auto stem = fs::path(out_dir) / task.task.task_id;
        write_file(stem.string() + ".task.json", task_to_json(task.task).dump(2) + "\n");
        write_file(stem.string() + ".truth.json", truth_to_json(task).dump(2) + "\n");
        std::cout << stem.string() << ".task.json\n";
    }
    return 0;
}

int cmd_run(const RunConfig& config, const std::string& task_path) {
    SyntheticTask task;
    if (!task_path.empty()) {
        task = load_single_task(task_path);
    } else {
        MarketGenConfig mc = config.market;
        mc.seed = derive_seed(config.seed, "task-0");
        task = gen_market(mc);
    }
    Trajectory traj = run_one(task, config);
    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        write_file(fs::path(config.out_dir) / (task.task.task_id + ".jsonl"),
                   trajectory_to_jsonl(traj));
    }
    std::cout << "task " << task.task.task_id << " mode=" << to_string(config.mode)
              << " terminal=" << to_string(traj.terminal.kind)
              << " steps=" << traj.steps.size()
              << " total_cost=" << rat_decimal(traj.total_cost, 2)
              << " budget=" << rat_decimal(traj.task.budget, 2)
              << " feasible=" << (traj.feasible() ? "yes" : "no")
              << " judge=" << (traj.judge_score ? rat_decimal(*traj.judge_score, 3) : "-")
              << " reward=" << (traj.reward ? rat_decimal(*traj.reward, 3) : "-") << "\n";
    const bool passed = traj.reward && to_double(*traj.reward) >= config.pass_threshold;
    return passed ? 0 : 1;
}

int cmd_bench(const RunConfig& config) {
    BatchResult batch = run_batch(config);
    if (!config.out_dir.empty()) write_batch_outputs(config.out_dir, config, batch);
    print_metrics(std::cout, "bench[" + to_string(config.mode) + "]", batch.metrics(config));
    return 0;
}

int cmd_sweep(const RunConfig& config, const std::string& kind_str,
              const std::vector<std::string>& gammas, const std::vector<std::string>& factors,
              const std::vector<std::string>& ratios, const std::vector<int>& sizes,
              const std::string& selector) {
    ExperimentKind kind = experiment_from_string(kind_str);
    ExperimentParams params;
    for (const auto& g : gammas) params.gammas.push_back(rat_parse(g));
    if (kind == ExperimentKind::PricePerturb)
        for (const auto& f : factors) params.factors.push_back(rat_parse(f));
    if (kind == ExperimentKind::BudgetScale)
        for (const auto& r : ratios) params.factors.push_back(rat_parse(r));
    params.market_sizes = sizes;
    params.selector = selector == "all" ? PriceSelector::All : PriceSelector::ReferenceTools;

    auto points = run_experiment(kind, params, config);
    for (const auto& [label, report] : points) print_metrics(std::cout, label, report);
    return 0;
}

int cmd_calibrate(const std::string& samples_path, const std::string& out_path, int bins,
                  bool scores_are_probs) {
    const auto samples = read_samples_csv(read_file(samples_path));
    const auto result = fit_temperature(
        samples, scores_are_probs ? ScoreKind::Probability : ScoreKind::Logit, bins);
    const std::string doc = calibration_to_json(result).dump(2) + "\n";
    if (!out_path.empty())
        write_file(out_path, doc);
    else
        std::cout << doc;
    std::cout << "temperature=" << result.temperature << " ece_before=" << result.ece_before
              << " ece_after=" << result.ece_after << "\n";
    return 0;
}

int cmd_validate(const std::vector<std::string>& logs) {
    int violations_total = 0;
    for (const auto& path : logs) {
        Trajectory traj = trajectory_from_jsonl(read_file(path));
        const auto violations = validate_trajectory(traj);
        for (const auto& v : violations) std::cerr << path << ": " << v << "\n";
        violations_total += static_cast<int>(violations.size());
        if (violations.empty()) std::cout << path << ": ok\n";
    }
    return violations_total == 0 ? 0 : 1;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Budget-constrained tool-use engine and simulator"};
    app.require_subcommand(1);

    // gen-market
    auto* gen = app.add_subcommand("gen-market", "Generate synthetic task instances");
    MarketGenConfig gen_cfg;
    int gen_count = 1;
    std::string gen_out = ".";
    std::string gen_cost_low = "5", gen_cost_high = "50", gen_budget = "50",
                gen_prob_low = "1/4", gen_prob_high = "1";
    gen->add_option("--seed", gen_cfg.seed, "base seed");
    gen->add_option("--n-tools", gen_cfg.n_tools, "tools per market");
    gen->add_option("--n-facts", gen_cfg.n_facts, "required facts per task");
    gen->add_option("--cost-low", gen_cost_low, "cost lower bound");
    gen->add_option("--cost-high", gen_cost_high, "cost upper bound");
    gen->add_option("--budget", gen_budget, "task budget");
    gen->add_option("--prob-low", gen_prob_low, "success probability lower bound");
    gen->add_option("--prob-high", gen_prob_high, "success probability upper bound");
    gen->add_option("--count", gen_count, "number of tasks");
    gen->add_option("--out", gen_out, "output directory");

    // run
    auto* run = app.add_subcommand("run", "Run a single task and print a summary");
    ConfigFlags run_flags;
    run_flags.add_to(*run);
    std::string run_task_path;
    run->add_option("--task", run_task_path, "*.task.json to run (with sibling truth file)");

    // bench
    auto* bench = app.add_subcommand("bench", "Run a benchmark batch and report metrics");
    ConfigFlags bench_flags;
    bench_flags.add_to(*bench);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Gamma / price / budget / market experiments");
    ConfigFlags sweep_flags;
    sweep_flags.add_to(*sweep);
    std::string sweep_kind = "gamma-sweep";
    std::vector<std::string> sweep_gammas, sweep_factors, sweep_ratios;
    std::vector<int> sweep_sizes;
    std::string sweep_selector = "reference";
    sweep->add_option("--experiment", sweep_kind,
                      "gamma-sweep | price-perturb | budget-scale | market-scale");
    sweep->add_option("--gammas", sweep_gammas, "gamma grid (ascending)")->delimiter(',');
    sweep->add_option("--price-factor", sweep_factors, "price factors")->delimiter(',');
    sweep->add_option("--budget-ratio", sweep_ratios, "budget ratios")->delimiter(',');
    sweep->add_option("--market-sizes", sweep_sizes, "market sizes")->delimiter(',');
    sweep->add_option("--selector", sweep_selector, "reference | all (price perturbation)");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Fit temperature scaling from a samples file");
    std::string cal_samples, cal_out;
    int cal_bins = 10;
    bool cal_probs = false;
    cal->add_option("--samples", cal_samples, "score,label per line")->required();
    cal->add_option("--out", cal_out, "write the calibration report here");
    cal->add_option("--bins", cal_bins, "reliability bin count");
    cal->add_flag("--scores-are-probs", cal_probs, "scores are probabilities, not logits");

    // validate
    auto* val = app.add_subcommand("validate", "Re-check trajectory logs against core invariants");
    std::vector<std::string> val_logs;
    val->add_option("logs", val_logs, "trajectory .jsonl files")->required();

    std::vector<const char*> argv;
    argv.push_back("toolbudget");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            gen_cfg.cost_low = rat_parse(gen_cost_low);
            gen_cfg.cost_high = rat_parse(gen_cost_high);
            gen_cfg.budget = rat_parse(gen_budget);
            gen_cfg.prob_low = rat_parse(gen_prob_low);
            gen_cfg.prob_high = rat_parse(gen_prob_high);
            return cmd_gen_market(gen_cfg, gen_count, gen_out);
        }
        if (run->parsed()) return cmd_run(run_flags.resolve(*run), run_task_path);
        if (bench->parsed()) return cmd_bench(bench_flags.resolve(*bench));
        if (sweep->parsed())
            return cmd_sweep(sweep_flags.resolve(*sweep), sweep_kind, sweep_gammas, sweep_factors,
                             sweep_ratios, sweep_sizes, sweep_selector);
        if (cal->parsed()) return cmd_calibrate(cal_samples, cal_out, cal_bins, cal_probs);
        if (val->parsed()) return cmd_validate(val_logs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace toolbudget
