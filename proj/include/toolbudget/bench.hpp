#pragma once
// Metrics computation and the experiment harness (gamma sweep, price
// perturbation, budget scaling, market-size scaling).
//
// Tasks fan out to a bounded worker pool; every task derives its RNG streams
// from its own seed and results are reduced in task order, so the worker
// count never changes any output. Reports are emitted as JSON and CSV with
// wall-clock timing isolated under a "timing" key that is excluded from the
// config digest and from byte-determinism comparisons.

#include "toolbudget/calibrate.hpp"
#include "toolbudget/core.hpp"
#include "toolbudget/engine.hpp"
#include "toolbudget/oracle.hpp"
#include "toolbudget/simenv.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace toolbudget {

enum class RunMode { Raw, Prompt, Mco, Intent };
enum class Backend { Scripted, Synthetic, Http };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);
std::string to_string(Backend backend);
Backend backend_from_string(const std::string& s);

struct RunConfig {
    RunMode mode = RunMode::Intent;
    Backend backend = Backend::Synthetic;
    IntentConfig oracle;
    EngineConfig engine;
    MarketGenConfig market;
    int n_tasks = 100;
    int workers = 8;
    double pass_threshold = 0.5;
    std::uint64_t seed = 0;
    std::string tasks_dir;  // when set, tasks are loaded instead of generated
    std::string out_dir;
    // http backend
    std::string endpoint_url;
    std::string model_name = "default";
    std::string api_key_env_var;
    double calibration_temperature = 1.0;

    void check() const;
};

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

// SHA-256 hex digest of the canonicalized (sorted-key, compact) config JSON.
std::string config_digest(const RunConfig& config);
std::string sha256_hex(const std::string& data);

struct MetricsReport {
    double pass_rate = 0.0;                       // PR
    std::optional<double> optimal_pass_rate;      // OR, when solvability known
    double feasible_rate = 0.0;                   // FR
    double avg_cost = 0.0;                        // AC
    double avg_price = 0.0;                       // AP over executed calls
    double e2e_seconds = 0.0;
    double mean_latency_seconds = 0.0;
    std::uint64_t token_count = 0;
    std::uint64_t real_tokens = 0;
    std::uint64_t simulated_tokens = 0;
    std::size_t n_tasks = 0;
    std::string config_digest;
};

// PR = fraction with reward >= pass_threshold; FR = fraction within budget;
// AC = mean total cost; AP = mean price over executed calls; OR = passed
// count / solvable count when solvability is supplied. Empty input raises
// DomainError.
MetricsReport compute_metrics(const std::vector<Trajectory>& trajectories,
                              const std::map<std::string, bool>& solvability,
                              double pass_threshold);

struct BatchResult {
    std::vector<SyntheticTask> tasks;
    std::vector<Trajectory> trajectories;
    std::map<std::string, bool> solvability;  // filled when brute force is in bounds
    UsageMeter usage;
    double e2e_seconds = 0.0;
    double mean_latency_seconds = 0.0;

    MetricsReport metrics(const RunConfig& config) const;
};

// Runs one full benchmark: generate (or load) tasks, run each under the
// configured mode/backend, judge, and score.
BatchResult run_batch(const RunConfig& config);

// Runs a single already-built task. Exposed for the CLI `run` subcommand and
// for tests that need one trajectory; final_state receives a copy of the
// oracle state (cache/blacklist diagnostics) when requested.
Trajectory run_one(const SyntheticTask& task, const RunConfig& config,
                   UsageMeter* meter = nullptr, OracleState* final_state = nullptr);

// One full bench run per gamma, everything else fixed. Gammas must be sorted
// ascending and non-empty.
std::vector<std::pair<Rat, MetricsReport>> sweep_gamma(const RunConfig& base,
                                                       const std::vector<Rat>& gammas);

enum class ExperimentKind { PricePerturb, BudgetScale, MarketScale, GammaSweep };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& s);

struct ExperimentParams {
    std::vector<Rat> factors;      // price factors or budget ratios
    std::vector<Rat> gammas;       // gamma sweep points
    std::vector<int> market_sizes; // market scaling points
    PriceSelector selector = PriceSelector::ReferenceTools;
};

// Orchestrates simenv transforms + engine runs + metrics and writes one
// report per experiment point into out_dir. Returns (point label, report).
std::vector<std::pair<std::string, MetricsReport>> run_experiment(ExperimentKind kind,
                                                                  const ExperimentParams& params,
                                                                  const RunConfig& base);

// Serialization of reports; "timing" is kept under its own key so tooling can
// strip it before comparing runs byte for byte.
nlohmann::json report_to_json(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);
nlohmann::json strip_timing(nlohmann::json report);

// Writes report.json / report.csv plus one trajectory JSONL per task under
// <out_dir>/trajectories/.
void write_batch_outputs(const std::string& out_dir, const RunConfig& config,
                         const BatchResult& batch);

}  // namespace toolbudget
