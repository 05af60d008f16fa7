#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "toolbudget/bench.hpp"
#include "toolbudget/calibrate.hpp"
#include "toolbudget/core.hpp"
#include "toolbudget/oracle.hpp"
#include "toolbudget/simenv.hpp"

#include <json.hpp>

namespace py = pybind11;
using namespace toolbudget;
using nlohmann::json;

// All structured values cross the boundary as JSON strings; the Python
// package wraps them in dict-friendly helpers.

namespace {

std::string gen_market_json(const std::string& config_json) {
    const auto task = gen_market(market_config_from_json(json::parse(config_json)));
    return json{{"task", task_to_json(task.task)}, {"truth", truth_to_json(task)}}.dump();
}

std::string run_task_json(const std::string& task_json, const std::string& truth_json,
                          const std::string& run_config_json) {
    const auto task = synthetic_task_from_json(json::parse(task_json), json::parse(truth_json));
    const auto config = run_config_from_json(json::parse(run_config_json));
    const Trajectory traj = run_one(task, config);

    json steps = json::array();
    for (const auto& s : traj.steps) {
        steps.push_back({{"reasoning", s.reasoning},
                         {"action", action_to_json(s.action)},
                         {"observation", s.observation},
                         {"cost_charged", rat_canonical(s.cost_charged)},
                         {"oracle_verdict", to_string(s.oracle_verdict)},
                         {"budget_after", rat_canonical(s.budget_after)}});
    }
    json out = {{"task", task_to_json(traj.task)},
                {"steps", steps},
                {"terminal", to_string(traj.terminal.kind)},
                {"total_cost", rat_canonical(traj.total_cost)},
                {"feasible", traj.feasible()}};
    if (traj.terminal.kind == TerminalKind::Answered) out["answer_text"] = traj.terminal.answer_text;
    if (traj.judge_score) out["judge_score"] = rat_canonical(*traj.judge_score);
    if (traj.reward) out["reward"] = rat_canonical(*traj.reward);
    return out.dump();
}

std::string run_batch_json(const std::string& run_config_json) {
    const auto config = run_config_from_json(json::parse(run_config_json));
    const BatchResult batch = run_batch(config);
    return report_to_json(batch.metrics(config)).dump();
}

std::string geometric_cost_str(const std::string& cost, const std::string& rho,
                               const std::string& rho_min) {
    return rat_canonical(geometric_cost(rat_parse(cost), rat_parse(rho), rat_parse(rho_min)));
}

std::string brute_force_json(const std::string& task_json, const std::string& truth_json) {
    const auto task = synthetic_task_from_json(json::parse(task_json), json::parse(truth_json));
    const auto result = brute_force_solvable(task);
    json out = {{"solvable", result.solvable}};
    out["min_expected_cost"] =
        result.min_expected_cost ? json(rat_canonical(*result.min_expected_cost)) : json(nullptr);
    return out.dump();
}

double ece_py(const std::vector<double>& probs, const std::vector<int>& labels, int bins) {
    if (probs.size() != labels.size()) throw DomainError("probs and labels differ in length");
    std::vector<std::pair<double, int>> predictions;
    predictions.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) predictions.emplace_back(probs[i], labels[i]);
    return ece(predictions, bins);
}

std::string fit_temperature_json(const std::vector<double>& scores, const std::vector<int>& labels,
                                 bool scores_are_probs, int bins) {
    if (scores.size() != labels.size()) throw DomainError("scores and labels differ in length");
    std::vector<CalibrationSample> samples(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) samples[i] = {scores[i], labels[i]};
    return calibration_to_json(fit_temperature(
               samples, scores_are_probs ? ScoreKind::Probability : ScoreKind::Logit, bins))
        .dump();
}

std::vector<std::string> validate_jsonl(const std::string& jsonl) {
    return validate_trajectory(trajectory_from_jsonl(jsonl));
}

std::string default_run_config_json() {
    return run_config_to_json(RunConfig{}).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Budget-constrained tool-use engine (C++ core bindings)";

    m.def("gen_market_json", &gen_market_json, py::arg("config_json"),
          "Generate a synthetic task; returns {'task':..., 'truth':...} as JSON.");
    m.def("run_task_json", &run_task_json, py::arg("task_json"), py::arg("truth_json"),
          py::arg("run_config_json"), "Run one task; returns the trajectory as JSON.");
    m.def("run_batch_json", &run_batch_json, py::arg("run_config_json"),
          py::call_guard<py::gil_scoped_release>(),
          "Run a benchmark batch; returns the metrics report as JSON.");
    m.def("geometric_cost", &geometric_cost_str, py::arg("cost"), py::arg("rho"),
          py::arg("rho_min") = "1/1000",
          "Exact expected retry cost cost/max(rho, rho_min) as a rational string.");
    m.def("brute_force_solvable_json", &brute_force_json, py::arg("task_json"),
          py::arg("truth_json"));
    m.def("ece", &ece_py, py::arg("probs"), py::arg("labels"), py::arg("bins") = 10);
    m.def("fit_temperature_json", &fit_temperature_json, py::arg("scores"), py::arg("labels"),
          py::arg("scores_are_probs") = false, py::arg("bins") = 10);
    m.def("validate_trajectory_jsonl", &validate_jsonl, py::arg("jsonl"),
          "Invariant violations found in a trajectory log (empty list = consistent).");
    m.def("default_run_config_json", &default_run_config_json);

#ifdef TOOLBUDGET_VERSION
    m.attr("__version__") = TOOLBUDGET_VERSION;
#else
    m.attr("__version__") = "dev";
#endif
}
