#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "robustgp/bias_models.hpp"
#include "robustgp/simulation.hpp"

namespace robustgp {

struct ExperimentGrid {
    std::vector<ScenarioSpec> scenarios;  // replicate_seed is ignored
    std::vector<ModelKind> models;
    int replicates = 15;
    std::uint64_t master_seed = 0;
    FitConfig base;  // model field is overridden per cell
};

/// The eight-cell default grid for one generator: q in {0.1, 0.2},
/// mu_o in {3, 5}, sigma = mu_o / 6 or mu_o / 12.
std::vector<ScenarioSpec> default_scenarios(Generator g, int n_train = 300, int n_test = 1000);

struct EvalResult {
    std::string scenario;  // ScenarioSpec::label()
    ScenarioSpec spec;
    ModelKind model = ModelKind::COB;
    int replicate = 0;
    std::uint64_t seed = 0;
    double mse = 0.0;
    double nlpd = 0.0;
    double fit_seconds = 0.0;
    bool converged = false;
    std::string error;  // empty on success
};

struct AggregateRow {
    std::string scenario;
    ModelKind model = ModelKind::COB;
    int count = 0;  // successful replicates
    double mse_mean = 0.0, mse_sd = 0.0;
    double nlpd_mean = 0.0, nlpd_sd = 0.0;
    double time_mean = 0.0;
};

struct ExperimentReport {
    std::vector<EvalResult> rows;  // sorted by (scenario index, model index, replicate)
    std::vector<AggregateRow> aggregates;
    int failures = 0;
};

/// Fits and evaluates one cell.
EvalResult run_cell(const ScenarioSpec& scenario, ModelKind model, int replicate, std::uint64_t master_seed,
                    const FitConfig& base);

/// Runs every cell on a pool of `parallelism` threads. Results do not depend
/// on the thread count apart from fit_seconds.
ExperimentReport run_experiment(const ExperimentGrid& grid, int parallelism = 1);

/// Mean and sample standard deviation over successful rows, summed in sorted
/// order.
std::vector<AggregateRow> aggregate(const std::vector<EvalResult>& rows);

/// Writes raw.csv, aggregate.csv, timing.csv, report.json and one
/// bars_<scenario>.csv per scenario into `dir` (created if missing). Every
/// file except timing.csv is a deterministic function of the grid.
void write_experiment(const std::string& dir, const ExperimentGrid& grid, const ExperimentReport& report);

/// Hex FNV-1a digest of the grid's canonical JSON form.
std::string grid_hash(const ExperimentGrid& grid);

}  // namespace robustgp
