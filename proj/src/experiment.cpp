#include "robustgp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "json.hpp"
#include "robustgp/csv_io.hpp"
#include "robustgp/errors.hpp"
#include "robustgp/model.hpp"

namespace robustgp {

using json = nlohmann::ordered_json;

std::vector<ScenarioSpec> default_scenarios(Generator g, int n_train, int n_test) {
    std::vector<ScenarioSpec> out;
    for (double q : {0.1, 0.2})
        for (double mu : {3.0, 5.0})
            for (SigmaRatio r : {SigmaRatio::Sixth, SigmaRatio::Twelfth}) {
                ScenarioSpec s;
                s.generator = g;
                s.q = q;
                s.mu_o = mu;
                s.sigma_ratio = r;
                s.n_train = n_train;
                s.n_test = n_test;
                out.push_back(s);
            }
    return out;
}

EvalResult run_cell(const ScenarioSpec& scenario, ModelKind model, int replicate, std::uint64_t master_seed,
                    const FitConfig& base) {
    EvalResult r;
    r.scenario = scenario.label();
    r.spec = scenario;
    r.model = model;
    r.replicate = replicate;
    r.seed = replicate_seed(master_seed, r.scenario, replicate);
    r.spec.replicate_seed = r.seed;
    try {
        const ScenarioData data = generate_scenario(r.spec);
        FitConfig cfg = base;
        cfg.model = model;
        cfg.master_seed = master_seed;
        const FittedModel m = fit_model(data.train, cfg);
        const Prediction p = predict_model(m, data.test.X);
        r.mse = mse(data.test.y, p.mean);
        r.nlpd = nlpd(data.test.y, p.mean, p.observation_variance);
        r.fit_seconds = m.fit_seconds;
        r.converged = m.converged();
        if (!std::isfinite(r.mse) || !std::isfinite(r.nlpd)) r.error = "non-finite metric";
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

ExperimentReport run_experiment(const ExperimentGrid& grid, int parallelism) {
    if (grid.replicates < 1) throw DataError("replicates must be >= 1");
    if (grid.scenarios.empty() || grid.models.empty()) throw DataError("experiment grid is empty");
    for (const auto& s : grid.scenarios) s.validate();
    grid.base.validate();

    struct Cell {
        std::size_t scenario;
        std::size_t model;
        int replicate;
    };
    std::vector<Cell> cells;
    for (std::size_t s = 0; s < grid.scenarios.size(); ++s)
        for (std::size_t m = 0; m < grid.models.size(); ++m)
            for (int r = 0; r < grid.replicates; ++r) cells.push_back({s, m, r});

    // Each worker writes only its own slots, so the output order is fixed.
    std::vector<EvalResult> rows(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& c = cells[i];
            rows[i] = run_cell(grid.scenarios[c.scenario], grid.models[c.model], c.replicate, grid.master_seed,
                               grid.base);
        }
    };
    const int nthreads = std::clamp(parallelism, 1, static_cast<int>(cells.size()));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentReport rep;
    rep.rows = std::move(rows);
    for (const auto& r : rep.rows) rep.failures += r.error.empty() ? 0 : 1;
    rep.aggregates = aggregate(rep.rows);
    return rep;
}

namespace {

double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
    const double n = static_cast<double>(v.size());
    mean = n > 0 ? sorted_sum(v) / n : std::nan("");
    if (v.size() < 2) {
        sd = 0.0;
        return;
    }
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
    sd = std::sqrt(sorted_sum(dev) / (n - 1.0));
}

json scenario_json(const ScenarioSpec& s) {
    return json{{"label", s.label()},
                {"generator", to_string(s.generator)},
                {"q", s.q},
                {"mu_o", s.mu_o},
                {"sigma_divisor", sigma_divisor(s.sigma_ratio)},
                {"sigma", s.sigma()},
                {"n_train", s.n_train},
                {"n_test", s.n_test}};
}

json grid_json(const ExperimentGrid& grid) {
    json j;
    j["scenarios"] = json::array();
    for (const auto& s : grid.scenarios) j["scenarios"].push_back(scenario_json(s));
    j["models"] = json::array();
    for (ModelKind m : grid.models) j["models"].push_back(to_string(m));
    j["replicates"] = grid.replicates;
    j["master_seed"] = grid.master_seed;
    j["fit_config"] = json::parse(fit_config_to_json(grid.base));
    return j;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot open '" + p.string() + "' for writing");
    return out;
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<EvalResult>& rows) {
    // Keep first-appearance order of (scenario, model).
    std::vector<std::pair<std::string, ModelKind>> keys;
    std::map<std::pair<std::string, int>, std::vector<const EvalResult*>> groups;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.scenario, static_cast<int>(r.model));
        if (!groups.count(key)) keys.emplace_back(r.scenario, r.model);
        groups[key].push_back(&r);
    }
    std::vector<AggregateRow> out;
    for (const auto& [scenario, model] : keys) {
        AggregateRow a;
        a.scenario = scenario;
        a.model = model;
        std::vector<double> m, n, t;
        for (const EvalResult* r : groups[{scenario, static_cast<int>(model)}]) {
            if (!r->error.empty()) continue;
            m.push_back(r->mse);
            n.push_back(r->nlpd);
            t.push_back(r->fit_seconds);
        }
        a.count = static_cast<int>(m.size());
        mean_sd(m, a.mse_mean, a.mse_sd);
        mean_sd(n, a.nlpd_mean, a.nlpd_sd);
        double unused = 0.0;
        mean_sd(t, a.time_mean, unused);
        out.push_back(a);
    }
    return out;
}

std::string grid_hash(const ExperimentGrid& grid) {
    const std::string s = grid_json(grid).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_experiment(const std::string& dir, const ExperimentGrid& grid, const ExperimentReport& report) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());

    {
        auto out = open_out(root / "raw.csv");
        out << "scenario,model,replicate,seed,mse,nlpd,converged,error\n";
        for (const auto& r : report.rows)
            out << r.scenario << ',' << to_string(r.model) << ',' << r.replicate << ',' << r.seed << ','
                << (r.error.empty() ? format_double(r.mse) : "") << ','
                << (r.error.empty() ? format_double(r.nlpd) : "") << ',' << (r.converged ? 1 : 0) << ','
                << csv_escape(r.error) << '\n';
    }
    {
        auto out = open_out(root / "aggregate.csv");
        out << "scenario,model,count,mse_mean,mse_sd,nlpd_mean,nlpd_sd\n";
        for (const auto& a : report.aggregates)
            out << a.scenario << ',' << to_string(a.model) << ',' << a.count << ',' << format_double(a.mse_mean) << ','
                << format_double(a.mse_sd) << ',' << format_double(a.nlpd_mean) << ',' << format_double(a.nlpd_sd)
                << '\n';
    }
    {
        auto out = open_out(root / "timing.csv");
        out << "scenario,model,replicate,fit_seconds\n";
        for (const auto& r : report.rows)
            out << r.scenario << ',' << to_string(r.model) << ',' << r.replicate << ',' << format_double(r.fit_seconds)
                << '\n';
    }
    // Bar-chart data: one file per scenario, one row per model, with the
    // time means kept apart from the deterministic files.
    std::map<std::string, std::vector<const AggregateRow*>> by_scenario;
    for (const auto& a : report.aggregates) by_scenario[a.scenario].push_back(&a);
    for (const auto& [scenario, aggs] : by_scenario) {
        auto out = open_out(root / ("bars_" + scenario + ".csv"));
        out << "model,mse_mean,mse_sd,nlpd_mean,nlpd_sd\n";
        for (const AggregateRow* a : aggs)
            out << to_string(a->model) << ',' << format_double(a->mse_mean) << ',' << format_double(a->mse_sd) << ','
                << format_double(a->nlpd_mean) << ',' << format_double(a->nlpd_sd) << '\n';
    }
    {
        auto out = open_out(root / "bars_time.csv");
        out << "scenario,model,time_mean\n";
        for (const auto& a : report.aggregates)
            out << a.scenario << ',' << to_string(a.model) << ',' << format_double(a.time_mean) << '\n';
    }
    {
        json j;
        j["schema_version"] = 1;
        j["tool"] = "robustgp";
        j["version"] = ROBUSTGP_VERSION;
        j["config_hash"] = grid_hash(grid);
        j["master_seed"] = grid.master_seed;
        j["grid"] = grid_json(grid);
        j["failures"] = report.failures;
        j["aggregates"] = json::array();
        for (const auto& a : report.aggregates)
            j["aggregates"].push_back(json{{"scenario", a.scenario},
                                           {"model", to_string(a.model)},
                                           {"count", a.count},
                                           {"mse_mean", a.mse_mean},
                                           {"mse_sd", a.mse_sd},
                                           {"nlpd_mean", a.nlpd_mean},
                                           {"nlpd_sd", a.nlpd_sd}});
        j["errors"] = json::array();
        for (const auto& r : report.rows)
            if (!r.error.empty())
                j["errors"].push_back(json{{"scenario", r.scenario},
                                           {"model", to_string(r.model)},
                                           {"replicate", r.replicate},
                                           {"error", r.error}});
        auto out = open_out(root / "report.json");
        out << j.dump(2) << '\n';
    }
}

}  // namespace robustgp
