// robustgp: simulate | fit | predict | eval | experiment
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "robustgp/csv_io.hpp"
#include "robustgp/errors.hpp"
#include "robustgp/experiment.hpp"
#include "robustgp/model.hpp"
#include "robustgp/simulation.hpp"

using namespace robustgp;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void setup_logging() {
    auto logger = spdlog::stderr_color_st("robustgp");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("ROBUSTGP_LOG")) {
        const std::string v = env;
        if (v == "error") spdlog::set_level(spdlog::level::err);
        else if (v == "info") spdlog::set_level(spdlog::level::info);
        else if (v == "debug") spdlog::set_level(spdlog::level::debug);
        else spdlog::warn("ROBUSTGP_LOG='{}' not recognised (error|info|debug); using info", v);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("write to '" + path + "' failed");
}

// Flags common to the fitting commands. Empty strings / negative numbers
// mean "not given", so the config file or the defaults apply.
struct FitFlags {
    std::string config_path;
    std::string model;
    std::string kernel;
    int max_outer = -1;
    double tol = -1.0;
    std::string lambda_rule;
    std::string rab_tuning;
    double threshold = -1.0;
    long long seed = -1;

    void add(CLI::App* app) {
        app->add_option("--config", config_path, "JSON file with fit settings");
        app->add_option("--model", model, "cob | rab | plain");
        app->add_option("--kernel", kernel, "se | exp");
        app->add_option("--max-outer", max_outer, "outer iteration cap");
        app->add_option("--tol", tol, "relative objective tolerance");
        app->add_option("--lambda-rule", lambda_rule, "robust-scale | noise-capped | joint");
        app->add_option("--rab-tuning", rab_tuning, "robust-scale | fixed-shape | joint");
        app->add_option("--threshold", threshold, "lambda * sigma target for the constant bias model");
        app->add_option("--seed", seed, "master seed");
    }

    // defaults < config file < flags
    FitConfig resolve() const {
        FitConfig c;
        if (!config_path.empty()) c = fit_config_from_json(read_file(config_path), c);
        if (!model.empty()) c.model = model_kind_from_string(model);
        if (!kernel.empty()) c.family = kernel_family_from_string(kernel);
        if (max_outer >= 0) c.max_outer = max_outer;
        if (tol >= 0.0) c.tol = tol;
        if (!lambda_rule.empty()) c.lambda_rule = lambda_rule_from_string(lambda_rule);
        if (!rab_tuning.empty()) c.rab_tuning = rab_tuning_rule_from_string(rab_tuning);
        if (threshold >= 0.0) c.threshold_scale = threshold;
        if (seed >= 0) c.master_seed = static_cast<std::uint64_t>(seed);
        c.validate();
        return c;
    }
};

struct ScenarioFlags {
    std::string gen = "synth1d";
    double q = 0.1;
    double mu_o = 3.0;
    int sigma_ratio = 6;
    int n_train = 300;
    int n_test = 1000;

    void add(CLI::App* app) {
        app->add_option("--gen", gen, "synth1d | friedman");
        app->add_option("--q", q, "outlier fraction");
        app->add_option("--mu-o", mu_o, "outlier mean bias");
        app->add_option("--sigma-ratio", sigma_ratio, "noise sd = mu_o / ratio (6 or 12)");
        app->add_option("--n-train", n_train, "training rows");
        app->add_option("--n-test", n_test, "test rows");
    }

    ScenarioSpec spec() const {
        ScenarioSpec s;
        s.generator = generator_from_string(gen);
        s.q = q;
        s.mu_o = mu_o;
        s.sigma_ratio = sigma_ratio_from_divisor(sigma_ratio);
        s.n_train = n_train;
        s.n_test = n_test;
        s.validate();
        return s;
    }
};

int cmd_simulate(const ScenarioFlags& sf, long long seed, int replicate, const std::string& out) {
    ScenarioSpec s = sf.spec();
    s.replicate_seed = replicate_seed(static_cast<std::uint64_t>(seed), s.label(), replicate);
    const ScenarioData d = generate_scenario(s);
    std::filesystem::create_directories(out);
    write_dataset_csv(out + "/train.csv", d.train, &d.outlier_mask);
    write_dataset_csv(out + "/test.csv", d.test);
    spdlog::info("{} replicate {} (seed {}): wrote {} train / {} test rows to {}", s.label(), replicate,
                 s.replicate_seed, d.train.size(), d.test.size(), out);
    return kOk;
}

int cmd_fit(const FitFlags& ff, const std::string& train_path, const std::string& out, std::string log_path) {
    const FitConfig cfg = ff.resolve();
    const LabeledDataset ld = read_dataset_csv(train_path);
    spdlog::info("fitting {} ({} kernel) on {} rows x {} inputs", to_string(cfg.model), to_string(cfg.family),
                 ld.data.size(), ld.data.dim());
    const FittedModel m = fit_model(ld.data, cfg);
    write_file(out, serialize_model(m));

    json log;
    log["model"] = to_string(m.kind());
    log["config"] = json::parse(fit_config_to_json(cfg));
    log["fit_seconds"] = m.fit_seconds;
    log["converged"] = m.converged();
    log["objective_trace"] = m.objective_trace();
    if (const auto* c = std::get_if<CobFit>(&m.fit)) {
        log["signal_variance"] = c->spec.signal_variance();
        log["lengthscale"] = c->spec.lengthscale();
        log["sigma2"] = c->sigma2;
        log["lambda"] = c->lambda;
        log["tuning_trace"] = c->tuning_trace;
        std::vector<int> big;
        for (Eigen::Index i = 0; i < c->delta.size(); ++i)
            if (std::abs(c->delta[i]) > 0.5) big.push_back(static_cast<int>(i));
        log["large_bias_indices"] = big;
        log["nonzero_bias_count"] = (c->delta.array() != 0.0).count();
    } else if (const auto* r = std::get_if<RabFit>(&m.fit)) {
        log["signal_variance"] = r->spec.signal_variance();
        log["lengthscale"] = r->spec.lengthscale();
        log["mu"] = r->mu;
        log["lambdas"] = {r->lambdas.lambda1, r->lambdas.lambda2, r->lambdas.lambda3};
        log["tau_tilde_sq_median"] = m.noise_proxy();
        log["tuning_warning"] = r->tuning_warning;
        log["tuning_trace"] = r->tuning_trace;
    } else {
        const auto& p = std::get<PlainFit>(m.fit);
        log["signal_variance"] = p.spec.signal_variance();
        log["lengthscale"] = p.spec.lengthscale();
        log["sigma2"] = p.sigma2;
    }
    if (log_path.empty()) log_path = out + ".log.json";
    write_file(log_path, log.dump(2) + "\n");
    spdlog::info("fit took {:.3f} s, {} outer passes recorded; model -> {}, log -> {}", m.fit_seconds,
                 m.objective_trace().size() - 1, out, log_path);
    if (!m.converged()) spdlog::warn("fit stopped at its iteration cap before converging");
    return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& input, const std::string& out) {
    const FittedModel m = deserialize_model(read_file(model_path));
    const Matrix X = read_inputs_csv(input);
    if (X.cols() != m.train.dim())
        throw DataError("input has " + std::to_string(X.cols()) + " columns but the model expects " +
                        std::to_string(m.train.dim()));
    const Prediction p = predict_model(m, X);
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < X.cols(); ++k) header.push_back("x" + std::to_string(k + 1));
    header.insert(header.end(), {"mean", "latent_variance", "observation_variance"});
    Matrix vals(X.rows(), X.cols() + 3);
    vals.leftCols(X.cols()) = X;
    vals.col(X.cols()) = p.mean;
    vals.col(X.cols() + 1) = p.latent_variance;
    vals.col(X.cols() + 2) = p.observation_variance;
    write_csv_file(out, header, vals);
    spdlog::info("wrote {} predictions to {}", X.rows(), out);
    return kOk;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path, const std::string& out) {
    const CsvTable pred = read_csv_file(pred_path);
    const CsvTable truth = read_csv_file(truth_path);
    const int mc = pred.column("mean"), vc = pred.column("observation_variance"), yc = truth.column("y");
    if (mc < 0 || vc < 0) throw DataError("predictions need 'mean' and 'observation_variance' columns");
    if (yc < 0) throw DataError("truth file needs a 'y' column");
    if (pred.values.rows() != truth.values.rows())
        throw DataError("row count mismatch: " + std::to_string(pred.values.rows()) + " predictions vs " +
                        std::to_string(truth.values.rows()) + " truth rows");
    const Vector y = truth.values.col(yc);
    const double m = mse(y, pred.values.col(mc));
    const double n = nlpd(y, pred.values.col(mc), pred.values.col(vc));
    json j{{"rows", y.size()}, {"mse", m}, {"nlpd", n}};
    std::cout << "mse " << format_double(m) << "\nnlpd " << format_double(n) << "\n";
    if (!out.empty()) write_file(out, j.dump(2) + "\n");
    return kOk;
}

int cmd_experiment(const FitFlags& ff, const ScenarioFlags& sf, bool single, const std::string& gens,
                   const std::string& models, int replicates, int parallelism, const std::string& out) {
    ExperimentGrid g;
    g.base = ff.resolve();
    g.master_seed = g.base.master_seed;
    g.replicates = replicates;
    if (single) {
        g.scenarios.push_back(sf.spec());
    } else {
        std::stringstream ss(gens);
        for (std::string name; std::getline(ss, name, ',');) {
            const auto s = default_scenarios(generator_from_string(name), sf.n_train, sf.n_test);
            g.scenarios.insert(g.scenarios.end(), s.begin(), s.end());
        }
    }
    std::stringstream ms(models);
    for (std::string name; std::getline(ms, name, ',');) g.models.push_back(model_kind_from_string(name));
    spdlog::info("experiment: {} scenarios x {} models x {} replicates on {} threads (config {})", g.scenarios.size(),
                 g.models.size(), g.replicates, parallelism, grid_hash(g));
    const ExperimentReport rep = run_experiment(g, parallelism);
    write_experiment(out, g, rep);
    for (const auto& a : rep.aggregates)
        spdlog::info("{:<28} {:<6} n={:<3} mse {:.4f} (sd {:.4f})  nlpd {:.4f}  time {:.2f}s", a.scenario,
                     to_string(a.model), a.count, a.mse_mean, a.mse_sd, a.nlpd_mean, a.time_mean);
    for (const auto& r : rep.rows)
        if (!r.error.empty())
            spdlog::error("{} {} replicate {}: {}", r.scenario, to_string(r.model), r.replicate, r.error);
    return rep.failures ? kNumerical : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Gaussian process regression with bias terms for outliers"};
    app.require_subcommand(1);

    ScenarioFlags sim_flags;
    long long sim_seed = 0;
    int sim_rep = 0;
    std::string sim_out = ".";
    auto* sim = app.add_subcommand("simulate", "generate a train/test scenario as CSV");
    sim_flags.add(sim);
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--replicate", sim_rep, "replicate index");
    sim->add_option("--out", sim_out, "output directory (train.csv, test.csv)");

    FitFlags fit_flags;
    std::string fit_train, fit_out, fit_log;
    auto* fit = app.add_subcommand("fit", "fit a model to a training CSV");
    fit_flags.add(fit);
    fit->add_option("--train", fit_train, "training CSV (x1..xd, y)")->required();
    fit->add_option("--out", fit_out, "model file")->required();
    fit->add_option("--log", fit_log, "fit log (default <out>.log.json)");

    std::string pr_model, pr_input, pr_out;
    auto* pred = app.add_subcommand("predict", "predict with a saved model");
    pred->add_option("--model", pr_model, "model file")->required();
    pred->add_option("--input", pr_input, "CSV with x1..xd")->required();
    pred->add_option("--out", pr_out, "predictions CSV")->required();

    std::string ev_pred, ev_truth, ev_out;
    auto* ev = app.add_subcommand("eval", "MSE and NLPD of predictions against a truth CSV");
    ev->add_option("--pred", ev_pred, "predictions CSV")->required();
    ev->add_option("--truth", ev_truth, "CSV with a y column")->required();
    ev->add_option("--out", ev_out, "metrics JSON");

    FitFlags ex_fit;
    ScenarioFlags ex_sc;
    std::string ex_gens = "synth1d", ex_models = "cob,rab,plain", ex_out = "results";
    int ex_reps = 15, ex_par = 1;
    bool ex_single = false;
    auto* ex = app.add_subcommand("experiment", "run the scenario x model x replicate grid");
    ex_fit.add(ex);
    ex_sc.add(ex);
    ex->add_flag("--single", ex_single, "run only the scenario given by --gen/--q/--mu-o/--sigma-ratio");
    ex->add_option("--generators", ex_gens, "comma list for the full grid: synth1d,friedman");
    ex->add_option("--models", ex_models, "comma list of cob,rab,plain");
    ex->add_option("--replicates", ex_reps, "replicates per cell");
    ex->add_option("--parallelism", ex_par, "worker threads")->check(CLI::PositiveNumber);
    ex->add_option("--out", ex_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_flags, sim_seed, sim_rep, sim_out);
        if (fit->parsed()) return cmd_fit(fit_flags, fit_train, fit_out, fit_log);
        if (pred->parsed()) return cmd_predict(pr_model, pr_input, pr_out);
        if (ev->parsed()) return cmd_eval(ev_pred, ev_truth, ev_out);
        if (ex->parsed()) return cmd_experiment(ex_fit, ex_sc, ex_single, ex_gens, ex_models, ex_reps, ex_par, ex_out);
    } catch (const NumericalError& e) {
        spdlog::error("numerical failure: {}", e.what());
        return kNumerical;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kData;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    }
    return kUsage;
}
