#include "robustgp/model.hpp"

#include <algorithm>
#include <chrono>
#include <vector>

#include "json.hpp"
#include "robustgp/errors.hpp"

namespace robustgp {

using json = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

json vec_to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vector vec_from_json(const json& a, const char* what) {
    if (!a.is_array()) throw DataError(std::string("model document: '") + what + "' must be an array");
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw DataError(std::string("model document: non-numeric entry in '") + what + "'");
        v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    }
    return v;
}

json kernel_to_json(const KernelSpec& spec) {
    return json{{"family", to_string(spec.family())},
                {"log_signal_variance", spec.log_signal_variance()},
                {"log_lengthscale", spec.log_lengthscale()}};
}

KernelSpec kernel_from_json(const json& j) {
    return KernelSpec::from_log(kernel_family_from_string(j.at("family").get<std::string>()),
                                j.at("log_signal_variance").get<double>(), j.at("log_lengthscale").get<double>());
}

std::vector<double> trace_from_json(const json& j) {
    const Vector v = vec_from_json(j, "objective_trace");
    return {v.data(), v.data() + v.size()};
}

json config_json(const FitConfig& c) {
    const auto& b = c.rab_bounds;
    return json{
        {"model", to_string(c.model)},
        {"family", to_string(c.family)},
        {"max_outer", c.max_outer},
        {"tol", c.tol},
        {"max_inner", c.max_inner},
        {"cd_max_sweeps", c.cd_max_sweeps},
        {"cd_tol", c.cd_tol},
        {"lambda_init", c.lambda_init},
        {"lambda_min", c.lambda_min},
        {"lambda_max", c.lambda_max},
        {"lambda_rule", to_string(c.lambda_rule)},
        {"threshold_scale", c.threshold_scale},
        {"rab_tuning", to_string(c.rab_tuning)},
        {"rab_shape", c.rab_shape},
        {"rab_lambda_init",
         {{"lambda1", c.rab_lambda_init.lambda1},
          {"lambda2", c.rab_lambda_init.lambda2},
          {"lambda3", c.rab_lambda_init.lambda3}}},
        {"rab_bounds",
         {{"lambda1", {b.lambda1_min, b.lambda1_max}},
          {"lambda2", {b.lambda2_min, b.lambda2_max}},
          {"lambda3", {b.lambda3_min, b.lambda3_max}}}},
        {"max_tuning_rounds", c.max_tuning_rounds},
        {"tuning_tol", c.tuning_tol},
        {"master_seed", c.master_seed},
    };
}

void read_pair(const json& j, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const json& p = j.at(key);
    if (!p.is_array() || p.size() != 2) throw DataError(std::string("rab_bounds.") + key + " must be [min, max]");
    lo = p[0].get<double>();
    hi = p[1].get<double>();
}

FitConfig config_from(const json& j, FitConfig c) {
    if (!j.is_object()) throw DataError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "model") c.model = model_kind_from_string(value.get<std::string>());
        else if (key == "family") c.family = kernel_family_from_string(value.get<std::string>());
        else if (key == "max_outer") c.max_outer = value.get<int>();
        else if (key == "tol") c.tol = value.get<double>();
        else if (key == "max_inner") c.max_inner = value.get<int>();
        else if (key == "cd_max_sweeps") c.cd_max_sweeps = value.get<int>();
        else if (key == "cd_tol") c.cd_tol = value.get<double>();
        else if (key == "lambda_init") c.lambda_init = value.get<double>();
        else if (key == "lambda_min") c.lambda_min = value.get<double>();
        else if (key == "lambda_max") c.lambda_max = value.get<double>();
        else if (key == "lambda_rule") c.lambda_rule = lambda_rule_from_string(value.get<std::string>());
        else if (key == "threshold_scale") c.threshold_scale = value.get<double>();
        else if (key == "rab_tuning") c.rab_tuning = rab_tuning_rule_from_string(value.get<std::string>());
        else if (key == "rab_shape") c.rab_shape = value.get<double>();
        else if (key == "rab_lambda_init") {
            if (value.contains("lambda1")) c.rab_lambda_init.lambda1 = value.at("lambda1").get<double>();
            if (value.contains("lambda2")) c.rab_lambda_init.lambda2 = value.at("lambda2").get<double>();
            if (value.contains("lambda3")) c.rab_lambda_init.lambda3 = value.at("lambda3").get<double>();
        } else if (key == "rab_bounds") {
            auto& b = c.rab_bounds;
            read_pair(value, "lambda1", b.lambda1_min, b.lambda1_max);
            read_pair(value, "lambda2", b.lambda2_min, b.lambda2_max);
            read_pair(value, "lambda3", b.lambda3_min, b.lambda3_max);
        } else if (key == "max_tuning_rounds") c.max_tuning_rounds = value.get<int>();
        else if (key == "tuning_tol") c.tuning_tol = value.get<double>();
        else if (key == "master_seed") c.master_seed = value.get<std::uint64_t>();
        else throw DataError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

}  // namespace

ModelKind FittedModel::kind() const {
    if (std::holds_alternative<CobFit>(fit)) return ModelKind::COB;
    if (std::holds_alternative<RabFit>(fit)) return ModelKind::RAB;
    return ModelKind::PlainGP;
}

double FittedModel::noise_proxy() const {
    if (const auto* c = std::get_if<CobFit>(&fit)) return c->sigma2;
    if (const auto* p = std::get_if<PlainFit>(&fit)) return p->sigma2;
    const Vector& t = std::get<RabFit>(fit).tau_tilde_sq;
    std::vector<double> v(t.data(), t.data() + t.size());
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

const std::vector<double>& FittedModel::objective_trace() const {
    return std::visit([](const auto& f) -> const std::vector<double>& { return f.objective_trace; }, fit);
}

bool FittedModel::converged() const {
    return std::visit([](const auto& f) { return f.converged; }, fit);
}

FittedModel fit_model(const Dataset& train, const FitConfig& config) {
    FittedModel m;
    m.config = config;
    m.train = train;
    const auto t0 = std::chrono::steady_clock::now();
    switch (config.model) {
        case ModelKind::COB: m.fit = fit_cob(train, config); break;
        case ModelKind::RAB: m.fit = fit_rab(train, config); break;
        case ModelKind::PlainGP: m.fit = fit_plain_gp(train, config); break;
    }
    m.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

Prediction predict_model(const FittedModel& model, const Matrix& Xstar) {
    PredictiveDist d;
    if (const auto* c = std::get_if<CobFit>(&model.fit)) d = cob_predict(*c, model.train, Xstar);
    else if (const auto* r = std::get_if<RabFit>(&model.fit)) d = rab_predict(*r, model.train, Xstar);
    else d = plain_predict(std::get<PlainFit>(model.fit), model.train, Xstar);
    Prediction p;
    p.mean = std::move(d.mean);
    p.latent_variance = std::move(d.variance);
    p.observation_variance = (p.latent_variance.array() + model.noise_proxy()).matrix();
    return p;
}

std::string serialize_model(const FittedModel& model) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["model"] = to_string(model.kind());
    j["config"] = config_json(model.config);
    json params;
    if (const auto* c = std::get_if<CobFit>(&model.fit)) {
        params = json{{"kernel", kernel_to_json(c->spec)},
                      {"sigma2", c->sigma2},
                      {"lambda", c->lambda},
                      {"delta", vec_to_json(c->delta)},
                      {"converged", c->converged},
                      {"outer_iterations", c->outer_iterations},
                      {"cd_warning", c->cd_warning},
                      {"objective_trace", c->objective_trace},
                      {"tuning_trace", c->tuning_trace}};
    } else if (const auto* r = std::get_if<RabFit>(&model.fit)) {
        params = json{{"kernel", kernel_to_json(r->spec)},
                      {"mu", r->mu},
                      {"tau_tilde_sq", vec_to_json(r->tau_tilde_sq)},
                      {"lambdas", {r->lambdas.lambda1, r->lambdas.lambda2, r->lambdas.lambda3}},
                      {"converged", r->converged},
                      {"outer_iterations", r->outer_iterations},
                      {"tuning_warning", r->tuning_warning},
                      {"objective_trace", r->objective_trace},
                      {"tuning_trace", r->tuning_trace}};
    } else {
        const auto& p = std::get<PlainFit>(model.fit);
        params = json{{"kernel", kernel_to_json(p.spec)},
                      {"sigma2", p.sigma2},
                      {"converged", p.converged},
                      {"objective_trace", p.objective_trace}};
    }
    j["params"] = params;
    json X = json::array();
    for (Eigen::Index i = 0; i < model.train.X.rows(); ++i) X.push_back(vec_to_json(model.train.X.row(i).transpose()));
    j["train"] = json{{"X", X}, {"y", vec_to_json(model.train.y)}};
    return j.dump(1) + "\n";
}

FittedModel deserialize_model(const std::string& text) {
    const json j = parse(text, "model document");
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            throw DataError("unsupported model schema_version " + j.at("schema_version").dump());
        FittedModel m;
        m.config = config_from(j.at("config"), FitConfig{});

        const json& tx = j.at("train").at("X");
        const Vector y = vec_from_json(j.at("train").at("y"), "train.y");
        if (!tx.is_array() || tx.size() != static_cast<std::size_t>(y.size()) || tx.empty())
            throw DataError("model document: train.X and train.y disagree in length");
        const std::size_t d = tx[0].size();
        Matrix X(y.size(), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < tx.size(); ++i) {
            const Vector row = vec_from_json(tx[i], "train.X");
            if (static_cast<std::size_t>(row.size()) != d) throw DataError("model document: ragged train.X");
            X.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        m.train = Dataset(std::move(X), y);

        const json& p = j.at("params");
        const ModelKind kind = model_kind_from_string(j.at("model").get<std::string>());
        if (kind == ModelKind::COB) {
            CobFit c;
            c.spec = kernel_from_json(p.at("kernel"));
            c.sigma2 = p.at("sigma2").get<double>();
            c.lambda = p.at("lambda").get<double>();
            c.delta = vec_from_json(p.at("delta"), "delta");
            c.converged = p.at("converged").get<bool>();
            c.outer_iterations = p.at("outer_iterations").get<int>();
            c.cd_warning = p.at("cd_warning").get<bool>();
            c.objective_trace = trace_from_json(p.at("objective_trace"));
            c.tuning_trace = trace_from_json(p.at("tuning_trace"));
            if (c.delta.size() != m.train.size()) throw DataError("model document: delta length does not match N");
            m.fit = std::move(c);
        } else if (kind == ModelKind::RAB) {
            RabFit r;
            r.spec = kernel_from_json(p.at("kernel"));
            r.mu = p.at("mu").get<double>();
            r.tau_tilde_sq = vec_from_json(p.at("tau_tilde_sq"), "tau_tilde_sq");
            const Vector l = vec_from_json(p.at("lambdas"), "lambdas");
            if (l.size() != 3) throw DataError("model document: lambdas must have 3 entries");
            r.lambdas = RabLambdas{l[0], l[1], l[2]};
            r.converged = p.at("converged").get<bool>();
            r.outer_iterations = p.at("outer_iterations").get<int>();
            r.tuning_warning = p.at("tuning_warning").get<bool>();
            r.objective_trace = trace_from_json(p.at("objective_trace"));
            r.tuning_trace = trace_from_json(p.at("tuning_trace"));
            if (r.tau_tilde_sq.size() != m.train.size())
                throw DataError("model document: tau_tilde_sq length does not match N");
            m.fit = std::move(r);
        } else {
            PlainFit f;
            f.spec = kernel_from_json(p.at("kernel"));
            f.sigma2 = p.at("sigma2").get<double>();
            f.converged = p.at("converged").get<bool>();
            f.objective_trace = trace_from_json(p.at("objective_trace"));
            m.fit = std::move(f);
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model document: ") + e.what());
    }
}

std::string fit_config_to_json(const FitConfig& config) { return config_json(config).dump(2) + "\n"; }

FitConfig fit_config_from_json(const std::string& text, FitConfig base) {
    const json j = parse(text, "config");
    try {
        return config_from(j, base);
    } catch (const json::exception& e) {
        throw DataError(std::string("config: ") + e.what());
    }
}

}  // namespace robustgp
