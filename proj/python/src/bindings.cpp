#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "robustgp/errors.hpp"
#include "robustgp/experiment.hpp"
#include "robustgp/model.hpp"
#include "robustgp/simulation.hpp"

namespace py = pybind11;
using namespace robustgp;

namespace {

FitConfig make_config(const std::string& model, const std::string& kernel, const std::string& config_json) {
    FitConfig c;
    if (!config_json.empty()) c = fit_config_from_json(config_json, c);
    c.model = model_kind_from_string(model);
    c.family = kernel_family_from_string(kernel);
    c.validate();
    return c;
}

py::dict model_params(const FittedModel& m) {
    py::dict d;
    d["model"] = to_string(m.kind());
    if (const auto* c = std::get_if<CobFit>(&m.fit)) {
        d["signal_variance"] = c->spec.signal_variance();
        d["lengthscale"] = c->spec.lengthscale();
        d["sigma2"] = c->sigma2;
        d["lambda"] = c->lambda;
        d["delta"] = c->delta;
    } else if (const auto* r = std::get_if<RabFit>(&m.fit)) {
        d["signal_variance"] = r->spec.signal_variance();
        d["lengthscale"] = r->spec.lengthscale();
        d["mu"] = r->mu;
        d["tau_tilde_sq"] = r->tau_tilde_sq;
        d["lambdas"] = py::make_tuple(r->lambdas.lambda1, r->lambdas.lambda2, r->lambdas.lambda3);
    } else {
        const auto& p = std::get<PlainFit>(m.fit);
        d["signal_variance"] = p.spec.signal_variance();
        d["lengthscale"] = p.spec.lengthscale();
        d["sigma2"] = p.sigma2;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_robustgp, m) {
    m.doc() = "Gaussian process regression with constant or random bias terms for outliers";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<FittedModel>(m, "Model")
        .def_property_readonly("kind", [](const FittedModel& f) { return to_string(f.kind()); })
        .def_property_readonly("converged", &FittedModel::converged)
        .def_property_readonly("objective_trace", &FittedModel::objective_trace)
        .def_property_readonly("noise_proxy", &FittedModel::noise_proxy)
        .def_readonly("fit_seconds", &FittedModel::fit_seconds)
        .def_property_readonly("params", &model_params)
        .def(
            "predict",
            [](const FittedModel& f, const Matrix& Xstar) {
                const Prediction p = predict_model(f, Xstar);
                return py::make_tuple(p.mean, p.latent_variance, p.observation_variance);
            },
            py::arg("X"), "Returns (mean, latent_variance, observation_variance).")
        .def("to_json", &serialize_model)
        .def_static("from_json", &deserialize_model, py::arg("text"));

    m.def(
        "fit",
        [](const Matrix& X, const Vector& y, const std::string& model, const std::string& kernel,
           const std::string& config) {
            const FitConfig c = make_config(model, kernel, config);
            Dataset d(X, y);
            py::gil_scoped_release release;
            return fit_model(d, c);
        },
        py::arg("X"), py::arg("y"), py::arg("model") = "cob", py::arg("kernel") = "se", py::arg("config") = "",
        "Fit a model. `config` is an optional JSON string of fit settings.");

    m.def(
        "simulate",
        [](const std::string& gen, double q, double mu_o, int sigma_ratio, int n_train, int n_test,
           std::uint64_t seed, int replicate) {
            ScenarioSpec s;
            s.generator = generator_from_string(gen);
            s.q = q;
            s.mu_o = mu_o;
            s.sigma_ratio = sigma_ratio_from_divisor(sigma_ratio);
            s.n_train = n_train;
            s.n_test = n_test;
            s.replicate_seed = replicate_seed(seed, s.label(), replicate);
            const ScenarioData d = generate_scenario(s);
            py::dict out;
            out["X_train"] = d.train.X;
            out["y_train"] = d.train.y;
            out["outlier_mask"] = d.outlier_mask;
            out["X_test"] = d.test.X;
            out["y_test"] = d.test.y;
            out["f_test"] = d.test_f;
            out["label"] = s.label();
            return out;
        },
        py::arg("gen") = "synth1d", py::arg("q") = 0.1, py::arg("mu_o") = 3.0, py::arg("sigma_ratio") = 6,
        py::arg("n_train") = 300, py::arg("n_test") = 1000, py::arg("seed") = 0, py::arg("replicate") = 0);

    m.def("mse", &mse, py::arg("y_true"), py::arg("mean"));
    m.def("nlpd", &nlpd, py::arg("y_true"), py::arg("mean"), py::arg("var"));
    m.def(
        "gauss_nll", [](const Vector& r, const Matrix& K) { return gauss_nll(r, K); }, py::arg("residual"),
        py::arg("K"));
    m.def(
        "kernel_matrix",
        [](const std::string& family, double sv, double ls, const Matrix& X) {
            return kernel_matrix(KernelSpec(kernel_family_from_string(family), sv, ls), X);
        },
        py::arg("family"), py::arg("signal_variance"), py::arg("lengthscale"), py::arg("X"));
}
