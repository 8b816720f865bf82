#pragma once

#include <string>
#include <variant>

#include "robustgp/bias_models.hpp"
#include "robustgp/gp_core.hpp"

namespace robustgp {

/// A fitted model of any kind together with the data it was fitted on.
struct FittedModel {
    FitConfig config;
    Dataset train;
    std::variant<CobFit, RabFit, PlainFit> fit;
    double fit_seconds = 0.0;  // wall clock, not part of the serialized form

    ModelKind kind() const;
    /// Observation-noise variance used at test points: sigma2 for COB and the
    /// plain GP, median tau_tilde_sq for RAB.
    double noise_proxy() const;
    const std::vector<double>& objective_trace() const;
    bool converged() const;
};

struct Prediction {
    Vector mean;
    Vector latent_variance;
    Vector observation_variance;  // latent + noise_proxy
};

FittedModel fit_model(const Dataset& train, const FitConfig& config);

Prediction predict_model(const FittedModel& model, const Matrix& Xstar);

std::string serialize_model(const FittedModel& model);

/// Throws DataError on malformed or incompatible documents.
FittedModel deserialize_model(const std::string& text);

/// FitConfig <-> JSON text. Unknown keys are rejected; missing keys keep
/// the values already in `base`.
std::string fit_config_to_json(const FitConfig& config);
FitConfig fit_config_from_json(const std::string& text, FitConfig base = {});

}  // namespace robustgp
