#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "robustgp/gp_core.hpp"
#include "robustgp/kernels.hpp"

namespace robustgp {

enum class ModelKind { COB, RAB, PlainGP };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

/// Box constraints for the random-bias tuning triple.
struct RabLambdaBounds {
    double lambda1_min = 1e-6, lambda1_max = 1e6;
    double lambda2_min = 1.0 + 1e-3, lambda2_max = 1e3;
    double lambda3_min = 1e-6, lambda3_max = 1e6;
};

struct RabLambdas {
    double lambda1 = 1.0;
    double lambda2 = 2.0;  // inverse-gamma shape is lambda2 - 1
    double lambda3 = 1.0;
};

/// How the constant-bias tuning parameter is updated.
///  JointDensity: lambda = N / sum|delta| (stationary point of the joint
///    negative log density with Laplace normalization).
///  NoiseCapped: the same update under the joint constraint
///    lambda * sigma <= threshold_scale, which keeps the soft threshold at the
///    universal noise level instead of letting it run off to lambda_max.
///  RobustScale: sigma is a truncation-corrected median |leave-one-out
///    residual| over points without a bias term, and lambda =
///    c / sigma with c raised from 2 to threshold_scale in steps of 0.5; only the kernel parameters are fitted by
///    likelihood. Default.
enum class LambdaRule { JointDensity, NoiseCapped, RobustScale };

std::string to_string(LambdaRule rule);
LambdaRule lambda_rule_from_string(std::string_view name);

/// Random-bias tuning. JointDensity updates all three lambdas; on most data
/// the shape runs to its upper bound, which forces all tau_tilde equal.
/// FixedShape keeps lambda2 at its initial value and updates lambda1 and
/// lambda3 only. Profiling lambda3 out still rewards shrinking every tau
/// together, so inlier variances collapse on clean data.
/// RobustScale fixes lambda2 = rab_shape and sets lambda3 = lambda2 s2, which
/// puts the prior mode of every tau_tilde^2 at s2, the robust leave-one-out
/// noise variance (see LambdaRule::RobustScale). s2 is re-estimated until it
/// settles. lambda1 follows its stationary point. Default.
enum class RabTuningRule { JointDensity, FixedShape, RobustScale };

std::string to_string(RabTuningRule rule);
RabTuningRule rab_tuning_rule_from_string(std::string_view name);

struct FitConfig {
    ModelKind model = ModelKind::COB;
    KernelFamily family = KernelFamily::SquaredExponential;
    int max_outer = 100;
    double tol = 1e-6;  // relative change of the joint objective
    int max_inner = 25;  // quasi-Newton iterations per outer pass
    int cd_max_sweeps = 500;
    double cd_tol = 1e-8;
    double lambda_init = 1.0;
    double lambda_min = 1e-4;
    double lambda_max = 1e6;
    LambdaRule lambda_rule = LambdaRule::RobustScale;
    double threshold_scale = 3.0;  // lambda * sigma target; <= 0 means sqrt(2 log N)
    RabTuningRule rab_tuning = RabTuningRule::RobustScale;
    double rab_shape = 5.0;  // lambda2 under RabTuningRule::RobustScale
    RabLambdas rab_lambda_init{};
    RabLambdaBounds rab_bounds{};
    int max_tuning_rounds = 20;
    double tuning_tol = 1e-3;  // relative change of every lambda
    std::uint64_t master_seed = 0;

    /// Throws DataError on out-of-range settings.
    void validate() const;
};

struct CobFit {
    Vector delta;
    double sigma2 = 1.0;
    KernelSpec spec;
    double lambda = 1.0;
    // Joint negative log density (RL1 plus the Laplace normalization) per
    // outer pass. Passes that still change lambda or sigma through the
    // tuning rule are kept in tuning_trace; objective_trace starts at the
    // state the last of them leaves and is non-increasing.
    std::vector<double> objective_trace;
    std::vector<double> tuning_trace;
    bool converged = false;
    int outer_iterations = 0;
    bool cd_warning = false;  // some delta subproblem hit its sweep cap
};

struct RabFit {
    double mu = 0.0;
    Vector tau_tilde_sq;
    KernelSpec spec;
    RabLambdas lambdas;
    // Same split as CobFit.
    std::vector<double> objective_trace;
    std::vector<double> tuning_trace;
    bool converged = false;
    int outer_iterations = 0;
    bool tuning_warning = false;  // a tuning root was clamped to a bound
};

/// Ordinary GP with homoscedastic noise, no bias terms.
struct PlainFit {
    double sigma2 = 1.0;
    KernelSpec spec;
    std::vector<double> objective_trace;
    bool converged = false;
};

// ---------------------------------------------------------------------------
// Constant bias model

/// gauss_nll(y - delta, sigma2 I + C_xx) + lambda * |delta|_1
double rl1_objective(const Dataset& train, const KernelSpec& spec, double sigma2, const Vector& delta,
                     double lambda);

/// Negative log of the Laplace prior normalization, -N log(lambda / 2).
double laplace_normalization(double lambda, Eigen::Index n);

struct DeltaSolution {
    Vector delta;
    int sweeps = 0;
    bool converged = false;
};

/// argmin_delta 1/2 (y - delta)^T P (y - delta) + lambda |delta|_1 for a
/// symmetric positive definite precision matrix P, by cyclic coordinate
/// descent with exact soft-threshold updates.
DeltaSolution solve_delta_subproblem_precision(const Matrix& precision, const Vector& y, double lambda,
                                               const Vector& delta_init, int max_sweeps = 500,
                                               double tol = 1e-8);

/// Same problem with P = K^{-1} given the factor of K.
DeltaSolution solve_delta_subproblem(const CholFactor& K_factor, const Vector& y, double lambda,
                                     const Vector& delta_init, int max_sweeps = 500, double tol = 1e-8);

/// Minimizer of lambda * sum|delta_i| - N log(lambda / 2) on [lambda_min, lambda_max].
double update_lambda_cob(const Vector& delta, Eigen::Index n, double lambda_min = 1e-4,
                         double lambda_max = 1e6);

/// sqrt(2 log N): cap on lambda * sigma under LambdaRule::NoiseCapped.
double universal_threshold(Eigen::Index n);

CobFit fit_cob(const Dataset& train, const FitConfig& config);

PredictiveDist cob_predict(const CobFit& fit, const Dataset& train, const Matrix& Xstar);

// ---------------------------------------------------------------------------
// Random bias model

/// gauss_nll(y - mu 1, D + C_xx) + lambda1 mu^2 + sum_i lambda2 log t_i + lambda3 / t_i
/// with t_i = exp(log_tau2_i).
double rl2_objective(const Dataset& train, const KernelSpec& spec, double mu, const Vector& log_tau2,
                     const RabLambdas& lambdas);

struct Rl2Gradient {
    double value = 0.0;
    double d_mu = 0.0;
    double d_log_signal_variance = 0.0;
    double d_log_lengthscale = 0.0;
    Vector d_log_tau2;
};

Rl2Gradient rl2_gradient(const Dataset& train, const KernelSpec& spec, double mu, const Vector& log_tau2,
                         const RabLambdas& lambdas);

/// Negative log normalization of the mu and per-point tau priors:
/// -1/2 log lambda1 - N (lambda2 - 1) log lambda3 + N log Gamma(lambda2 - 1).
double rab_prior_normalization(const RabLambdas& lambdas, Eigen::Index n);

/// Terms of the joint negative log density that depend on the tuning
/// parameters (penalties plus normalization); the likelihood is omitted.
double rab_tuning_objective(double mu, const Vector& log_tau2, const RabLambdas& lambdas);

struct RabLambdaUpdate {
    RabLambdas lambdas;
    bool clamped = false;  // the shape root was not bracketed inside the bounds
};

/// Coordinate-wise minimizer of rab_tuning_objective over the bounded triple.
RabLambdaUpdate update_lambdas_rab(double mu, const Vector& log_tau2, const RabLambdaBounds& bounds = {});

/// lambda1 and lambda3 at their stationary points with lambda2 held fixed.
RabLambdaUpdate update_lambdas_rab_fixed_shape(double mu, const Vector& log_tau2, double lambda2,
                                               const RabLambdaBounds& bounds = {});

RabFit fit_rab(const Dataset& train, const FitConfig& config);

/// Latent posterior with noise diag = tau_tilde_sq and residual y - mu. The
/// bias mean is not added back to the returned mean.
PredictiveDist rab_predict(const RabFit& fit, const Dataset& train, const Matrix& Xstar);

// ---------------------------------------------------------------------------
// Plain GP baseline

PlainFit fit_plain_gp(const Dataset& train, const FitConfig& config);

PredictiveDist plain_predict(const PlainFit& fit, const Dataset& train, const Matrix& Xstar);

}  // namespace robustgp
