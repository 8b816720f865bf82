#include "robustgp/bias_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "robustgp/errors.hpp"
#include "robustgp/lbfgs.hpp"

namespace robustgp {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::COB: return "cob";
        case ModelKind::RAB: return "rab";
        case ModelKind::PlainGP: return "plain";
    }
    return "cob";
}

ModelKind model_kind_from_string(std::string_view name) {
    if (name == "cob" || name == "COB") return ModelKind::COB;
    if (name == "rab" || name == "RAB") return ModelKind::RAB;
    if (name == "plain" || name == "plaingp" || name == "PlainGP") return ModelKind::PlainGP;
    throw DataError("unknown model '" + std::string(name) + "' (expected cob|rab|plain)");
}

std::string to_string(LambdaRule rule) {
    switch (rule) {
        case LambdaRule::JointDensity: return "joint";
        case LambdaRule::NoiseCapped: return "noise-capped";
        case LambdaRule::RobustScale: return "robust-scale";
    }
    return "robust-scale";
}

std::string to_string(RabTuningRule rule) {
    switch (rule) {
        case RabTuningRule::JointDensity: return "joint";
        case RabTuningRule::FixedShape: return "fixed-shape";
        case RabTuningRule::RobustScale: return "robust-scale";
    }
    return "robust-scale";
}

RabTuningRule rab_tuning_rule_from_string(std::string_view name) {
    if (name == "joint") return RabTuningRule::JointDensity;
    if (name == "fixed-shape" || name == "fixed") return RabTuningRule::FixedShape;
    if (name == "robust-scale" || name == "robust") return RabTuningRule::RobustScale;
    throw DataError("unknown random-bias tuning rule '" + std::string(name) +
                    "' (expected joint|fixed-shape|robust-scale)");
}

LambdaRule lambda_rule_from_string(std::string_view name) {
    if (name == "joint" || name == "joint-density") return LambdaRule::JointDensity;
    if (name == "noise-capped" || name == "capped") return LambdaRule::NoiseCapped;
    if (name == "robust-scale" || name == "robust") return LambdaRule::RobustScale;
    throw DataError("unknown lambda rule '" + std::string(name) + "' (expected joint|noise-capped|robust-scale)");
}

void FitConfig::validate() const {
    if (!(tol > 0.0)) throw DataError("tol must be positive");
    if (max_outer < 1 || max_inner < 1 || cd_max_sweeps < 1 || max_tuning_rounds < 1)
        throw DataError("iteration caps must be >= 1");
    if (!(lambda_min > 0.0 && lambda_min < lambda_max)) throw DataError("need 0 < lambda_min < lambda_max");
    if (!(lambda_init > 0.0)) throw DataError("lambda_init must be positive");
    const auto& b = rab_bounds;
    if (!(b.lambda1_min > 0.0 && b.lambda1_min < b.lambda1_max && b.lambda2_min > 1.0 &&
          b.lambda2_min < b.lambda2_max && b.lambda3_min > 0.0 && b.lambda3_min < b.lambda3_max))
        throw DataError("invalid random-bias tuning bounds");
    if (!(rab_lambda_init.lambda1 > 0.0 && rab_lambda_init.lambda2 > 1.0 && rab_lambda_init.lambda3 > 0.0))
        throw DataError("random-bias tuning initial values need lambda1 > 0, lambda2 > 1, lambda3 > 0");
    if (!(rab_shape > 1.0)) throw DataError("rab_shape must exceed 1");
}

namespace {

constexpr Eigen::Index kMinTrainingRows = 5;

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

double sample_variance(const Vector& y) {
    if (y.size() < 2) return 0.0;
    const double m = y.mean();
    return (y.array() - m).square().sum() / static_cast<double>(y.size() - 1);
}

void check_fit_input(const Dataset& train, const FitConfig& config) {
    config.validate();
    if (train.size() < kMinTrainingRows)
        throw DataError("need at least " + std::to_string(kMinTrainingRows) + " training rows, got " +
                        std::to_string(train.size()));
}

// Scale used for initial variances; falls back to 1 for constant responses.
double response_scale(const Vector& y) {
    const double v = sample_variance(y);
    return v > 0.0 ? v : 1.0;
}

bool relative_change_below(double prev, double cur, double tol) {
    return std::abs(prev - cur) <= tol * std::max(1.0, std::abs(prev));
}

void require_finite(double value, const char* block) {
    if (!std::isfinite(value)) throw NumericalError(std::string("non-finite objective after ") + block);
}

LbfgsOptions inner_options(const FitConfig& config) {
    LbfgsOptions o;
    o.max_iterations = config.max_inner;
    o.gtol = 1e-6;
    o.ftol = 1e-12;
    return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// Constant bias model

double rl1_objective(const Dataset& train, const KernelSpec& spec, double sigma2, const Vector& delta,
                     double lambda) {
    if (!(sigma2 > 0.0)) throw DataError("rl1_objective: sigma2 must be positive");
    if (!(lambda >= 0.0)) throw DataError("rl1_objective: lambda must be nonnegative");
    if (delta.size() != train.size()) throw DataError("rl1_objective: delta length does not match N");
    const Vector noise = Vector::Constant(train.size(), sigma2);
    const double nll = gauss_nll(train.y - delta, noisy_covariance(train.X, spec, noise));
    return nll + lambda * delta.lpNorm<1>();
}

double laplace_normalization(double lambda, Eigen::Index n) {
    return -static_cast<double>(n) * std::log(lambda / 2.0);
}

DeltaSolution solve_delta_subproblem_precision(const Matrix& precision, const Vector& y, double lambda,
                                               const Vector& delta_init, int max_sweeps, double tol) {
    const Eigen::Index n = y.size();
    if (precision.rows() != n || precision.cols() != n || delta_init.size() != n)
        throw DataError("solve_delta_subproblem: dimension mismatch");
    if (!(lambda > 0.0)) throw DataError("solve_delta_subproblem: lambda must be positive");

    DeltaSolution sol;
    sol.delta = delta_init;
    // g = P (y - delta) is the negative gradient of the smooth part.
    Vector g = precision * (y - sol.delta);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = precision(i, i);
            const double z = sol.delta[i] + g[i] / a;
            const double updated = soft_threshold(z, lambda / a);
            const double change = updated - sol.delta[i];
            if (change != 0.0) {
                sol.delta[i] = updated;
                g.noalias() -= precision.col(i) * change;
                max_change = std::max(max_change, std::abs(change));
            }
        }
        sol.sweeps = sweep + 1;
        if (max_change < tol) {
            sol.converged = true;
            break;
        }
    }
    return sol;
}

DeltaSolution solve_delta_subproblem(const CholFactor& K_factor, const Vector& y, double lambda,
                                     const Vector& delta_init, int max_sweeps, double tol) {
    return solve_delta_subproblem_precision(K_factor.inverse(), y, lambda, delta_init, max_sweeps, tol);
}

double update_lambda_cob(const Vector& delta, Eigen::Index n, double lambda_min, double lambda_max) {
    if (!(lambda_min > 0.0 && lambda_min < lambda_max)) throw DataError("update_lambda_cob: invalid bounds");
    const double l1 = delta.lpNorm<1>();
    if (!(l1 > 0.0)) return lambda_max;
    return std::clamp(static_cast<double>(n) / l1, lambda_min, lambda_max);
}

namespace {

struct CobState {
    Vector log_theta;  // log sigma2, log s2, log ls
    Vector delta;
    double lambda;
};

double cob_joint(const Dataset& train, KernelFamily family, const CobState& s) {
    const KernelSpec spec = KernelSpec::from_log(family, s.log_theta[1], s.log_theta[2]);
    return rl1_objective(train, spec, std::exp(s.log_theta[0]), s.delta, s.lambda) +
           laplace_normalization(s.lambda, train.size());
}

// Minimizes gauss_nll(residual, sigma2 I + C) over (log sigma2, log s2, log ls)
// subject to log sigma2 <= max_log_sigma2.
LbfgsResult minimize_homoscedastic(const Dataset& train, KernelFamily family, const Vector& residual,
                                   const Vector& log_theta0, const LbfgsOptions& options,
                                   double max_log_sigma2 = std::numeric_limits<double>::infinity()) {
    const Eigen::Index n = train.size();
    auto objective = [&](const Vector& p, Vector& grad) {
        if (p[0] > max_log_sigma2 + 1e-10) throw NumericalError("noise variance above its cap");
        const KernelSpec spec = KernelSpec::from_log(family, p[1], p[2]);
        const NllGradient g = nll_grad_theta(train, spec, Vector::Constant(n, std::exp(p[0])), residual);
        grad.resize(3);
        grad << g.d_log_noise.sum(), g.d_log_signal_variance, g.d_log_lengthscale;
        return g.value;
    };
    return lbfgs_minimize(objective, log_theta0, options);
}

}  // namespace

double universal_threshold(Eigen::Index n) {
    return std::sqrt(2.0 * std::log(static_cast<double>(std::max<Eigen::Index>(n, 2))));
}

namespace {

// Minimizes gauss_nll(residual, sigma2 I + C) over (log s2, log ls) with the
// noise variance held fixed.
LbfgsResult minimize_kernel(const Dataset& train, KernelFamily family, const Vector& residual, double sigma2,
                            const Vector& log_kernel0, const LbfgsOptions& options) {
    const Vector noise = Vector::Constant(train.size(), sigma2);
    auto objective = [&](const Vector& p, Vector& grad) {
        const KernelSpec spec = KernelSpec::from_log(family, p[0], p[1]);
        const NllGradient g = nll_grad_theta(train, spec, noise, residual);
        grad.resize(2);
        grad << g.d_log_signal_variance, g.d_log_lengthscale;
        return g.value;
    };
    return lbfgs_minimize(objective, log_kernel0, options);
}

// Robust noise variance from the leave-one-out residuals r_i of the points
// without a bias term. r_i has variance s2 + v_i, v_i being the leave-one-out
// predictive variance of f, so s2 is chosen such that the median of
// |r_i| / sqrt(s2 + v_i) equals the median of |z| for a standard normal z
// truncated at the threshold c. Points already carrying a bias cannot
// inflate it. Returns 0 when no point qualifies.
double loo_noise_variance(const CholFactor& factor, const Vector& residual, const Vector& delta, const Vector& noise,
                          double c) {
    const Matrix P = factor.inverse();
    const Vector alpha = factor.solve(residual);
    std::vector<double> r2, v;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
        if (delta[i] != 0.0) continue;
        const double loo = alpha[i] / P(i, i);
        r2.push_back(loo * loo);
        v.push_back(std::max(0.0, 1.0 / P(i, i) - noise[i]));
    }
    if (r2.empty()) return 0.0;
    const boost::math::normal_distribution<double> z;
    const double kept = 2.0 * boost::math::cdf(z, c) - 1.0;
    const double m = boost::math::quantile(z, 0.5 + 0.25 * kept);

    std::vector<double> u(r2.size());
    auto median_ratio = [&](double s2) {
        for (std::size_t i = 0; i < r2.size(); ++i) u[i] = r2[i] / (s2 + v[i]);
        auto mid = u.begin() + static_cast<std::ptrdiff_t>(u.size() / 2);
        std::nth_element(u.begin(), mid, u.end());
        return std::sqrt(*mid);
    };
    // median_ratio decreases in s2; bracket the root in log space.
    double hi = std::max(noise.mean(), 1e-300);
    while (median_ratio(hi) > m && hi < 1e300) hi *= 4.0;
    double lo = hi;
    while (median_ratio(lo) < m && lo > 1e-300) lo *= 0.25;
    if (median_ratio(lo) < m) return lo;
    for (int it = 0; it < 200 && hi > lo * (1.0 + 1e-12); ++it) {
        const double mid = std::sqrt(lo * hi);
        if (median_ratio(mid) > m) lo = mid; else hi = mid;
    }
    return std::sqrt(lo * hi);
}

}  // namespace

CobFit fit_cob(const Dataset& train, const FitConfig& config) {
    check_fit_input(train, config);
    const Eigen::Index n = train.size();
    const double v = response_scale(train.y);
    const bool capped = config.lambda_rule == LambdaRule::NoiseCapped;
    const bool robust = config.lambda_rule == LambdaRule::RobustScale;
    const double cap = config.threshold_scale > 0.0 ? config.threshold_scale : universal_threshold(n);
    // The robust rule starts from a low threshold and raises it step by step,
    // so a noise scale inflated by undetected outliers cannot lock them in.
    double c_cur = robust ? std::min(cap, 2.0) : cap;

    CobState s;
    s.log_theta.resize(3);
    s.log_theta << std::log(0.1 * v), std::log(v), std::log(median_pairwise_distance(train.X));
    s.delta = Vector::Zero(n);
    s.lambda = std::clamp(config.lambda_init, config.lambda_min, config.lambda_max);
    // Largest lambda allowed at the current noise level, and vice versa.
    auto lambda_ceiling = [&]() {
        if (!capped && !robust) return config.lambda_max;
        return std::clamp(c_cur / std::exp(0.5 * s.log_theta[0]), config.lambda_min, config.lambda_max);
    };
    auto log_sigma2_ceiling = [&]() {
        if (!capped) return std::numeric_limits<double>::infinity();
        return 2.0 * std::log(cap / s.lambda);
    };

    const bool constant_response = sample_variance(train.y) == 0.0;
    const LbfgsOptions opts = inner_options(config);

    if (robust && !constant_response) {
        // Start from the ordinary GP fit, then replace its (outlier inflated)
        // noise level by the robust leave-one-out scale.
        s.log_theta = minimize_homoscedastic(train, config.family, train.y, s.log_theta, opts).x;
        const KernelSpec spec = KernelSpec::from_log(config.family, s.log_theta[1], s.log_theta[2]);
        const CholFactor factor(noisy_covariance(train.X, spec, Vector::Constant(n, std::exp(s.log_theta[0]))));
        const double s2 = loo_noise_variance(factor, train.y, s.delta, Vector::Constant(n, std::exp(s.log_theta[0])),
                                             std::numeric_limits<double>::infinity());
        if (s2 > 0.0) s.log_theta[0] = std::log(s2);
    }
    s.lambda = (robust || constant_response) ? lambda_ceiling() : std::min(s.lambda, lambda_ceiling());

    CobFit fit;
    double obj = cob_joint(train, config.family, s);
    require_finite(obj, "initialization");
    bool tuning_active = !constant_response;
    int tuning_rounds = 0;
    (tuning_active ? fit.tuning_trace : fit.objective_trace).push_back(obj);

    for (int outer = 0; outer < config.max_outer; ++outer) {
        const bool tuning_was_active = tuning_active;
        // sparse bias at fixed hyperparameters
        if (!constant_response) {
            const KernelSpec spec = KernelSpec::from_log(config.family, s.log_theta[1], s.log_theta[2]);
            const CholFactor factor(noisy_covariance(train.X, spec, Vector::Constant(n, std::exp(s.log_theta[0]))));
            const DeltaSolution ds =
                solve_delta_subproblem(factor, train.y, s.lambda, s.delta, config.cd_max_sweeps, config.cd_tol);
            if (!ds.converged) fit.cd_warning = true;
            s.delta = ds.delta;
        }

        if (robust) {
            // kernel block at the robust noise level, then rescale noise and lambda together
            const Vector residual = train.y - s.delta;
            const double sigma2 = std::exp(s.log_theta[0]);
            const LbfgsResult kern =
                minimize_kernel(train, config.family, residual, sigma2, s.log_theta.tail(2), opts);
            s.log_theta.tail(2) = kern.x;
            if (tuning_active) {
                const KernelSpec spec = KernelSpec::from_log(config.family, s.log_theta[1], s.log_theta[2]);
                const CholFactor factor(noisy_covariance(train.X, spec, Vector::Constant(n, sigma2)));
                const double s2 = loo_noise_variance(factor, residual, s.delta, Vector::Constant(n, sigma2), c_cur);
                const double prev_log_sigma2 = s.log_theta[0];
                if (s2 > 0.0) s.log_theta[0] = std::log(s2);
                const bool at_target = c_cur >= cap;
                c_cur = std::min(cap, c_cur + 0.5);
                s.lambda = lambda_ceiling();
                ++tuning_rounds;
                if ((at_target && std::abs(s.log_theta[0] - prev_log_sigma2) <= config.tuning_tol) ||
                    tuning_rounds >= config.max_tuning_rounds)
                    tuning_active = false;
            }
        } else {
            if (tuning_active) {
                const double updated = update_lambda_cob(s.delta, n, config.lambda_min, lambda_ceiling());
                ++tuning_rounds;
                if (relative_change_below(s.lambda, updated, config.tuning_tol) ||
                    tuning_rounds >= config.max_tuning_rounds)
                    tuning_active = false;
                s.lambda = updated;
            }
            // noise and kernel hyperparameters at fixed delta
            const LbfgsResult theta = minimize_homoscedastic(train, config.family, train.y - s.delta, s.log_theta,
                                                             opts, log_sigma2_ceiling());
            s.log_theta = theta.x;
        }

        const double prev = obj;
        obj = cob_joint(train, config.family, s);
        require_finite(obj, "outer iteration");
        fit.outer_iterations = outer + 1;
        if (tuning_was_active) {
            // Passes that moved the tuning parameters go to tuning_trace; the
            // state they end in starts the descent trace.
            fit.tuning_trace.push_back(obj);
            if (!tuning_active) fit.objective_trace.push_back(obj);
            continue;
        }
        fit.objective_trace.push_back(obj);
        if (relative_change_below(prev, obj, config.tol)) {
            fit.converged = true;
            break;
        }
    }
    if (fit.objective_trace.empty()) fit.objective_trace.push_back(obj);

    fit.delta = s.delta;
    fit.sigma2 = std::exp(s.log_theta[0]);
    fit.spec = KernelSpec::from_log(config.family, s.log_theta[1], s.log_theta[2]);
    fit.lambda = s.lambda;
    return fit;
}

PredictiveDist cob_predict(const CobFit& fit, const Dataset& train, const Matrix& Xstar) {
    if (fit.delta.size() != train.size()) throw DataError("cob_predict: fit does not match training data");
    return predict(train, fit.spec, Vector::Constant(train.size(), fit.sigma2), train.y - fit.delta, Xstar);
}

// ---------------------------------------------------------------------------
// Random bias model

double rl2_objective(const Dataset& train, const KernelSpec& spec, double mu, const Vector& log_tau2,
                     const RabLambdas& lambdas) {
    if (log_tau2.size() != train.size()) throw DataError("rl2_objective: log_tau2 length does not match N");
    const Vector tau2 = log_tau2.array().exp().matrix();
    const Vector residual = (train.y.array() - mu).matrix();
    const double nll = gauss_nll(residual, noisy_covariance(train.X, spec, tau2));
    double reg = lambdas.lambda1 * mu * mu;
    for (Eigen::Index i = 0; i < log_tau2.size(); ++i)
        reg += lambdas.lambda2 * log_tau2[i] + lambdas.lambda3 * std::exp(-log_tau2[i]);
    return nll + reg;
}

Rl2Gradient rl2_gradient(const Dataset& train, const KernelSpec& spec, double mu, const Vector& log_tau2,
                         const RabLambdas& lambdas) {
    if (log_tau2.size() != train.size()) throw DataError("rl2_gradient: log_tau2 length does not match N");
    const Vector tau2 = log_tau2.array().exp().matrix();
    const Vector residual = (train.y.array() - mu).matrix();
    const NllGradient g = nll_grad_theta(train, spec, tau2, residual);
    Rl2Gradient out;
    double reg = lambdas.lambda1 * mu * mu;
    out.d_log_tau2.resize(log_tau2.size());
    for (Eigen::Index i = 0; i < log_tau2.size(); ++i) {
        const double inv = std::exp(-log_tau2[i]);
        reg += lambdas.lambda2 * log_tau2[i] + lambdas.lambda3 * inv;
        out.d_log_tau2[i] = g.d_log_noise[i] + lambdas.lambda2 - lambdas.lambda3 * inv;
    }
    out.value = g.value + reg;
    out.d_mu = -g.d_residual.sum() + 2.0 * lambdas.lambda1 * mu;
    out.d_log_signal_variance = g.d_log_signal_variance;
    out.d_log_lengthscale = g.d_log_lengthscale;
    return out;
}

double rab_prior_normalization(const RabLambdas& lambdas, Eigen::Index n) {
    const double shape = lambdas.lambda2 - 1.0;
    const double nn = static_cast<double>(n);
    return -0.5 * std::log(lambdas.lambda1) - nn * shape * std::log(lambdas.lambda3) + nn * std::lgamma(shape);
}

double rab_tuning_objective(double mu, const Vector& log_tau2, const RabLambdas& lambdas) {
    double v = lambdas.lambda1 * mu * mu;
    for (Eigen::Index i = 0; i < log_tau2.size(); ++i)
        v += lambdas.lambda2 * log_tau2[i] + lambdas.lambda3 * std::exp(-log_tau2[i]);
    return v + rab_prior_normalization(lambdas, log_tau2.size());
}

RabLambdaUpdate update_lambdas_rab(double mu, const Vector& log_tau2, const RabLambdaBounds& bounds) {
    if (!std::isfinite(mu) || !log_tau2.allFinite() || log_tau2.size() == 0)
        throw DataError("update_lambdas_rab: estimates must be finite and non-empty");
    RabLambdaUpdate out;
    const double n = static_cast<double>(log_tau2.size());

    // lambda1: minimizes lambda1 mu^2 - 1/2 log lambda1.
    out.lambdas.lambda1 = mu == 0.0 ? bounds.lambda1_max
                                    : std::clamp(1.0 / (2.0 * mu * mu), bounds.lambda1_min, bounds.lambda1_max);

    // (lambda2, lambda3) jointly. With shape a = lambda2 - 1 the objective is
    // jointly convex; profiling out lambda3 = N a / sum(1/t_i) leaves a 1D
    // convex problem whose derivative is
    //   D(a) = N psi(a) - N log lambda3(a) + sum log t_i.
    const double inv_sum = log_tau2.array().unaryExpr([](double l) { return std::exp(-l); }).sum();
    const double log_sum = log_tau2.sum();
    const double a_lo = bounds.lambda2_min - 1.0;
    const double a_hi = bounds.lambda2_max - 1.0;
    auto lambda3_of = [&](double a) { return std::clamp(n * a / inv_sum, bounds.lambda3_min, bounds.lambda3_max); };
    auto deriv = [&](double a) { return n * boost::math::digamma(a) - n * std::log(lambda3_of(a)) + log_sum; };

    double a;
    const double d_lo = deriv(a_lo);
    const double d_hi = deriv(a_hi);
    if (d_lo >= 0.0) {
        a = a_lo;
        out.clamped = true;
    } else if (d_hi <= 0.0) {
        a = a_hi;
        out.clamped = true;
    } else {
        // Safeguarded Newton on D(a) = 0 with a shrinking bracket.
        double lo = a_lo, hi = a_hi;
        a = std::sqrt(lo * hi);
        for (int it = 0; it < 200; ++it) {
            const double d = deriv(a);
            if (d > 0.0) hi = a; else lo = a;
            const double l3 = n * a / inv_sum;
            const bool interior = l3 > bounds.lambda3_min && l3 < bounds.lambda3_max;
            const double slope = n * boost::math::trigamma(a) - (interior ? n / a : 0.0);
            double next = slope > 0.0 ? a - d / slope : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const bool done = std::abs(next - a) <= 1e-8 * std::max(1.0, a) || (hi - lo) <= 1e-12 * std::max(1.0, a);
            a = next;
            if (done) break;
        }
    }
    out.lambdas.lambda2 = a + 1.0;
    out.lambdas.lambda3 = lambda3_of(a);
    return out;
}

RabLambdaUpdate update_lambdas_rab_fixed_shape(double mu, const Vector& log_tau2, double lambda2,
                                               const RabLambdaBounds& bounds) {
    if (!std::isfinite(mu) || !log_tau2.allFinite() || log_tau2.size() == 0)
        throw DataError("update_lambdas_rab_fixed_shape: estimates must be finite and non-empty");
    if (!(lambda2 > 1.0)) throw DataError("update_lambdas_rab_fixed_shape: lambda2 must exceed 1");
    RabLambdaUpdate out;
    const double n = static_cast<double>(log_tau2.size());
    out.lambdas.lambda1 = mu == 0.0 ? bounds.lambda1_max
                                    : std::clamp(1.0 / (2.0 * mu * mu), bounds.lambda1_min, bounds.lambda1_max);
    out.lambdas.lambda2 = lambda2;
    const double inv_sum = log_tau2.array().unaryExpr([](double l) { return std::exp(-l); }).sum();
    const double l3 = n * (lambda2 - 1.0) / inv_sum;
    out.lambdas.lambda3 = std::clamp(l3, bounds.lambda3_min, bounds.lambda3_max);
    out.clamped = out.lambdas.lambda3 != l3;
    return out;
}

namespace {

// Parameter layout: [mu, log s2, log ls, log tau2_1 .. log tau2_N].
LbfgsResult minimize_rl2(const Dataset& train, KernelFamily family, const RabLambdas& lambdas, const Vector& z0,
                         const LbfgsOptions& options) {
    const Eigen::Index n = train.size();
    auto objective = [&](const Vector& z, Vector& grad) {
        const KernelSpec spec = KernelSpec::from_log(family, z[1], z[2]);
        const Rl2Gradient g = rl2_gradient(train, spec, z[0], z.tail(n), lambdas);
        grad.resize(z.size());
        grad[0] = g.d_mu;
        grad[1] = g.d_log_signal_variance;
        grad[2] = g.d_log_lengthscale;
        grad.tail(n) = g.d_log_tau2;
        return g.value;
    };
    return lbfgs_minimize(objective, z0, options);
}

double rab_joint(const Dataset& train, KernelFamily family, const Vector& z, const RabLambdas& lambdas) {
    const Eigen::Index n = train.size();
    const KernelSpec spec = KernelSpec::from_log(family, z[1], z[2]);
    return rl2_objective(train, spec, z[0], z.tail(n), lambdas) + rab_prior_normalization(lambdas, n);
}

bool lambdas_settled(const RabLambdas& a, const RabLambdas& b, double tol) {
    auto rel = [tol](double x, double y) { return std::abs(x - y) <= tol * std::abs(x); };
    return rel(a.lambda1, b.lambda1) && rel(a.lambda2, b.lambda2) && rel(a.lambda3, b.lambda3);
}

}  // namespace

RabFit fit_rab(const Dataset& train, const FitConfig& config) {
    check_fit_input(train, config);
    const Eigen::Index n = train.size();
    const double v = response_scale(train.y);
    const bool robust = config.rab_tuning == RabTuningRule::RobustScale;
    const bool constant_response = sample_variance(train.y) == 0.0;
    const LbfgsOptions opts = inner_options(config);

    Vector z(n + 3);
    z[0] = 0.0;
    z[1] = std::log(v);
    z[2] = std::log(median_pairwise_distance(train.X));
    z.tail(n).setConstant(std::log(0.1 * v));

    RabLambdas lambdas = config.rab_lambda_init;
    // Robust noise variance of y - mu under the current fit.
    auto robust_scale = [&]() {
        const KernelSpec spec = KernelSpec::from_log(config.family, z[1], z[2]);
        const Vector noise = z.tail(n).array().exp().matrix();
        const CholFactor factor(noisy_covariance(train.X, spec, noise));
        return loo_noise_variance(factor, (train.y.array() - z[0]).matrix(), Vector::Zero(n), noise,
                                  std::numeric_limits<double>::infinity());
    };
    auto anchor = [&](double s2) {
        lambdas.lambda2 = config.rab_shape;
        lambdas.lambda3 = std::clamp(config.rab_shape * s2, config.rab_bounds.lambda3_min, config.rab_bounds.lambda3_max);
    };
    double log_s2 = 0.0;
    if (robust) {
        // Start from the ordinary GP fit with its noise replaced by the robust scale.
        Vector p(3);
        p << z.tail(n)[0], z[1], z[2];
        if (!constant_response) p = minimize_homoscedastic(train, config.family, train.y, p, opts).x;
        z[1] = p[1];
        z[2] = p[2];
        z.tail(n).setConstant(p[0]);
        const double s2 = constant_response ? 0.0 : robust_scale();
        log_s2 = s2 > 0.0 ? std::log(s2) : p[0];
        z.tail(n).setConstant(log_s2);
        lambdas.lambda1 = config.rab_bounds.lambda1_max;
        anchor(std::exp(log_s2));
    }

    RabFit fit;
    double obj = rab_joint(train, config.family, z, lambdas);
    require_finite(obj, "initialization");
    bool tuning_active = true;
    int tuning_rounds = 0;
    fit.tuning_trace.push_back(obj);

    for (int outer = 0; outer < config.max_outer; ++outer) {
        const bool tuning_was_active = tuning_active;
        z = minimize_rl2(train, config.family, lambdas, z, opts).x;

        if (tuning_active) {
            ++tuning_rounds;
            bool settled;
            if (robust) {
                const double s2 = robust_scale();
                const double prev = log_s2;
                if (s2 > 0.0) log_s2 = std::log(s2);
                const RabLambdaUpdate upd =
                    update_lambdas_rab_fixed_shape(z[0], z.tail(n), config.rab_shape, config.rab_bounds);
                const bool l1_settled = relative_change_below(lambdas.lambda1, upd.lambdas.lambda1, config.tuning_tol);
                lambdas.lambda1 = upd.lambdas.lambda1;
                anchor(std::exp(log_s2));
                settled = l1_settled && std::abs(log_s2 - prev) <= config.tuning_tol;
            } else {
                const RabLambdaUpdate upd =
                    config.rab_tuning == RabTuningRule::FixedShape
                        ? update_lambdas_rab_fixed_shape(z[0], z.tail(n), lambdas.lambda2, config.rab_bounds)
                        : update_lambdas_rab(z[0], z.tail(n), config.rab_bounds);
                if (upd.clamped) fit.tuning_warning = true;
                settled = lambdas_settled(lambdas, upd.lambdas, config.tuning_tol);
                lambdas = upd.lambdas;
            }
            if (settled || tuning_rounds >= config.max_tuning_rounds) tuning_active = false;
        }

        const double prev = obj;
        obj = rab_joint(train, config.family, z, lambdas);
        require_finite(obj, "outer iteration");
        fit.outer_iterations = outer + 1;
        if (tuning_was_active) {
            fit.tuning_trace.push_back(obj);
            if (!tuning_active) fit.objective_trace.push_back(obj);
            continue;
        }
        fit.objective_trace.push_back(obj);
        if (relative_change_below(prev, obj, config.tol)) {
            fit.converged = true;
            break;
        }
    }
    if (fit.objective_trace.empty()) fit.objective_trace.push_back(obj);

    fit.mu = z[0];
    fit.spec = KernelSpec::from_log(config.family, z[1], z[2]);
    fit.tau_tilde_sq = z.tail(n).array().exp().matrix();
    fit.lambdas = lambdas;
    return fit;
}

PredictiveDist rab_predict(const RabFit& fit, const Dataset& train, const Matrix& Xstar) {
    if (fit.tau_tilde_sq.size() != train.size()) throw DataError("rab_predict: fit does not match training data");
    return predict(train, fit.spec, fit.tau_tilde_sq, (train.y.array() - fit.mu).matrix(), Xstar);
}

// ---------------------------------------------------------------------------
// Plain GP

PlainFit fit_plain_gp(const Dataset& train, const FitConfig& config) {
    check_fit_input(train, config);
    const double v = response_scale(train.y);
    Vector p(3);
    p << std::log(0.1 * v), std::log(v), std::log(median_pairwise_distance(train.X));

    PlainFit fit;
    LbfgsOptions opts;
    opts.max_iterations = config.max_inner * config.max_outer;
    opts.gtol = 1e-6;
    opts.ftol = 1e-14;
    const LbfgsResult r = minimize_homoscedastic(train, config.family, train.y, p, opts);
    fit.sigma2 = std::exp(r.x[0]);
    fit.spec = KernelSpec::from_log(config.family, r.x[1], r.x[2]);
    fit.objective_trace = {r.f};
    fit.converged = r.converged;
    return fit;
}

PredictiveDist plain_predict(const PlainFit& fit, const Dataset& train, const Matrix& Xstar) {
    return predict(train, fit.spec, Vector::Constant(train.size(), fit.sigma2), train.y, Xstar);
}

}  // namespace robustgp
