#include "robustgp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "robustgp/errors.hpp"

namespace robustgp {

std::string to_string(Generator g) {
    return g == Generator::Synthetic1D ? "synth1d" : "friedman";
}

Generator generator_from_string(std::string_view name) {
    if (name == "synth1d" || name == "1d") return Generator::Synthetic1D;
    if (name == "friedman" || name == "friedman10d") return Generator::Friedman10D;
    throw DataError("unknown generator '" + std::string(name) + "' (expected synth1d|friedman)");
}

int sigma_divisor(SigmaRatio r) { return r == SigmaRatio::Sixth ? 6 : 12; }

SigmaRatio sigma_ratio_from_divisor(int divisor) {
    if (divisor == 6) return SigmaRatio::Sixth;
    if (divisor == 12) return SigmaRatio::Twelfth;
    throw DataError("sigma ratio must be 6 or 12, got " + std::to_string(divisor));
}

void ScenarioSpec::validate() const {
    if (!(q > 0.0 && q < 1.0)) throw DataError("outlier fraction q must lie in (0, 1)");
    if (!(mu_o > 0.0) || !std::isfinite(mu_o)) throw DataError("outlier mean bias mu_o must be positive");
    if (n_train < 1 || n_test < 1) throw DataError("n_train and n_test must be >= 1");
}

std::string ScenarioSpec::label() const {
    std::ostringstream os;
    os << to_string(generator) << "_q" << q << "_mu" << mu_o << "_s" << sigma_divisor(sigma_ratio);
    return os.str();
}

double f_synth1d(double x) {
    return 0.3 + 0.4 * x + 0.5 * std::sin(2.7 * x) + 1.1 / (1.0 + x * x);
}

double f_friedman(const Eigen::Ref<const Vector>& x) {
    if (x.size() != 10) throw DataError("f_friedman expects 10 inputs, got " + std::to_string(x.size()));
    const double t = x[2] - 0.5;
    return 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * t * t + 10.0 * x[3] + 5.0 * x[4];
}

namespace {

Matrix draw_inputs(std::mt19937_64& rng, Generator g, int n) {
    if (g == Generator::Synthetic1D) {
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        Matrix X(n, 1);
        for (int i = 0; i < n; ++i) X(i, 0) = u(rng);
        return X;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix X(n, 10);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 10; ++k) X(i, k) = u(rng);
    return X;
}

Vector evaluate_f(Generator g, const Matrix& X) {
    Vector f(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        f[i] = g == Generator::Synthetic1D ? f_synth1d(X(i, 0)) : f_friedman(X.row(i).transpose());
    return f;
}

// Sums in sorted order so the result does not depend on the row order.
double order_independent_mean(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double v : terms) s += v;
    return s / static_cast<double>(terms.size());
}

}  // namespace

ScenarioData generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.replicate_seed);
    const double sigma = spec.sigma();

    ScenarioData out;
    Matrix Xtr = draw_inputs(rng, spec.generator, spec.n_train);
    out.train_f = evaluate_f(spec.generator, Xtr);
    std::bernoulli_distribution is_outlier(spec.q);
    std::normal_distribution<double> noise(0.0, sigma);
    Vector ytr(spec.n_train);
    out.outlier_mask.resize(static_cast<std::size_t>(spec.n_train));
    for (int i = 0; i < spec.n_train; ++i) {
        const bool o = is_outlier(rng);
        out.outlier_mask[static_cast<std::size_t>(i)] = o;
        ytr[i] = out.train_f[i] + noise(rng) + (o ? spec.mu_o : 0.0);
    }

    Matrix Xte = draw_inputs(rng, spec.generator, spec.n_test);
    out.test_f = evaluate_f(spec.generator, Xte);
    Vector yte(spec.n_test);
    for (int t = 0; t < spec.n_test; ++t) yte[t] = out.test_f[t] + noise(rng);

    out.train = Dataset(std::move(Xtr), std::move(ytr));
    out.test = Dataset(std::move(Xte), std::move(yte));
    return out;
}

ScenarioData generate_sparse_outlier_example(std::uint64_t seed, int n, int n_outliers, double bias, double sigma) {
    if (n < 1 || n_outliers < 0 || n_outliers > n) throw DataError("invalid sparse outlier example size");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::normal_distribution<double> noise(0.0, sigma);
    Matrix X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = u(rng);

    ScenarioData out;
    out.train_f = evaluate_f(Generator::Synthetic1D, X);
    out.outlier_mask.assign(static_cast<std::size_t>(n), false);
    // Outliers are placed away from the boundary of the input range.
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::set<int> chosen;
    while (static_cast<int>(chosen.size()) < n_outliers) {
        const int i = pick(rng);
        if (std::abs(X(i, 0)) < 2.5) chosen.insert(i);
    }
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        const bool o = chosen.count(i) > 0;
        out.outlier_mask[static_cast<std::size_t>(i)] = o;
        y[i] = out.train_f[i] + noise(rng) + (o ? bias : 0.0);
    }
    out.train = Dataset(X, y);
    out.test_f = out.train_f;
    out.test = Dataset(X, out.train_f);
    return out;
}

std::uint64_t replicate_seed(std::uint64_t master_seed, std::string_view scenario_label, int replicate) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
    for (unsigned char c : scenario_label) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    auto splitmix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    };
    return splitmix(splitmix(master_seed ^ h) + static_cast<std::uint64_t>(replicate));
}

double mse(const Vector& y_true, const Vector& mean) {
    if (y_true.size() != mean.size() || y_true.size() == 0) throw DataError("mse: length mismatch or empty input");
    std::vector<double> terms(static_cast<std::size_t>(y_true.size()));
    for (Eigen::Index t = 0; t < y_true.size(); ++t) {
        const double r = y_true[t] - mean[t];
        terms[static_cast<std::size_t>(t)] = r * r;
    }
    return order_independent_mean(terms);
}

double nlpd(const Vector& y_true, const Vector& mean, const Vector& var) {
    if (y_true.size() != mean.size() || y_true.size() != var.size() || y_true.size() == 0)
        throw DataError("nlpd: length mismatch or empty input");
    if ((var.array() <= 0.0).any()) throw DataError("nlpd: variances must be positive");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> terms(static_cast<std::size_t>(y_true.size()));
    for (Eigen::Index t = 0; t < y_true.size(); ++t) {
        const double r = y_true[t] - mean[t];
        terms[static_cast<std::size_t>(t)] = r * r / (2.0 * var[t]) + 0.5 * std::log(two_pi * var[t]);
    }
    return order_independent_mean(terms);
}

}  // namespace robustgp
