#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "robustgp/gp_core.hpp"

namespace robustgp {

enum class Generator { Synthetic1D, Friedman10D };
enum class SigmaRatio { Sixth, Twelfth };

std::string to_string(Generator g);
Generator generator_from_string(std::string_view name);
int sigma_divisor(SigmaRatio r);
SigmaRatio sigma_ratio_from_divisor(int divisor);

/// One cell of the outlier benchmark grid. The noise standard deviation is
/// always derived as mu_o / 6 or mu_o / 12.
struct ScenarioSpec {
    Generator generator = Generator::Synthetic1D;
    double q = 0.1;
    double mu_o = 3.0;
    SigmaRatio sigma_ratio = SigmaRatio::Sixth;
    int n_train = 300;
    int n_test = 1000;
    std::uint64_t replicate_seed = 0;

    double sigma() const { return mu_o / sigma_divisor(sigma_ratio); }
    int input_dim() const { return generator == Generator::Synthetic1D ? 1 : 10; }
    void validate() const;
    /// Stable label without the seed, e.g. "synth1d_q0.1_mu3_s6".
    std::string label() const;
};

struct ScenarioData {
    Dataset train;
    Dataset test;
    std::vector<bool> outlier_mask;  // per training row
    Vector train_f;                  // noise-free f at training inputs
    Vector test_f;
};

/// 0.3 + 0.4x + 0.5 sin(2.7x) + 1.1 / (1 + x^2)
double f_synth1d(double x);

/// 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5; x must have 10 entries.
double f_friedman(const Eigen::Ref<const Vector>& x);

ScenarioData generate_scenario(const ScenarioSpec& spec);

/// Dense 1D example with exactly `n_outliers` responses shifted up by `bias`
/// (inputs on Unif(-3, 3), inlier noise sd `sigma`).
ScenarioData generate_sparse_outlier_example(std::uint64_t seed, int n = 500, int n_outliers = 2,
                                             double bias = 2.5, double sigma = 0.16);

/// Per-replicate seed derived from a master seed, the scenario label and
/// the replicate index (splitmix64 over an FNV-1a hash of the label).
std::uint64_t replicate_seed(std::uint64_t master_seed, std::string_view scenario_label, int replicate);

double mse(const Vector& y_true, const Vector& mean);

/// Mean Gaussian negative log density; var must already include the
/// observation noise.
double nlpd(const Vector& y_true, const Vector& mean, const Vector& var);

}  // namespace robustgp
