#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "robustgp/errors.hpp"
#include "robustgp/simulation.hpp"

using namespace robustgp;

TEST_CASE("f_synth1d") {
    CHECK(f_synth1d(0.0) == doctest::Approx(1.4));
    const double x = std::numbers::pi / 2.7;
    const double ref = 0.3 + 0.4 * x + 1.1 / (1 + x * x);
    CHECK(std::abs(f_synth1d(x) - ref) < 1e-12);
    CHECK(f_synth1d(x) == doctest::Approx(1.234).epsilon(1e-3));
    CHECK(std::abs(f_synth1d(100.0) - (40.3 + 0.5 * std::sin(270.0))) < 2e-4);
}

TEST_CASE("f_friedman") {
    Vector x = Vector::Constant(10, 0.5);
    CHECK(f_friedman(x) == doctest::Approx(10 * std::sin(std::numbers::pi / 4) + 7.5));
    CHECK(f_friedman(x) == doctest::Approx(14.5711).epsilon(1e-5));
    Vector z = Vector::Zero(10);
    z[2] = 0.5;
    CHECK(f_friedman(z) == 0.0);
    Vector w = x;
    w.tail(5) << 0.1, 0.9, 0.3, 0.2, 0.7;
    CHECK(f_friedman(w) == f_friedman(x));
    CHECK_THROWS_AS(f_friedman(Vector::Zero(5)), DataError);
}

TEST_CASE("generate_scenario shapes and determinism") {
    ScenarioSpec s;
    s.replicate_seed = 77;
    const ScenarioData a = generate_scenario(s), b = generate_scenario(s);
    CHECK(a.train.size() == 300);
    CHECK(a.test.size() == 1000);
    CHECK(a.train.dim() == 1);
    CHECK(a.train.X == b.train.X);
    CHECK(a.train.y == b.train.y);
    CHECK(a.test.y == b.test.y);
    CHECK(a.outlier_mask == b.outlier_mask);
    CHECK(a.train.X.minCoeff() >= -3.0);
    CHECK(a.train.X.maxCoeff() <= 3.0);

    s.generator = Generator::Friedman10D;
    const ScenarioData f = generate_scenario(s);
    CHECK(f.train.dim() == 10);
    CHECK(f.train.X.minCoeff() >= 0.0);
    CHECK(f.train.X.maxCoeff() <= 1.0);

    s.q = 1.5;
    CHECK_THROWS_AS(s.validate(), DataError);
}

TEST_CASE("realized outlier fraction concentrates at q") {
    for (double q : {0.1, 0.2}) {
        ScenarioSpec s;
        s.q = q;
        s.n_test = 1;
        double total = 0;
        for (int r = 0; r < 1000; ++r) {
            s.replicate_seed = replicate_seed(5, s.label(), r);
            const ScenarioData d = generate_scenario(s);
            total += static_cast<double>(std::count(d.outlier_mask.begin(), d.outlier_mask.end(), true)) / 300.0;
        }
        CHECK(std::abs(total / 1000 - q) < 0.06);
    }
}

TEST_CASE("mixture components and clean test set") {
    ScenarioSpec s;
    s.mu_o = 5.0;
    s.sigma_ratio = SigmaRatio::Twelfth;
    const double sigma = 5.0 / 12.0;
    // The inlier variance estimate from ~270 points has a relative standard
    // error near 9%, so the 15% band is checked as a frequency.
    int within = 0;
    double ratio_sum = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        s.replicate_seed = replicate_seed(8, s.label(), r);
        const ScenarioData d = generate_scenario(s);
        double out_sum = 0, in_ss = 0;
        int n_out = 0, n_in = 0;
        for (Eigen::Index i = 0; i < d.train.size(); ++i) {
            const double e = d.train.y[i] - d.train_f[i];
            CHECK(d.train_f[i] == f_synth1d(d.train.X(i, 0)));
            if (d.outlier_mask[static_cast<std::size_t>(i)]) out_sum += e, ++n_out;
            else in_ss += e * e, ++n_in;
        }
        if (r < 5) CHECK(std::abs(out_sum / n_out - 5.0) < 3 * sigma / std::sqrt(n_out));
        const double ratio = in_ss / n_in / (sigma * sigma);
        within += std::abs(ratio - 1.0) < 0.15;
        ratio_sum += ratio;
        CHECK((d.test.y - d.test_f).cwiseAbs().maxCoeff() < 6 * sigma);
    }
    CHECK(within >= 0.9 * reps);
    CHECK(std::abs(ratio_sum / reps - 1.0) < 0.02);
}

TEST_CASE("sparse outlier example") {
    const ScenarioData d = generate_sparse_outlier_example(3);
    CHECK(d.train.size() == 500);
    CHECK(std::count(d.outlier_mask.begin(), d.outlier_mask.end(), true) == 2);
}

TEST_CASE("replicate seeds differ across labels and replicates") {
    CHECK(replicate_seed(1, "a", 0) != replicate_seed(1, "a", 1));
    CHECK(replicate_seed(1, "a", 0) != replicate_seed(1, "b", 0));
    CHECK(replicate_seed(1, "a", 0) != replicate_seed(2, "a", 0));
    CHECK(replicate_seed(1, "a", 0) == replicate_seed(1, "a", 0));
}

TEST_CASE("mse and nlpd") {
    Vector y(2), m(2);
    y << 0, 0;
    m << 1, -1;
    CHECK(mse(y, y) == 0.0);
    CHECK(mse(y, m) == 1.0);
    CHECK(nlpd(y, y, Vector::Ones(2)) == doctest::Approx(0.918939).epsilon(1e-6));
    Vector one(1), two(1), var(1);
    one << 0.0;
    two << 0.7;
    var << 0.49;
    CHECK(nlpd(one, two, var) == doctest::Approx(0.5 + 0.5 * std::log(2 * std::numbers::pi * 0.49)));

    std::mt19937_64 rng(9);
    const Vector yt = oracle::normal_vector(rng, 7), mu = oracle::normal_vector(rng, 7);
    double ref = 0;
    for (int i = 0; i < 7; ++i) ref += (yt[i] - mu[i]) * (yt[i] - mu[i]);
    CHECK(std::abs(mse(yt, mu) - ref / 7) < 1e-14);

    const Vector y5 = yt.head(5), m5 = mu.head(5);
    const Vector v5 = oracle::uniform_matrix(rng, 5, 1, 0.1, 2.0).col(0);
    double rn = 0;
    for (int i = 0; i < 5; ++i)
        rn += (y5[i] - m5[i]) * (y5[i] - m5[i]) / (2 * v5[i]) + 0.5 * std::log(2 * std::numbers::pi * v5[i]);
    CHECK(std::abs(nlpd(y5, m5, v5) - rn / 5) < 1e-12);

    Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
    p.indices() << 4, 2, 0, 1, 3;
    CHECK(nlpd(p * y5, p * m5, p * v5) == doctest::Approx(nlpd(y5, m5, v5)).epsilon(1e-15));
    CHECK(mse(p * y5, p * m5) == doctest::Approx(mse(y5, m5)).epsilon(1e-15));
}
