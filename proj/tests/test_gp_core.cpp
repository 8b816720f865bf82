#include "doctest.h"
#include "oracles.hpp"
#include "robustgp/errors.hpp"
#include "robustgp/gp_core.hpp"
#include "robustgp/lbfgs.hpp"

using namespace robustgp;

namespace {

Dataset random_dataset(std::mt19937_64& rng, int n, int d) {
    return Dataset(oracle::uniform_matrix(rng, n, d, -2, 2), oracle::normal_vector(rng, n));
}

}  // namespace

TEST_CASE("Dataset validation") {
    CHECK_THROWS_AS(Dataset(Matrix::Zero(3, 1), Vector::Zero(2)), DataError);
    CHECK_THROWS_AS(Dataset(Matrix::Zero(0, 1), Vector::Zero(0)), DataError);
    Vector y = Vector::Zero(2);
    y[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Dataset(Matrix::Zero(2, 1), y), DataError);
}

TEST_CASE("gauss_nll scalar cases") {
    CHECK(gauss_nll(Vector::Zero(1), Matrix::Identity(1, 1)) == doctest::Approx(0.918939).epsilon(1e-6));
    Vector r(1);
    r << 2.0;
    Matrix K(1, 1);
    K << 4.0;
    const double ref = 0.5 * oracle::kLog2Pi + 0.5 * std::log(4.0) + 0.5;
    CHECK(std::abs(gauss_nll(r, K) - ref) < 1e-12);
    CHECK(gauss_nll(r, K) == doctest::Approx(2.112086).epsilon(1e-6));
}

TEST_CASE("gauss_nll matches LU oracle and is permutation invariant") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix K = oracle::random_spd(rng, 3);
        const Vector r = oracle::normal_vector(rng, 3);
        CHECK(std::abs(gauss_nll(r, K) - oracle::gauss_nll(r, K)) < 1e-10);

        Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
        perm.indices() << 2, 0, 1;
        const Matrix Kp = perm * K * perm.transpose();
        CHECK(std::abs(gauss_nll(Vector(perm * r), Kp) - gauss_nll(r, K)) < 1e-12);
    }
}

TEST_CASE("CholFactor reconstructs and escalates jitter only when needed") {
    std::mt19937_64 rng(22);
    const Matrix K = oracle::random_spd(rng, 6);
    const CholFactor f(K);
    CHECK(f.jitter() == 0.0);
    const Matrix L = f.lower();
    CHECK((L * L.transpose() - K).norm() / K.norm() < 1e-10);

    // One slightly negative eigenvalue: the first jitter step repairs it.
    const Matrix Q = Eigen::HouseholderQR<Matrix>(oracle::uniform_matrix(rng, 5, 5, -1, 1)).householderQ();
    Vector ev = Vector::Ones(5);
    ev[4] = -1e-10;
    const Matrix A = Q * ev.asDiagonal() * Q.transpose();
    const CholFactor g(0.5 * (A + A.transpose()));
    CHECK(g.jitter() > 0.0);
    CHECK(g.jitter() <= 1e-7);

    Matrix bad = -Matrix::Identity(3, 3);
    try {
        CholFactor h(bad);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.attempted_jitter() > 0.0);
    }
}

TEST_CASE("jitter sanity: a 1e-8 diagonal change barely moves the likelihood") {
    std::mt19937_64 rng(23);
    const Dataset d = random_dataset(rng, 8, 2);
    const KernelSpec k(KernelFamily::SquaredExponential, 1.0, 0.7);
    const Matrix K = noisy_covariance(d.X, k, Vector::Constant(8, 0.1));
    Matrix K2 = K;
    K2.diagonal().array() += 2e-8;
    CHECK(std::abs(gauss_nll(d.y, K) - gauss_nll(d.y, K2)) < 1e-6);
}

TEST_CASE("predict limits") {
    std::mt19937_64 rng(24);
    const Dataset d = random_dataset(rng, 6, 1);
    const KernelSpec k(KernelFamily::SquaredExponential, 1.3, 0.9);

    const PredictiveDist at = predict(d, k, Vector::Constant(6, 1e-10), d.y, d.X.row(2));
    CHECK(std::abs(at.mean[0] - d.y[2]) < 1e-4);
    CHECK(at.variance[0] < 1e-4);

    Matrix far(1, 1);
    far << 100 * 0.9 + 5;
    const PredictiveDist fr = predict(d, k, Vector::Constant(6, 0.1), d.y, far);
    CHECK(std::abs(fr.mean[0]) < 1e-6);
    CHECK(std::abs(fr.variance[0] - 1.3) < 1e-6);

    CHECK_THROWS_AS(predict(d, k, Vector::Constant(6, 0.1), d.y, Matrix::Zero(1, 2)), DataError);
    CHECK_THROWS_AS(predict(d, k, Vector::Constant(5, 0.1), d.y, far), DataError);
}

TEST_CASE("predict matches block-inversion oracle") {
    std::mt19937_64 rng(25);
    for (int rep = 0; rep < 30; ++rep) {
        const bool se = rep % 2 == 0;
        const int n = 3 + rep % 5;
        const Dataset d = random_dataset(rng, n, 2);
        const Matrix Xs = oracle::uniform_matrix(rng, rep % 3 + 1, 2, -2, 2);
        const KernelSpec k(se ? KernelFamily::SquaredExponential : KernelFamily::Exponential, 0.8, 1.1);
        // Heteroscedastic on odd reps.
        Vector noise = Vector::Constant(n, 0.2);
        if (rep % 2) noise = oracle::uniform_matrix(rng, n, 1, 0.05, 1.0).col(0);
        const Vector r = oracle::normal_vector(rng, n);
        const PredictiveDist p = predict(d, k, noise, r, Xs);

        Matrix Kyy = oracle::kern_matrix(se, 0.8, 1.1, d.X, d.X);
        Kyy.diagonal() += noise;
        const oracle::Posterior o = oracle::condition(Kyy, oracle::kern_matrix(se, 0.8, 1.1, d.X, Xs),
                                                      oracle::kern_matrix(se, 0.8, 1.1, Xs, Xs), r);
        CHECK((p.mean - o.mean).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((p.variance - o.var).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((p.variance.array() <= 0.8 + 1e-9).all());
    }
}

TEST_CASE("nll_grad_theta matches finite differences") {
    std::mt19937_64 rng(26);
    for (bool se : {true, false}) {
        const KernelFamily fam = se ? KernelFamily::SquaredExponential : KernelFamily::Exponential;
        const Dataset d = random_dataset(rng, 5, 2);
        Vector lnoise = oracle::uniform_matrix(rng, 5, 1, -2.0, 0.0).col(0);
        const double ls = 0.3, ll = 0.1;
        auto value = [&](double a, double b, const Vector& ln) {
            return gauss_nll(d.y, noisy_covariance(d.X, KernelSpec::from_log(fam, a, b), ln.array().exp().matrix()));
        };
        const NllGradient g = nll_grad_theta(d, KernelSpec::from_log(fam, ls, ll), lnoise.array().exp().matrix(), d.y);
        CHECK(oracle::rel_err(g.d_log_signal_variance, oracle::derivative([&](double x) { return value(x, ll, lnoise); }, ls)) < 1e-5);
        CHECK(oracle::rel_err(g.d_log_lengthscale, oracle::derivative([&](double x) { return value(ls, x, lnoise); }, ll)) < 1e-5);
        for (int i = 0; i < 5; ++i) {
            auto fi = [&](double x) {
                Vector ln = lnoise;
                ln[i] = x;
                return value(ls, ll, ln);
            };
            CHECK(oracle::rel_err(g.d_log_noise[i], oracle::derivative(fi, lnoise[i])) < 1e-5);
        }
    }
}

TEST_CASE("gradient vanishes at an optimizer stationary point") {
    std::mt19937_64 rng(27);
    Matrix X = oracle::uniform_matrix(rng, 30, 1, -3, 3);
    Vector y(30);
    for (int i = 0; i < 30; ++i) y[i] = std::sin(X(i, 0)) + 0.1 * oracle::normal_vector(rng, 1)[0];
    const Dataset d(X, y);
    auto f = [&](const Vector& p, Vector& grad) {
        const NllGradient g = nll_grad_theta(d, KernelSpec::from_log(KernelFamily::SquaredExponential, p[1], p[2]),
                                             Vector::Constant(30, std::exp(p[0])), y);
        grad.resize(3);
        grad << g.d_log_noise.sum(), g.d_log_signal_variance, g.d_log_lengthscale;
        return g.value;
    };
    LbfgsOptions opt;
    opt.max_iterations = 500;
    opt.gtol = 1e-7;
    opt.ftol = 0.0;
    const LbfgsResult r = lbfgs_minimize(f, Vector::Zero(3), opt);
    CHECK(r.grad.norm() < 1e-4);
}

TEST_CASE("lbfgs minimizes the Rosenbrock function") {
    auto f = [](const Vector& x, Vector& g) {
        g.resize(2);
        g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200 * (x[1] - x[0] * x[0]);
        return (1 - x[0]) * (1 - x[0]) + 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]);
    };
    LbfgsOptions opt;
    opt.max_iterations = 1000;
    opt.ftol = 0.0;
    const LbfgsResult r = lbfgs_minimize(f, Vector::Constant(2, -1.0), opt);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(r.x[1] - 1.0) < 1e-5);
}
