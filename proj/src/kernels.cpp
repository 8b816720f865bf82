#include "robustgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "robustgp/errors.hpp"

namespace robustgp {

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::SquaredExponential: return "se";
        case KernelFamily::Exponential: return "exp";
    }
    return "se";
}

KernelFamily kernel_family_from_string(std::string_view name) {
    if (name == "se" || name == "squared_exponential") return KernelFamily::SquaredExponential;
    if (name == "exp" || name == "exponential") return KernelFamily::Exponential;
    throw DataError("unknown kernel family '" + std::string(name) + "' (expected se|exp)");
}

KernelSpec::KernelSpec(KernelFamily family, double signal_variance, double lengthscale)
    : family_(family), sv_(signal_variance), ls_(lengthscale) {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
        throw DataError("kernel signal variance must be positive and finite");
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
        throw DataError("kernel lengthscale must be positive and finite");
    log_sv_ = std::log(sv_);
    log_ls_ = std::log(ls_);
}

KernelSpec KernelSpec::from_log(KernelFamily family, double log_signal_variance,
                                double log_lengthscale) {
    if (!std::isfinite(log_signal_variance) || !std::isfinite(log_lengthscale))
        throw DataError("kernel log hyperparameters must be finite");
    KernelSpec spec;
    spec.family_ = family;
    spec.log_sv_ = log_signal_variance;
    spec.log_ls_ = log_lengthscale;
    spec.sv_ = std::exp(log_signal_variance);
    spec.ls_ = std::exp(log_lengthscale);
    if (!(spec.sv_ > 0.0) || !std::isfinite(spec.sv_) || !(spec.ls_ > 0.0) ||
        !std::isfinite(spec.ls_))
        throw DataError("kernel hyperparameters out of representable range");
    return spec;
}

namespace {

// Covariance as a function of squared distance.
inline double cov_from_sqdist(const KernelSpec& spec, double sqdist) {
    const double ls = spec.lengthscale();
    switch (spec.family()) {
        case KernelFamily::SquaredExponential:
            return spec.signal_variance() * std::exp(-sqdist / (2.0 * ls * ls));
        case KernelFamily::Exponential:
            return spec.signal_variance() * std::exp(-std::sqrt(sqdist) / ls);
    }
    return 0.0;
}

double sqdist(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

double row_sqdist(const Matrix& X, Eigen::Index i, const Matrix& Z, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const double d = X(i, k) - Z(j, k);
        s += d * d;
    }
    return s;
}

void check_finite(const Matrix& M, const char* what) {
    if (!M.allFinite()) throw DataError(std::string(what) + " contains non-finite values");
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& a,
                   const Eigen::Ref<const Vector>& b) {
    if (a.size() != b.size() || a.size() < 1)
        throw DataError("kernel_eval: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
    if (!a.allFinite() || !b.allFinite()) throw DataError("kernel_eval: non-finite input");
    // Summation order is fixed so that swapping a and b gives identical bits.
    return cov_from_sqdist(spec, sqdist(a, b));
}

Matrix kernel_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Z) {
    if (X.cols() != Z.cols())
        throw DataError("kernel_matrix: column mismatch (" + std::to_string(X.cols()) + " vs " +
                        std::to_string(Z.cols()) + ")");
    check_finite(X, "kernel_matrix: X");
    check_finite(Z, "kernel_matrix: Z");
    Matrix K(X.rows(), Z.rows());
    for (Eigen::Index j = 0; j < Z.rows(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            K(i, j) = cov_from_sqdist(spec, row_sqdist(X, i, Z, j));
    return K;
}

Matrix kernel_matrix(const KernelSpec& spec, const Matrix& X) {
    check_finite(X, "kernel_matrix: X");
    const Eigen::Index n = X.rows();
    Matrix K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K(j, j) = spec.signal_variance();
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = cov_from_sqdist(spec, row_sqdist(X, i, X, j));
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

KernelGradient kernel_grad(const KernelSpec& spec, const Matrix& X) {
    if (X.rows() < 1) throw DataError("kernel_grad: empty input");
    KernelGradient g;
    g.d_log_signal_variance = kernel_matrix(spec, X);
    const Matrix& C = g.d_log_signal_variance;
    const Eigen::Index n = X.rows();
    const double ls = spec.lengthscale();
    g.d_log_lengthscale.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        g.d_log_lengthscale(j, j) = 0.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double r2 = row_sqdist(X, i, X, j);
            double v = 0.0;
            switch (spec.family()) {
                case KernelFamily::SquaredExponential: v = C(i, j) * r2 / (ls * ls); break;
                case KernelFamily::Exponential: v = C(i, j) * std::sqrt(r2) / ls; break;
            }
            g.d_log_lengthscale(i, j) = v;
            g.d_log_lengthscale(j, i) = v;
        }
    }
    return g;
}

double median_pairwise_distance(const Matrix& X) {
    const Eigen::Index n = X.rows();
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = std::sqrt(row_sqdist(X, i, X, j));
            if (v > 0.0) d.push_back(v);
        }
    if (d.empty()) return 1.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid;
}

}  // namespace robustgp
