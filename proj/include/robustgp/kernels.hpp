#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace robustgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelFamily { SquaredExponential, Exponential };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(std::string_view name);

/// Isotropic stationary covariance function. The optimizers work on the log
/// hyperparameters so that any finite state is a valid kernel.
class KernelSpec {
public:
    KernelSpec() = default;

    /// Throws DataError unless both values are positive and finite.
    KernelSpec(KernelFamily family, double signal_variance, double lengthscale);

    static KernelSpec from_log(KernelFamily family, double log_signal_variance,
                               double log_lengthscale);

    KernelFamily family() const noexcept { return family_; }
    double signal_variance() const noexcept { return sv_; }
    double lengthscale() const noexcept { return ls_; }
    double log_signal_variance() const noexcept { return log_sv_; }
    double log_lengthscale() const noexcept { return log_ls_; }

private:
    KernelFamily family_ = KernelFamily::SquaredExponential;
    double sv_ = 1.0;
    double ls_ = 1.0;
    double log_sv_ = 0.0;
    double log_ls_ = 0.0;
};

/// Covariance between two input points.
double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& a,
                   const Eigen::Ref<const Vector>& b);

/// Cross-covariance matrix with entry (i, j) = c(X_i, Z_j).
Matrix kernel_matrix(const KernelSpec& spec, const Matrix& X, const Matrix& Z);

/// Covariance of X with itself. Exactly symmetric, diagonal exactly equal to
/// the signal variance.
Matrix kernel_matrix(const KernelSpec& spec, const Matrix& X);

struct KernelGradient {
    Matrix d_log_signal_variance;
    Matrix d_log_lengthscale;
};

/// Derivatives of kernel_matrix(spec, X) w.r.t. the two log hyperparameters.
KernelGradient kernel_grad(const KernelSpec& spec, const Matrix& X);

/// Median of the pairwise Euclidean distances between rows of X (1 when
/// there are fewer than two distinct rows).
double median_pairwise_distance(const Matrix& X);

}  // namespace robustgp
