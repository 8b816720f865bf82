#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "robustgp/kernels.hpp"

namespace robustgp {

/// Paired training inputs (N x d) and responses (N).
struct Dataset {
    Matrix X;
    Vector y;

    Dataset() = default;
    /// Validates shape and finiteness; throws DataError.
    Dataset(Matrix X_, Vector y_);

    Eigen::Index size() const noexcept { return y.size(); }
    Eigen::Index dim() const noexcept { return X.cols(); }
};

/// Posterior of the latent function at T test points. Noise is not included.
struct PredictiveDist {
    Vector mean;
    Vector variance;
};

/// Cholesky factor of a symmetric positive definite matrix. Factorization is
/// attempted as given first; on failure a diagonal jitter of 1e-8 times the
/// mean diagonal is added and grown by x10 up to 1e-4 times the mean diagonal.
class CholFactor {
public:
    explicit CholFactor(const Matrix& K);

    Eigen::Index size() const noexcept { return llt_.rows(); }
    double jitter() const noexcept { return jitter_; }
    double log_det() const noexcept { return log_det_; }

    Matrix lower() const { return llt_.matrixL(); }
    Vector solve(const Vector& b) const { return llt_.solve(b); }
    Matrix solve(const Matrix& B) const { return llt_.solve(B); }
    Matrix inverse() const;

    /// Squared norm of L^{-1} b, i.e. b^T K^{-1} b.
    double quad_form(const Vector& b) const;

private:
    Eigen::LLT<Matrix> llt_;
    double jitter_ = 0.0;
    double log_det_ = 0.0;
};

/// (N/2) log 2pi + 1/2 log|K| + 1/2 r^T K^{-1} r.
double gauss_nll(const Vector& y_centered, const Matrix& K);
double gauss_nll(const Vector& y_centered, const CholFactor& factor);

/// Assembles diag(noise_diag) + C_xx.
Matrix noisy_covariance(const Matrix& X, const KernelSpec& spec, const Vector& noise_diag);

/// Latent posterior at Xstar given K = diag(noise_diag) + C_xx and the
/// bias-corrected residual.
PredictiveDist predict(const Dataset& train, const KernelSpec& spec, const Vector& noise_diag,
                       const Vector& residual, const Matrix& Xstar);

/// Value and gradient of gauss_nll(residual, diag(noise_diag) + C_xx) with
/// respect to log signal variance, log lengthscale, each log noise_diag entry
/// and the residual itself.
struct NllGradient {
    double value = 0.0;
    double d_log_signal_variance = 0.0;
    double d_log_lengthscale = 0.0;
    Vector d_log_noise;
    Vector d_residual;  // K^{-1} r
};

NllGradient nll_grad_theta(const Dataset& train, const KernelSpec& spec, const Vector& noise_diag,
                           const Vector& residual);

}  // namespace robustgp
