#include "robustgp/gp_core.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "robustgp/errors.hpp"

namespace robustgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-4;
}  // namespace

Dataset::Dataset(Matrix X_, Vector y_) : X(std::move(X_)), y(std::move(y_)) {
    if (X.rows() < 1 || X.cols() < 1) throw DataError("dataset must have N >= 1 rows and d >= 1 columns");
    if (X.rows() != y.size())
        throw DataError("dataset: " + std::to_string(X.rows()) + " input rows but " +
                        std::to_string(y.size()) + " responses");
    if (!X.allFinite() || !y.allFinite()) throw DataError("dataset contains non-finite values");
}

CholFactor::CholFactor(const Matrix& K) {
    if (K.rows() != K.cols() || K.rows() == 0)
        throw DataError("CholFactor: matrix must be square and non-empty");
    if (!K.allFinite()) throw NumericalError("CholFactor: matrix has non-finite entries");
    llt_.compute(K);
    if (llt_.info() != Eigen::Success) {
        const double mean_diag = K.diagonal().mean();
        const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
        bool ok = false;
        for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-12); rel *= 10.0) {
            jitter_ = rel * scale;
            Matrix Kj = K;
            Kj.diagonal().array() += jitter_;
            llt_.compute(Kj);
            if (llt_.info() == Eigen::Success) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw NumericalError("Cholesky factorization failed after jitter " + std::to_string(jitter_),
                                 jitter_);
    }
    const auto& L = llt_.matrixLLT();
    double ld = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) ld += std::log(L(i, i));
    log_det_ = 2.0 * ld;
}

Matrix CholFactor::inverse() const {
    Matrix inv = llt_.solve(Matrix::Identity(size(), size()));
    // Force exact symmetry.
    return 0.5 * (inv + inv.transpose());
}

double CholFactor::quad_form(const Vector& b) const {
    Vector z = llt_.matrixL().solve(b);
    return z.squaredNorm();
}

double gauss_nll(const Vector& y_centered, const CholFactor& factor) {
    if (y_centered.size() != factor.size()) throw DataError("gauss_nll: dimension mismatch");
    const double n = static_cast<double>(y_centered.size());
    return 0.5 * n * kLog2Pi + 0.5 * factor.log_det() + 0.5 * factor.quad_form(y_centered);
}

double gauss_nll(const Vector& y_centered, const Matrix& K) {
    if (K.rows() != y_centered.size()) throw DataError("gauss_nll: dimension mismatch");
    return gauss_nll(y_centered, CholFactor(K));
}

Matrix noisy_covariance(const Matrix& X, const KernelSpec& spec, const Vector& noise_diag) {
    if (noise_diag.size() != X.rows()) throw DataError("noise diagonal length does not match N");
    if (!noise_diag.allFinite() || (noise_diag.array() <= 0.0).any())
        throw DataError("noise diagonal entries must be positive and finite");
    Matrix K = kernel_matrix(spec, X);
    K.diagonal() += noise_diag;
    return K;
}

PredictiveDist predict(const Dataset& train, const KernelSpec& spec, const Vector& noise_diag,
                       const Vector& residual, const Matrix& Xstar) {
    if (residual.size() != train.size()) throw DataError("predict: residual length does not match N");
    if (Xstar.cols() != train.dim())
        throw DataError("predict: test inputs have " + std::to_string(Xstar.cols()) +
                        " columns, model expects " + std::to_string(train.dim()));
    const CholFactor factor(noisy_covariance(train.X, spec, noise_diag));
    const Matrix Kxs = kernel_matrix(spec, train.X, Xstar);  // N x T
    const Vector alpha = factor.solve(residual);
    PredictiveDist out;
    out.mean = Kxs.transpose() * alpha;
    const Matrix V = factor.lower().triangularView<Eigen::Lower>().solve(Kxs);
    out.variance = (spec.signal_variance() - V.colwise().squaredNorm().array()).matrix().transpose();
    out.variance = out.variance.cwiseMax(0.0);
    return out;
}

NllGradient nll_grad_theta(const Dataset& train, const KernelSpec& spec, const Vector& noise_diag,
                           const Vector& residual) {
    if (residual.size() != train.size()) throw DataError("nll_grad_theta: residual length does not match N");
    const KernelGradient dC = kernel_grad(spec, train.X);
    Matrix K = dC.d_log_signal_variance;
    if (noise_diag.size() != K.rows() || (noise_diag.array() <= 0.0).any() || !noise_diag.allFinite())
        throw DataError("noise diagonal entries must be positive and finite with length N");
    K.diagonal() += noise_diag;
    const CholFactor factor(K);

    NllGradient g;
    g.value = gauss_nll(residual, factor);
    const Vector alpha = factor.solve(residual);
    Matrix W = factor.inverse();
    W.noalias() -= alpha * alpha.transpose();
    // d NLL / d p = 1/2 tr(W dK/dp)
    g.d_log_signal_variance = 0.5 * W.cwiseProduct(dC.d_log_signal_variance).sum();
    g.d_log_lengthscale = 0.5 * W.cwiseProduct(dC.d_log_lengthscale).sum();
    g.d_log_noise = 0.5 * W.diagonal().cwiseProduct(noise_diag);
    g.d_residual = alpha;
    return g;
}

}  // namespace robustgp
