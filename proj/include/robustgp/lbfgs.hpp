#pragma once

#include <functional>

#include "robustgp/kernels.hpp"

namespace robustgp {

struct LbfgsOptions {
    int max_iterations = 100;
    int memory = 8;
    double gtol = 1e-6;   // stop when max |g_i| falls below this
    double ftol = 1e-12;  // stop on relative decrease below this
    int max_linesearch = 40;
};

struct LbfgsResult {
    Vector x;
    double f = 0.0;
    Vector grad;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Returns f(x) and writes the gradient. Throwing NumericalError marks the
/// point as infeasible; the line search then backtracks.
using GradientObjective = std::function<double(const Vector& x, Vector& grad)>;

/// Limited-memory BFGS with an Armijo backtracking line search. Never returns
/// a point with a larger objective than x0.
LbfgsResult lbfgs_minimize(const GradientObjective& objective, const Vector& x0,
                           const LbfgsOptions& options = {});

}  // namespace robustgp
