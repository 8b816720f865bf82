#include "robustgp/lbfgs.hpp"

#include <cmath>
#include <algorithm>
#include <deque>
#include <limits>
#include <vector>

#include "robustgp/errors.hpp"

namespace robustgp {

namespace {

struct Eval {
    double f = std::numeric_limits<double>::infinity();
    Vector g;
    bool ok = false;
};

Eval evaluate(const GradientObjective& objective, const Vector& x) {
    Eval e;
    e.g.resize(x.size());
    try {
        e.f = objective(x, e.g);
        e.ok = std::isfinite(e.f) && e.g.allFinite();
    } catch (const NumericalError&) {
        e.ok = false;
    } catch (const DataError&) {
        // Parameters pushed outside the representable range.
        e.ok = false;
    }
    if (!e.ok) e.f = std::numeric_limits<double>::infinity();
    return e;
}

}  // namespace

LbfgsResult lbfgs_minimize(const GradientObjective& objective, const Vector& x0,
                           const LbfgsOptions& options) {
    LbfgsResult res;
    res.x = x0;
    Eval cur = evaluate(objective, x0);
    res.evaluations = 1;
    if (!cur.ok) throw NumericalError("objective is not finite at the starting point");
    res.f = cur.f;
    res.grad = cur.g;

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    constexpr double c1 = 1e-4;

    for (int it = 0; it < options.max_iterations; ++it) {
        if (res.grad.lpNorm<Eigen::Infinity>() <= options.gtol) {
            res.converged = true;
            break;
        }

        // Two-loop recursion.
        Vector q = res.grad;
        const std::size_t m = s_hist.size();
        std::vector<double> alpha(m);
        for (std::size_t k = m; k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        if (m > 0) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        } else {
            q /= std::max(1.0, res.grad.norm());
        }
        for (std::size_t k = 0; k < m; ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(q);
            q += (alpha[k] - beta) * s_hist[k];
        }
        Vector dir = -q;
        double slope = res.grad.dot(dir);
        if (!(slope < 0.0)) {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -res.grad / std::max(1.0, res.grad.norm());
            slope = res.grad.dot(dir);
        }

        double step = 1.0;
        Eval next;
        bool accepted = false;
        for (int ls = 0; ls < options.max_linesearch; ++ls) {
            next = evaluate(objective, res.x + step * dir);
            ++res.evaluations;
            if (next.ok && next.f <= res.f + c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        const Vector s = step * dir;
        const Vector yv = next.g - res.grad;
        const double sy = s.dot(yv);
        const double f_prev = res.f;
        res.x += s;
        res.f = next.f;
        res.grad = next.g;
        res.iterations = it + 1;

        if (sy > 1e-10 * s.norm() * yv.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > options.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (f_prev - res.f <= options.ftol * std::max(1.0, std::abs(f_prev))) {
            res.converged = res.grad.lpNorm<Eigen::Infinity>() <= std::sqrt(options.gtol);
            break;
        }
    }
    if (res.grad.lpNorm<Eigen::Infinity>() <= options.gtol) res.converged = true;
    return res;
}

}  // namespace robustgp
