#pragma once

// Central finite-difference oracle for barrier gradients and Hessians.

#include "pgap/barriers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pgap::testing {

struct FdError {
    double grad = 0.0; // ||grad - fd|| / ||grad||
    double hess = 0.0; // ||hess - fd|| / ||hess|| (Frobenius)
};

/// Step h is relative to the horizontal scale |x'| of the point.
inline FdError fd_relative_error(const BarrierSpec& spec, const std::vector<double>& x, double rel_step)
{
    const std::size_t d = x.size();
    double rho = 0.0;
    for (std::size_t i = 0; i + 1 < d; ++i) rho += x[i] * x[i];
    const double h = rel_step * std::sqrt(rho);
    const PointEvaluation at = eval_barrier(spec, x);
    std::vector<double> g(d), H(d * d);
    for (std::size_t k = 0; k < d; ++k) {
        std::vector<double> xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const PointEvaluation ep = eval_barrier(spec, xp), em = eval_barrier(spec, xm);
        g[k] = (ep.untruncated_value - em.untruncated_value) / (2.0 * h);
        for (std::size_t i = 0; i < d; ++i) H[i * d + k] = (ep.grad[i] - em.grad[i]) / (2.0 * h);
    }
    double eg = 0.0, ng = 0.0, eh = 0.0, nh = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        eg += std::pow(at.grad[i] - g[i], 2.0);
        ng += at.grad[i] * at.grad[i];
    }
    for (std::size_t i = 0; i < d * d; ++i) {
        eh += std::pow(at.hess[i] - H[i], 2.0);
        nh += at.hess[i] * at.hess[i];
    }
    return {std::sqrt(eg / ng), std::sqrt(eh / nh)};
}

/// Deterministic test points with |x'| in [0.01, 0.4] inside a thin neck.
inline std::vector<std::vector<double>> fd_points(int d)
{
    std::vector<std::vector<double>> pts;
    for (double r : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4}) {
        for (double t : {0.0, 0.25, 0.5, 1.0}) {
            std::vector<double> x(static_cast<std::size_t>(d), 0.0);
            x[0] = r / std::sqrt(d - 1.0);
            if (d == 3) x[1] = -r / std::sqrt(2.0);
            x.back() = t * r * r;
            pts.push_back(x);
        }
    }
    return pts;
}

} // namespace pgap::testing
