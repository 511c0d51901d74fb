#include "pgap/rates.hpp"

#include "pgap/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace pgap {

std::string to_string(Regime regime)
{
    switch (regime) {
    case Regime::convexity_dominated:
        return "convexity-dominated";
    case Regime::nonlinearity_dominated:
        return "nonlinearity-dominated";
    case Regime::critical:
        return "critical";
    }
    return "unknown";
}

double convexity_branch_rate(double m) { return 1.0 / m; }

double nonlinearity_branch_rate(double p) { return 1.0 / (p - 1.0); }

double lower_bound_exponent(double m, double p, double tau)
{
    if (!(tau > 0.0 && tau < m - 2.0)) throw ParameterError("lower bound exponent: tau must lie in (0, m-2)");
    if (p <= m + 1.0) return (1.0 - tau) / m;
    return (m - 2.0 * tau) / (m * (p - 1.0));
}

TheoryRates theory_exponents(int d, double m, double p, double tau)
{
    if (d < 2) throw ParameterError("theory_exponents: d must be at least 2");
    if (!(m > 2.0)) throw ParameterError("theory_exponents: m must exceed 2");
    if (!(p > 1.0)) throw ParameterError("theory_exponents: p must exceed 1");

    TheoryRates t;
    t.d = d;
    t.m = m;
    t.p = p;
    t.tau = tau;
    t.rate_2d = p - 1.0 <= m ? convexity_branch_rate(m) : nonlinearity_branch_rate(p);
    t.upper_general = 1.0 / m;
    if (p > d + m - 1.0 && tau > 0.0 && tau < 0.5 * (p + 1.0 - d - m)) {
        t.upper_large_p = (d + m - 2.0 + 2.0 * tau) / (m * (p - 1.0));
    }
    t.lower = lower_bound_exponent(m, p, tau);
    if (p == m + 1.0) t.regime = Regime::critical;
    else t.regime = p < m + 1.0 ? Regime::convexity_dominated : Regime::nonlinearity_dominated;
    return t;
}

RateFit fit_exponent(const std::vector<double>& eps, const std::vector<double>& gmax)
{
    if (eps.size() != gmax.size()) throw ParameterError("fit_exponent: eps and gmax differ in length");
    if (eps.size() < 4) throw ParameterError("fit_exponent: at least 4 points are required");
    const std::size_t n = eps.size();
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(eps[k] > 0.0) || !(gmax[k] > 0.0) || !std::isfinite(gmax[k])) {
            throw DomainError("fit_exponent: eps and gmax must be positive and finite");
        }
        x[k] = -std::log(eps[k]);
        y[k] = std::log(gmax[k]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("fit_exponent: eps values must not all coincide");

    RateFit fit;
    fit.eps = eps;
    fit.gmax = gmax;
    fit.fitted_exponent = sxy / sxx;
    fit.intercept = my - fit.fitted_exponent * mx;
    const double ss_res = std::max(0.0, syy - sxy * sxy / sxx);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return fit;
}

OscillationGradientRatio oscillation_gradient_ratio(const DiscreteField& field, double c_tilde0)
{
    if (!(c_tilde0 > 0.0)) throw ParameterError("oscillation_gradient_ratio: c_tilde0 must be positive");
    const auto& g = *field.grid;
    const double m = g.geometry.m;
    const double eps = g.geometry.eps;
    const double floor = 1e-12 * field.total_oscillation();

    OscillationGradientRatio out;
    double best = -1.0;
    for (int i = 0; i < g.n1; ++i) {
        const double x1 = g.y1_centers[i];
        const double radius = c_tilde0 / 3.0 * std::pow(g.delta_c[i], 1.0 / m);
        if (x1 - radius < -g.L || x1 + radius > g.L) continue;
        const double osc = oscillation(field, x1, radius);
        const double weight = std::pow(eps + std::pow(std::abs(x1), m), 1.0 / m);
        for (int j = 0; j < g.n2; ++j) {
            ++out.n_cells;
            if (osc < floor || osc == 0.0) {
                ++out.n_skipped;
                continue;
            }
            best = std::max(best, field.grad_norm(i, j) * weight / osc);
        }
    }
    if (best < 0.0) throw DomainError("oscillation_gradient_ratio: every cell was skipped (degenerate data)");
    out.ratio = best;
    return out;
}

double measurement_radius(double m, double eps, double tau)
{
    if (!(tau > 0.0 && tau < m - 2.0)) throw ParameterError("measurement radius: tau must lie in (0, m-2)");
    return std::pow(4.0 * m * eps / (m - 2.0 - tau), 1.0 / m);
}

void SweepPlan::validate() const
{
    if (eps.size() < 4) throw ParameterError("sweep: at least 4 eps values are required");
    for (std::size_t k = 0; k < eps.size(); ++k) {
        if (!(eps[k] > 0.0)) throw ParameterError("sweep: eps values must be positive");
        if (k > 0 && !(eps[k] < eps[k - 1])) throw ParameterError("sweep: eps values must be strictly decreasing");
    }
    if (!(L > 0.0)) throw ParameterError("sweep: L must be positive");
    if (!(harnack_r > 0.0 && 2.0 * harnack_r <= L)) throw ParameterError("sweep: harnack_r must lie in (0, L/2]");
    if (jobs < 1) throw ParameterError("sweep: jobs must be positive");
    solver.validate();
    GapGeometry first = geometry;
    first.eps = eps.front();
    first.validate();
    if (L > geometry.R0 * (1.0 + 1e-12)) throw ParameterError("sweep: L must not exceed R0");
}

namespace {

SweepPoint run_point(const SweepPlan& plan, double eps, double c_tilde0, bool keep_field)
{
    SweepPoint pt;
    pt.eps = eps;
    pt.measure_radius = std::min(plan.L, measurement_radius(plan.geometry.m, eps, plan.measure_tau));
    try {
        GapGeometry geometry = plan.geometry;
        geometry.eps = eps;
        const TransformedGrid grid = build_grid(geometry, plan.solver, plan.L);
        DiscreteField field = solve(grid, plan.solver);
        pt.converged = field.converged;
        pt.outer_iterations = field.outer_iterations;
        pt.residual_history = field.residual_history;
        pt.gmax = grad_max(field, pt.measure_radius);
        pt.harnack = harnack_ratio(field, plan.harnack_r);
        pt.osc_center = oscillation(field, 0.0, std::min(plan.L, c_tilde0 / 3.0 * std::pow(eps, 1.0 / geometry.m)));
        try {
            pt.osc_ratio = oscillation_gradient_ratio(field, c_tilde0);
        } catch (const DomainError&) {
            // degenerate field: no usable slab
        }
        if (keep_field) pt.field = std::move(field);
    } catch (const ConvergenceError& e) {
        pt.converged = false;
        pt.residual_history = e.residual_history;
        pt.error = e.what();
    } catch (const std::exception& e) {
        pt.converged = false;
        pt.error = e.what();
    }
    return pt;
}

} // namespace

SweepResult run_sweep(const SweepPlan& plan, bool keep_fields)
{
    plan.validate();
    SweepResult result;
    result.theory = theory_exponents(2, plan.geometry.m, plan.solver.p, plan.measure_tau);
    const double c_tilde0 = constant_c_tilde0(plan.geometry.m, plan.geometry.kappa);

    const std::size_t n = plan.eps.size();
    result.points.resize(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            result.points[k] = run_point(plan, plan.eps[k], c_tilde0, keep_fields);
        }
    };
    const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(plan.jobs), n));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    std::vector<double> eps, gmax;
    for (const auto& pt : result.points) {
        if (pt.converged) {
            eps.push_back(pt.eps);
            gmax.push_back(pt.gmax);
        } else {
            std::ostringstream msg;
            msg << "eps=" << pt.eps << ": " << pt.error;
            result.failures.push_back(msg.str());
        }
    }
    if (2 * result.failures.size() > n) {
        std::ostringstream msg;
        msg << "sweep: " << result.failures.size() << " of " << n << " solves failed";
        throw NumericError(msg.str());
    }
    if (eps.size() >= 4) {
        RateFit fit = fit_exponent(eps, gmax);
        fit.theory = result.theory;
        fit.abs_gap = std::abs(fit.fitted_exponent - result.theory.rate_2d);
        result.fit = std::move(fit);
    }
    return result;
}

} // namespace pgap
