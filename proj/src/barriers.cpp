#include "pgap/barriers.hpp"

#include "pgap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pgap {

namespace {

// Sign conditions are accepted down to this normalised margin; reported
// margins include the allowance, so a verdict passes iff min_margin >= 0.
constexpr double kRoundingTolerance = 1e-14;
constexpr int kBisectionSteps = 20;

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::string describe(const BarrierSpec& s)
{
    std::ostringstream out;
    out << to_string(s.kind) << "(d=" << s.d << ", m=" << s.m << ", p=" << s.p << ", tau=" << s.tau
        << ", gamma=" << s.gamma << ")";
    return out.str();
}

// Jet of P^{gamma/m}, P = rho^m + c rho^{m-2} t^2, rho = |x'|, t = x_d.
FieldJet power_form_jet(const BarrierSpec& spec, std::span<const double> x)
{
    const std::size_t d = x.size();
    const std::size_t n = d - 1;
    const double m = spec.m;
    const double c = spec.coeff;
    const double t = x[n];
    double rho2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) rho2 += x[i] * x[i];
    const double rho = std::sqrt(rho2);
    if (!(rho > 0.0)) throw DomainError("barrier derivatives are singular on the axis x' = 0");

    const double P = std::pow(rho, m) + c * std::pow(rho, m - 2.0) * t * t;
    // dP/dx_i = A x_i,  d2P/dx_i dx_j = A delta_ij + B x_i x_j
    const double A = m * std::pow(rho, m - 2.0) + c * (m - 2.0) * std::pow(rho, m - 4.0) * t * t;
    const double B = m * (m - 2.0) * std::pow(rho, m - 4.0) + c * (m - 2.0) * (m - 4.0) * std::pow(rho, m - 6.0) * t * t;
    const double Pt = 2.0 * c * std::pow(rho, m - 2.0) * t;
    const double Ptt = 2.0 * c * std::pow(rho, m - 2.0);
    const double Pxt = 2.0 * c * (m - 2.0) * std::pow(rho, m - 4.0) * t; // times x_i

    std::vector<double> gP(d), hP(d * d);
    for (std::size_t i = 0; i < n; ++i) {
        gP[i] = A * x[i];
        for (std::size_t j = 0; j < n; ++j) hP[i * d + j] = (i == j ? A : 0.0) + B * x[i] * x[j];
        hP[i * d + n] = hP[n * d + i] = Pxt * x[i];
    }
    gP[n] = Pt;
    hP[n * d + n] = Ptt;

    // w = P^g: grad w = g P^{g-1} grad P,
    //          Hess w = g P^{g-1} Hess P + g (g-1) P^{g-2} grad P grad P^T
    const double g = spec.gamma / m;
    const double f1 = g * std::pow(P, g - 1.0);
    const double f2 = g * (g - 1.0) * std::pow(P, g - 2.0);
    FieldJet jet;
    jet.value = std::pow(P, g);
    jet.grad.resize(d);
    jet.hess.resize(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        jet.grad[i] = f1 * gP[i];
        for (std::size_t j = 0; j < d; ++j) jet.hess[i * d + j] = f1 * hP[i * d + j] + f2 * gP[i] * gP[j];
    }
    return jet;
}

struct Accumulator {
    BarrierVerdict verdict;
    bool any_margin = false;

    void record(std::vector<double> point, const char* quantity, double value, double margin)
    {
        if (!any_margin) {
            verdict.min_margin = verdict.max_margin = margin;
            any_margin = true;
        } else {
            verdict.min_margin = std::min(verdict.min_margin, margin);
            verdict.max_margin = std::max(verdict.max_margin, margin);
        }
        if (margin < 0.0) {
            ++verdict.n_violations;
            if (verdict.violations.size() < kMaxStoredViolations) {
                verdict.violations.push_back(Violation{std::move(point), quantity, value, margin});
            }
        }
    }
};

std::vector<double> radial_point(int d, double r, double xd)
{
    std::vector<double> x(static_cast<std::size_t>(d), 0.0);
    x[0] = r;
    x[static_cast<std::size_t>(d) - 1] = xd;
    return x;
}

std::vector<double> geometric_radii(double lo, double hi, int n)
{
    std::vector<double> r(static_cast<std::size_t>(n));
    if (n == 1) {
        r[0] = hi;
        return r;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (n - 1));
    r.back() = hi;
    return r;
}

// True where the positive part removes the subsolution, so it is zero nearby.
bool cut_off(const BarrierSpec& spec, const FieldJet& jet)
{
    return spec.kind == BarrierKind::subsolution && jet.value < spec.threshold;
}

enum class Sense { negative, nonnegative }; // required sign of the p-Laplacian

// Samples interior points and wall points over r_inner <= |x'| <= radius.
// `want_flux_positive` selects dW/dnu > 0 (supersolution) or <= 0.
void sample_region(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid, double r_inner,
                   double radius, Sense sense, bool want_flux_positive, Accumulator& acc)
{
    const int d = geometry.d;
    const auto radii = geometric_radii(r_inner, radius, grid.n_radial);
    for (double r : radii) {
        std::vector<double> xp(static_cast<std::size_t>(d - 1), 0.0);
        xp[0] = r;
        const double top = geometry.eps / 2.0 + geometry.h1(xp).value;
        const double bottom = -geometry.eps / 2.0 + geometry.h2(xp).value;
        for (int k = 0; k < grid.n_height; ++k) {
            const double eta = (k + 0.5) / grid.n_height;
            auto x = radial_point(d, r, bottom + eta * (top - bottom));
            const FieldJet jet = power_form_jet(spec, x);
            if (cut_off(spec, jet)) {
                // The truncated subsolution vanishes near this point.
                acc.record(std::move(x), "p_laplace", 0.0, kRoundingTolerance);
                ++acc.verdict.n_interior;
                continue;
            }
            ++acc.verdict.n_active_interior;
            const double lap = p_laplace_of(jet, spec.p);
            const double scale = p_laplace_scale(jet, spec.p);
            const double normalised = scale > 0.0 ? lap / scale : 0.0;
            const double signed_margin = sense == Sense::negative ? -normalised : normalised;
            acc.record(std::move(x), "p_laplace", lap, signed_margin + kRoundingTolerance);
            ++acc.verdict.n_interior;
        }
        for (Wall wall : {Wall::upper, Wall::lower}) {
            const auto x = wall_point(geometry, xp, wall);
            const FieldJet jet = power_form_jet(spec, x);
            if (cut_off(spec, jet)) {
                acc.record(x, wall == Wall::upper ? "flux_upper" : "flux_lower", 0.0, kRoundingTolerance);
                ++acc.verdict.n_boundary;
                continue;
            }
            ++acc.verdict.n_active_boundary;
            const double flux = neumann_flux(spec, geometry, xp, wall);
            const double gnorm = std::sqrt(dot(jet.grad, jet.grad));
            const double normalised = gnorm > 0.0 ? flux / gnorm : 0.0;
            const double signed_margin = want_flux_positive ? normalised : -normalised;
            acc.record(x, wall == Wall::upper ? "flux_upper" : "flux_lower", flux, signed_margin + kRoundingTolerance);
            ++acc.verdict.n_boundary;
        }
    }
}

void require_geometry_matches(const BarrierSpec& spec, const GapGeometry& geometry)
{
    geometry.validate();
    if (geometry.d != spec.d) throw ParameterError("barrier and geometry dimensions differ");
    if (geometry.m != spec.m) throw ParameterError("barrier and geometry convexity exponents differ");
}

template <class AtRadius>
BarrierVerdict bisect_radius(double r_lo, double r_hi, AtRadius&& at_radius)
{
    if (!(r_lo < r_hi)) {
        BarrierVerdict v = at_radius(r_hi);
        v.degenerate = true;
        v.pass = false;
        v.empirical_r_hat = 0.0;
        return v;
    }
    BarrierVerdict full = at_radius(r_hi);
    if (full.pass) {
        full.empirical_r_hat = r_hi;
        full.pass = true;
        return full;
    }
    double lo = r_lo, hi = r_hi;
    bool found = false;
    for (int step = 0; step < kBisectionSteps; ++step) {
        const double mid = 0.5 * (lo + hi);
        if (at_radius(mid).pass) {
            lo = mid;
            found = true;
        } else {
            hi = mid;
        }
    }
    if (!found) {
        // No tested radius passes; report the full region with its violations.
        full.pass = false;
        full.empirical_r_hat = 0.0;
        return full;
    }
    BarrierVerdict v = at_radius(lo);
    v.empirical_r_hat = lo;
    return v;
}

} // namespace

std::string to_string(BarrierKind kind)
{
    return kind == BarrierKind::supersolution ? "supersolution" : "subsolution";
}

BarrierSpec BarrierSpec::supersolution(int d, double m, double p, double tau, double gamma)
{
    BarrierSpec s;
    s.kind = BarrierKind::supersolution;
    s.d = d;
    s.m = m;
    s.p = p;
    s.tau = tau;
    s.gamma = gamma;
    s.coeff = m * (m + tau) / 2.0;
    s.threshold = 0.0;
    s.validate();
    return s;
}

BarrierSpec BarrierSpec::subsolution(double m, double p, double tau, double gamma, double eps)
{
    BarrierSpec s;
    s.kind = BarrierKind::subsolution;
    s.d = 2;
    s.m = m;
    s.p = p;
    s.tau = tau;
    s.gamma = gamma;
    s.eps = eps;
    s.coeff = m * (m - tau) / 2.0;
    if (m - 2.0 - tau > 0.0) s.threshold = std::pow(2.0 * m * eps / (m - 2.0 - tau), gamma / m);
    s.validate();
    return s;
}

void BarrierSpec::validate() const
{
    if (!(m > 2.0)) throw ParameterError("barrier: m must exceed 2");
    if (!(p > 1.0)) throw ParameterError("barrier: p must exceed 1");
    if (d < 2) throw ParameterError("barrier: d must be at least 2");
    if (kind == BarrierKind::supersolution) {
        const double room = p - d - m + 1.0;
        if (!(room > 0.0)) throw ParameterError("supersolution: requires p > d + m - 1");
        if (!(tau > 0.0 && tau < room)) throw ParameterError("supersolution: tau must lie in (0, p-d-m+1)");
        const double gmax = (room - tau) / (p - 1.0);
        if (!(gamma > 0.0 && gamma < gmax)) {
            throw ParameterError("supersolution: gamma must lie in (0, (p-d-m+1-tau)/(p-1))");
        }
        if (coeff != m * (m + tau) / 2.0) throw ParameterError("supersolution: coefficient a must equal m(m+tau)/2");
    } else {
        if (d != 2) throw ParameterError("subsolution: defined for d = 2 only");
        if (!(tau > 0.0 && tau < m - 2.0)) throw ParameterError("subsolution: tau must lie in (0, m-2)");
        const double gmin = std::max(0.0, (p - m - 1.0 + tau) / (p - 1.0));
        if (!(gamma > gmin)) throw ParameterError("subsolution: gamma must exceed max{0, (p-m-1+tau)/(p-1)}");
        if (!(eps > 0.0)) throw ParameterError("subsolution: eps must be positive");
        if (coeff != m * (m - tau) / 2.0) throw ParameterError("subsolution: coefficient b must equal m(m-tau)/2");
    }
}

PointEvaluation eval_barrier(const BarrierSpec& spec, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != spec.d) throw DomainError("eval_barrier: point dimension differs from d");
    const FieldJet jet = power_form_jet(spec, x);
    PointEvaluation out;
    out.untruncated_value = jet.value;
    out.value = jet.value;
    if (spec.kind == BarrierKind::subsolution) {
        out.value = std::max(jet.value - spec.threshold, 0.0);
        out.truncated = jet.value - spec.threshold <= 0.0;
    }
    out.grad = jet.grad;
    out.hess = jet.hess;
    const double g2 = dot(jet.grad, jet.grad);
    out.p_laplace = (g2 > 0.0 || spec.p >= 2.0) ? p_laplace_of(jet, spec.p) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

double p_laplace_of(const FieldJet& jet, double p)
{
    const std::size_t d = jet.grad.size();
    const double g2 = dot(jet.grad, jet.grad);
    if (g2 == 0.0) {
        if (p < 2.0) throw DomainError("p_laplace_of: vanishing gradient with p < 2");
        if (p < 4.0 && p != 2.0) {
            // |grad|^{p-4} |grad|^2 lap -> 0 for p > 2 as well
            return 0.0;
        }
    }
    double lap = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        lap += jet.hess[i * d + i];
        for (std::size_t j = 0; j < d; ++j) quad += jet.grad[i] * jet.hess[i * d + j] * jet.grad[j];
    }
    if (p == 2.0) return lap;
    if (g2 == 0.0) return 0.0;
    return std::pow(g2, (p - 4.0) / 2.0) * (g2 * lap + (p - 2.0) * quad);
}

double p_laplace_of(const ClosedFormField& f, double p, std::span<const double> x) { return p_laplace_of(f(x), p); }

double p_laplace_scale(const FieldJet& jet, double p)
{
    const std::size_t d = jet.grad.size();
    const double g2 = dot(jet.grad, jet.grad);
    if (g2 == 0.0) return 0.0;
    double lap = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        lap += jet.hess[i * d + i];
        for (std::size_t j = 0; j < d; ++j) quad += jet.grad[i] * jet.hess[i * d + j] * jet.grad[j];
    }
    return std::pow(g2, (p - 4.0) / 2.0) * (g2 * std::abs(lap) + std::abs(p - 2.0) * std::abs(quad));
}

std::vector<double> wall_point(const GapGeometry& geometry, std::span<const double> xprime, Wall wall)
{
    std::vector<double> x(xprime.begin(), xprime.end());
    if (wall == Wall::upper) {
        x.push_back(geometry.eps / 2.0 + geometry.h1(xprime).value);
    } else {
        x.push_back(-geometry.eps / 2.0 + geometry.h2(xprime).value);
    }
    return x;
}

std::vector<double> wall_normal(const GapGeometry& geometry, std::span<const double> xprime, Wall wall)
{
    // upper: (-grad h1, 1)/sqrt(1+|grad h1|^2); lower: (grad h2, -1)/sqrt(1+|grad h2|^2)
    const ProfileEval h = wall == Wall::upper ? geometry.h1(xprime) : geometry.h2(xprime);
    const double sgn = wall == Wall::upper ? 1.0 : -1.0;
    const double norm = std::sqrt(1.0 + dot(h.grad, h.grad));
    std::vector<double> nu(xprime.size() + 1);
    for (std::size_t i = 0; i < xprime.size(); ++i) nu[i] = -sgn * h.grad[i] / norm;
    nu.back() = sgn / norm;
    return nu;
}

double neumann_flux(const BarrierSpec& spec, const GapGeometry& geometry, std::span<const double> xprime, Wall wall)
{
    if (static_cast<int>(xprime.size()) != spec.d - 1) throw DomainError("neumann_flux: x' must have d-1 components");
    const auto x = wall_point(geometry, xprime, wall);
    const auto nu = wall_normal(geometry, xprime, wall);
    const FieldJet jet = power_form_jet(spec, x);
    return dot(jet.grad, nu);
}

double subsolution_core_radius(const BarrierSpec& spec)
{
    return std::pow(spec.m * spec.eps / (spec.m - 2.0 - spec.tau), 1.0 / spec.m);
}

BarrierVerdict verify_supersolution_at(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid,
                                       double radius)
{
    if (spec.kind != BarrierKind::supersolution) throw ParameterError("verify_supersolution: spec is not a supersolution");
    spec.validate();
    require_geometry_matches(spec, geometry);
    if (grid.n_radial < 2 || grid.n_height < 1) throw ParameterError("verify_supersolution: sample grid too small");

    const double r_inner = std::pow(geometry.eps, 2.0 / geometry.m);
    Accumulator acc;
    acc.verdict.spec = spec;
    acc.verdict.r_inner = r_inner;
    acc.verdict.r_outer = radius;
    std::ostringstream region;
    region << "Omega_r \\ Omega_{eps^{2/m}}: " << r_inner << " <= |x'| <= " << radius << ", " << describe(spec);
    acc.verdict.region = region.str();
    if (radius > r_inner) {
        sample_region(spec, geometry, grid, r_inner, radius, Sense::negative, true, acc);
    } else {
        acc.verdict.degenerate = true;
    }
    acc.verdict.n_samples = acc.verdict.n_interior + acc.verdict.n_boundary;
    acc.verdict.pass = !acc.verdict.degenerate && acc.verdict.n_violations == 0;
    acc.verdict.empirical_r_hat = acc.verdict.pass ? radius : 0.0;
    return acc.verdict;
}

BarrierVerdict verify_subsolution_at(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid,
                                     double radius)
{
    if (spec.kind != BarrierKind::subsolution) throw ParameterError("verify_subsolution: spec is not a subsolution");
    spec.validate();
    require_geometry_matches(spec, geometry);
    if (grid.n_radial < 2 || grid.n_height < 1) throw ParameterError("verify_subsolution: sample grid too small");
    if (std::abs(spec.eps - geometry.eps) > 1e-15 * geometry.eps) {
        throw ParameterError("verify_subsolution: barrier eps differs from geometry eps");
    }

    const double core = subsolution_core_radius(spec);
    Accumulator acc;
    acc.verdict.spec = spec;
    acc.verdict.r_inner = core;
    acc.verdict.r_outer = radius;
    std::ostringstream region;
    region << "Omega_r cap {|x1| >= (m eps/(m-2-tau))^{1/m}}: " << core << " <= |x1| <= " << radius << ", "
           << describe(spec);
    acc.verdict.region = region.str();

    if (radius > core) {
        sample_region(spec, geometry, grid, core, radius, Sense::nonnegative, false, acc);
    } else {
        acc.verdict.degenerate = true;
    }

    // The truncated barrier vanishes on the closed core |x1| <= core.
    const int n_core = std::max(2, grid.n_radial / 4);
    for (int i = 0; i < n_core; ++i) {
        const double x1 = core * i / (n_core - 1);
        const double xs[1] = {x1};
        const double top = geometry.eps / 2.0 + geometry.h1(std::span<const double>(xs, 1)).value;
        const double bottom = -geometry.eps / 2.0 + geometry.h2(std::span<const double>(xs, 1)).value;
        for (int k = 0; k <= grid.n_height; ++k) {
            const double x2 = bottom + (top - bottom) * k / grid.n_height;
            double value = 0.0;
            if (x1 > 0.0) {
                const double pt[2] = {x1, x2};
                value = eval_barrier(spec, pt).value;
            }
            acc.record({x1, x2}, "zero_region", value, value == 0.0 ? kRoundingTolerance : -value);
            ++acc.verdict.n_zero_region;
        }
    }

    acc.verdict.n_samples = acc.verdict.n_interior + acc.verdict.n_boundary + acc.verdict.n_zero_region;
    if (acc.verdict.n_active_interior == 0 || acc.verdict.n_active_boundary == 0) acc.verdict.degenerate = true;
    acc.verdict.pass = !acc.verdict.degenerate && acc.verdict.n_violations == 0;
    acc.verdict.empirical_r_hat = acc.verdict.pass ? radius : 0.0;
    return acc.verdict;
}

BarrierVerdict verify_supersolution(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid)
{
    const double r_lo = std::pow(geometry.eps, 2.0 / geometry.m);
    return bisect_radius(r_lo, geometry.R0,
                         [&](double r) { return verify_supersolution_at(spec, geometry, grid, r); });
}

BarrierVerdict verify_subsolution(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid)
{
    if (!std::holds_alternative<CurvilinearSquare>(geometry.profile.kind()) || geometry.r_tilde0() != 1.0) {
        throw ParameterError("verify_subsolution: requires the unit curvilinear square profile");
    }
    const double r_lo = subsolution_core_radius(spec);
    return bisect_radius(r_lo, geometry.R0, [&](double r) { return verify_subsolution_at(spec, geometry, grid, r); });
}

} // namespace pgap
