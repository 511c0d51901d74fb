#include "pgap/geometry.hpp"

#include "pgap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pgap {

namespace {

constexpr double kMinSampleRadius = 1e-12;
// Relative slack on the (H1)/(H2) comparisons; ratios that equal a bound
// analytically may land one ulp on the wrong side.
constexpr double kRoundingAllowance = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

RadialJet negate(RadialJet j)
{
    j.f = -j.f;
    j.fp = -j.fp;
    j.fpp = -j.fpp;
    j.fp_over_rho = -j.fp_over_rho;
    return j;
}

ProfileEval evaluate(const RadialJet& jet, std::span<const double> xprime, double rho)
{
    const std::size_t n = xprime.size();
    ProfileEval out;
    out.value = jet.f;
    out.grad.assign(n, 0.0);
    out.hess.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.grad[i] = jet.fp_over_rho * xprime[i];
    }
    // Hess f(|x|) = f'' e e^T + (f'/rho)(I - e e^T), e = x/|x|.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double eiej = rho > 0.0 ? xprime[i] * xprime[j] / (rho * rho) : (i == j ? 1.0 / n : 0.0);
            double id = i == j ? 1.0 : 0.0;
            out.hess[i * n + j] = jet.fpp * eiej + jet.fp_over_rho * (id - eiej);
        }
    }
    return out;
}

double norm(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

ProfileSpec::ProfileSpec(Kind kind, double m) : kind_(std::move(kind)), m_(m) {}

ProfileSpec ProfileSpec::curvilinear_square(double m, double r_tilde0)
{
    if (!(r_tilde0 > 0.0)) throw ParameterError("curvilinear_square: r_tilde0 must be positive");
    return ProfileSpec(CurvilinearSquare{r_tilde0}, m);
}

ProfileSpec ProfileSpec::power(double m, double lambda, bool symmetric)
{
    if (!(lambda > 0.0)) throw ParameterError("power profile: lambda must be positive");
    return ProfileSpec(PowerProfile{lambda, symmetric}, m);
}

ProfileSpec ProfileSpec::flat(double m) { return ProfileSpec(FlatProfile{}, m); }

std::string ProfileSpec::name() const
{
    return std::visit(overloaded{[](const CurvilinearSquare&) { return std::string("curvilinear_square"); },
                                 [](const PowerProfile&) { return std::string("power"); },
                                 [](const FlatProfile&) { return std::string("flat"); }},
                      kind_);
}

double ProfileSpec::domain_radius() const
{
    if (auto* cs = std::get_if<CurvilinearSquare>(&kind_)) return cs->r_tilde0;
    return std::numeric_limits<double>::infinity();
}

bool ProfileSpec::is_symmetric() const
{
    if (auto* pw = std::get_if<PowerProfile>(&kind_)) return pw->symmetric;
    return true;
}

RadialJet ProfileSpec::shape(double rho) const
{
    const double m = m_;
    return std::visit(
        overloaded{
            [&](const CurvilinearSquare& cs) {
                const double r0 = cs.r_tilde0;
                if (!(rho < r0)) {
                    std::ostringstream msg;
                    msg << "curvilinear square profile undefined at |x'| = " << rho << " >= r_tilde0 = " << r0;
                    throw DomainError(msg.str());
                }
                const double u = rho / r0;
                const double t = std::pow(u, m);
                // 1 - (1-t)^{1/m} without cancellation for small t
                const double one_minus_root = -std::expm1(std::log1p(-t) / m);
                RadialJet j;
                j.f = r0 * one_minus_root;
                const double q = std::pow(1.0 - t, 1.0 / m - 1.0);
                j.fp = std::pow(u, m - 1.0) * q;
                j.fp_over_rho = std::pow(u, m - 2.0) * q / r0;
                j.fpp = (m - 1.0) * std::pow(u, m - 2.0) * std::pow(1.0 - t, 1.0 / m - 2.0) / r0;
                return j;
            },
            [&](const PowerProfile& pw) {
                RadialJet j;
                j.f = pw.lambda * std::pow(rho, m);
                j.fp = m * pw.lambda * std::pow(rho, m - 1.0);
                j.fp_over_rho = m * pw.lambda * std::pow(rho, m - 2.0);
                j.fpp = m * (m - 1.0) * pw.lambda * std::pow(rho, m - 2.0);
                return j;
            },
            [&](const FlatProfile&) { return RadialJet{}; }},
        kind_);
}

RadialJet ProfileSpec::upper(double rho) const { return shape(rho); }

RadialJet ProfileSpec::lower(double rho) const
{
    if (auto* pw = std::get_if<PowerProfile>(&kind_); pw && !pw->symmetric) {
        if (!(rho < domain_radius())) throw DomainError("profile evaluated outside its domain");
        return RadialJet{};
    }
    return negate(shape(rho));
}

void GapGeometry::validate() const
{
    if (d != 2 && d != 3) throw ParameterError("geometry: d must be 2 or 3");
    if (!(eps > 0.0)) throw ParameterError("geometry: eps must be positive");
    if (!(m >= 2.0)) throw ParameterError("geometry: m must be >= 2");
    if (!(R0 > 0.0)) throw ParameterError("geometry: R0 must be positive");
    if (profile.m() != m) throw ParameterError("geometry: profile exponent differs from m");
}

double GapGeometry::r_tilde0() const
{
    if (auto* cs = std::get_if<CurvilinearSquare>(&profile.kind())) return cs->r_tilde0;
    return std::numeric_limits<double>::quiet_NaN();
}

ProfileEval GapGeometry::h1(std::span<const double> xprime) const
{
    const double rho = norm(xprime);
    return evaluate(profile.upper(rho), xprime, rho);
}

ProfileEval GapGeometry::h2(std::span<const double> xprime) const
{
    const double rho = norm(xprime);
    return evaluate(profile.lower(rho), xprime, rho);
}

double GapGeometry::h1(double x1) const { return profile.upper(std::abs(x1)).f; }
double GapGeometry::h2(double x1) const { return profile.lower(std::abs(x1)).f; }

double GapGeometry::dh1(double x1) const
{
    const double s = x1 < 0.0 ? -1.0 : 1.0;
    return s * profile.upper(std::abs(x1)).fp;
}

double GapGeometry::dh2(double x1) const
{
    const double s = x1 < 0.0 ? -1.0 : 1.0;
    return s * profile.lower(std::abs(x1)).fp;
}

double GapGeometry::delta(double x1) const { return eps + h1(x1) - h2(x1); }
double GapGeometry::ddelta(double x1) const { return dh1(x1) - dh2(x1); }

double eval_delta(const GapGeometry& geometry, std::span<const double> xprime)
{
    if (static_cast<int>(xprime.size()) != geometry.d - 1) {
        throw DomainError("eval_delta: x' must have d-1 components");
    }
    const double rho = norm(xprime);
    const double value = geometry.eps + geometry.profile.upper(rho).f - geometry.profile.lower(rho).f;
    if (!(value > 0.0)) throw GeometryError("eval_delta: non-positive gap width");
    return value;
}

double eval_delta(const GapGeometry& geometry, double x1)
{
    const double xs[1] = {x1};
    return eval_delta(geometry, std::span<const double>(xs, 1));
}

AdmissibilityReport check_admissibility(const GapGeometry& geometry, int samples)
{
    if (samples < 16) throw ParameterError("check_admissibility: need at least 16 samples");
    geometry.validate();

    const double m = geometry.m;
    const double rmax = 2.0 * geometry.R0;
    if (!(rmax < geometry.profile.domain_radius())) {
        std::ostringstream msg;
        msg << "check_admissibility: profile not differentiable on |x'| <= 2 R0 = " << rmax;
        throw DomainError(msg.str());
    }
    const ConvexityBounds& k = geometry.kappa;

    AdmissibilityReport report;
    report.samples.reserve(static_cast<std::size_t>(samples));

    double ratio_min = std::numeric_limits<double>::infinity();
    double ratio_max = 0.0;
    double grad_max = 0.0;
    double sup_f1 = 0.0, sup_fp1 = 0.0, sup_fpp1 = 0.0;
    double sup_f2 = 0.0, sup_fp2 = 0.0, sup_fpp2 = 0.0;

    const double log_lo = std::log(kMinSampleRadius);
    const double log_hi = std::log(rmax);
    for (int s = 0; s < samples; ++s) {
        const double rho = std::exp(log_lo + (log_hi - log_lo) * s / (samples - 1));
        const RadialJet up = geometry.profile.upper(rho);
        const RadialJet lo = geometry.profile.lower(rho);
        if (!std::isfinite(up.fp) || !std::isfinite(lo.fp) || !std::isfinite(up.fpp) || !std::isfinite(lo.fpp)) {
            throw DomainError("check_admissibility: profile derivative not finite at a sample");
        }
        const double ratio = (up.f - lo.f) / std::pow(rho, m);
        const double g1 = std::abs(up.fp) / std::pow(rho, m - 1.0);
        const double g2 = std::abs(lo.fp) / std::pow(rho, m - 1.0);

        AdmissibilitySample smp;
        smp.rho = rho;
        smp.h1_lower = ratio - k.kappa1 * (1.0 - kRoundingAllowance);
        smp.h1_upper = k.kappa2 * (1.0 + kRoundingAllowance) - ratio;
        smp.grad_upper = k.kappa3 * (1.0 + kRoundingAllowance) - g1;
        smp.grad_lower = k.kappa3 * (1.0 + kRoundingAllowance) - g2;
        report.samples.push_back(smp);

        ratio_min = std::min(ratio_min, ratio);
        ratio_max = std::max(ratio_max, ratio);
        grad_max = std::max({grad_max, g1, g2});
        sup_f1 = std::max(sup_f1, std::abs(up.f));
        sup_fp1 = std::max(sup_fp1, std::abs(up.fp));
        sup_fpp1 = std::max(sup_fpp1, std::abs(up.fpp));
        sup_f2 = std::max(sup_f2, std::abs(lo.f));
        sup_fp2 = std::max(sup_fp2, std::abs(lo.fp));
        sup_fpp2 = std::max(sup_fpp2, std::abs(lo.fpp));
    }

    // C^2 norm of both profiles stands in for the C^m norm of (H3).
    const auto& kind = geometry.profile.kind();
    if (auto* pw = std::get_if<PowerProfile>(&kind)) {
        const double lam = pw->lambda;
        const double coeff = pw->symmetric ? 2.0 * lam : lam;
        report.estimated.kappa1 = coeff;
        report.estimated.kappa2 = coeff;
        report.estimated.kappa3 = m * lam;
        const double one = lam * std::pow(rmax, m) + m * lam * std::pow(rmax, m - 1.0) +
                           m * (m - 1.0) * lam * std::pow(rmax, m - 2.0);
        report.c2_norm_estimate = pw->symmetric ? 2.0 * one : one;
        report.estimate_method = "exact";
    } else if (std::holds_alternative<FlatProfile>(kind)) {
        report.estimated = ConvexityBounds{0.0, 0.0, 0.0, 0.0};
        report.c2_norm_estimate = 0.0;
        report.estimate_method = "exact";
    } else {
        report.estimated.kappa1 = ratio_min;
        report.estimated.kappa2 = ratio_max;
        report.estimated.kappa3 = grad_max;
        report.c2_norm_estimate = sup_f1 + sup_fp1 + sup_fpp1 + sup_f2 + sup_fp2 + sup_fpp2;
        report.estimate_method = "sampled";
    }
    report.estimated.kappa4 = report.c2_norm_estimate;
    report.h3_margin = k.kappa4 - report.c2_norm_estimate;

    report.h1_pass = std::all_of(report.samples.begin(), report.samples.end(),
                                 [](const AdmissibilitySample& s) { return s.h1_lower >= 0.0 && s.h1_upper >= 0.0; });
    report.h2_pass = std::all_of(report.samples.begin(), report.samples.end(),
                                 [](const AdmissibilitySample& s) { return s.grad_upper >= 0.0 && s.grad_lower >= 0.0; });
    report.h3_pass = report.h3_margin >= 0.0;
    report.pass = report.h1_pass && report.h2_pass && report.h3_pass;
    return report;
}

double constant_c0(double m, const ConvexityBounds& k)
{
    return std::pow(k.kappa1, -1.0 / m) * std::min(1.0, std::pow(2.0, -(m + 1.0)) * k.kappa1 / k.kappa3);
}

double constant_c_tilde0(double m, const ConvexityBounds& k)
{
    return std::pow(k.kappa1, -1.0 / m) *
           std::min(1.0, k.kappa1 / k.kappa3 / std::sqrt(51840.0 + std::pow(4.0, m + 1.0)));
}

int iteration_index_j0(int d, double p)
{
    return static_cast<int>(std::floor(6.0 * d / std::min(p, 2.0))) + 1;
}

GeometryConstants compute_constants(const GapGeometry& geometry, double p, double beta)
{
    if (!(p > 1.0)) throw ParameterError("compute_constants: p must exceed 1");
    if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("compute_constants: beta must lie in (0,1)");
    const ConvexityBounds& k = geometry.kappa;
    if (!(k.kappa1 > 0.0 && k.kappa2 >= k.kappa1 && k.kappa3 > 0.0 && k.kappa4 > 0.0)) {
        throw ParameterError("compute_constants: convexity bounds must satisfy 0 < kappa1 <= kappa2, kappa3, kappa4 > 0");
    }
    const double m = geometry.m;
    const double d = geometry.d;

    GeometryConstants c;
    c.p = p;
    c.beta = beta;
    c.c0 = constant_c0(m, k);
    c.c_tilde0 = constant_c_tilde0(m, k);

    const double e = 1.0 / (2.0 * m - 2.0);
    c.R01 = std::pow(2.0, -m / (m - 1.0)) * std::pow(k.kappa2 * k.kappa3, -e) *
            std::min({1.0, std::pow(std::pow(k.kappa1, 1.0 / m) * c.c0, e) / std::pow(2.0, 1.0 / (m - 1.0)),
                      std::pow(k.kappa1 / k.kappa3, e) / std::pow(2.0, (2.0 * m - 1.0) / (2.0 * m - 2.0))});
    c.R02 = std::min(std::pow(2.0, -(2.0 * m + 1.0) / (2.0 * m - 1.0)) * std::pow(k.kappa3, -1.0 / (m - 1.0)),
                     std::pow(std::sqrt(2.0) * k.kappa2 * k.kappa4 * (d - 1.0) * (d - 1.0), -1.0 / m));
    c.j0 = iteration_index_j0(geometry.d, p);
    if (geometry.mu0) {
        const double mu0 = *geometry.mu0;
        if (!(mu0 > 0.0)) throw ParameterError("compute_constants: mu0 must be positive");
        c.R03 = std::pow(12.0 / 13.0 * c.c_tilde0 * std::pow(mu0, c.j0), 1.0 / (m - 1.0)) * std::pow(k.kappa2, -1.0 / m);
    }

    c.r01 = std::min(std::pow(2.0, 1.0 / m), 2.0 / 3.0 * geometry.R0);
    const double base = std::pow(std::min(1.0, std::pow(4.0, -(m + 1.0)) * k.kappa1) /
                                     (k.kappa2 * (k.kappa3 + k.kappa4) + k.kappa3 * (k.kappa3 + 1.0)),
                                 1.0 / (m - 1.0));
    const double branch = m < 3.0 ? std::pow(6.0, -(m + 2.0) / (m - 1.0)) / std::pow(d - 1.0, 2.0 / (m - 1.0))
                                  : std::pow(4.0, -m / (m - 1.0));
    c.r02 = base * branch;
    c.r03 = std::pow(2.0, -3.0 * (m + 1.0) / (m - 1.0)) * std::pow(k.kappa1 / k.kappa3, 1.0 / (m - 1.0));
    c.r04 = std::min(std::pow(geometry.R0, 1.0 / (1.0 - beta)), std::pow(2.0, -1.0 / beta)) /
            (c.c_tilde0 * std::pow(2.0 * k.kappa2, 1.0 / m));
    return c;
}

} // namespace pgap
