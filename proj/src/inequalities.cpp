#include "pgap/inequalities.hpp"

#include "pgap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace pgap {

namespace {

// Equality cases (p = 2, sigma = 0) hold with equality analytically, so the
// comparison allows a relative rounding slack.
constexpr double kRelativeSlack = 1e-12;

double norm2(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double dist2(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

void require_same_size(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) throw ParameterError("vectors must be nonempty and of equal length");
}

class PairSampler {
public:
    PairSampler(int d, std::uint64_t seed) : d_(d), rng_(seed) {}

    void draw(std::vector<double>& a, std::vector<double>& b)
    {
        fill(a);
        fill(b);
    }

private:
    void fill(std::vector<double>& v)
    {
        v.resize(static_cast<std::size_t>(d_));
        double n = 0.0;
        do {
            for (double& x : v) x = normal_(rng_);
            n = std::sqrt(norm2(v));
        } while (n == 0.0);
        const double mag = std::pow(10.0, decade_(rng_));
        for (double& x : v) x *= mag / n;
    }

    int d_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> decade_{-3.0, 3.0};
};

} // namespace

double flux_monotonicity(std::span<const double> a, std::span<const double> b, double p)
{
    require_same_size(a, b);
    const double na = std::sqrt(norm2(a)), nb = std::sqrt(norm2(b));
    const double fa = na > 0.0 ? std::pow(na, p - 2.0) : 0.0;
    const double fb = nb > 0.0 ? std::pow(nb, p - 2.0) : 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (fa * a[i] - fb * b[i]) * (a[i] - b[i]);
    return s;
}

double flux_monotonicity_bound(std::span<const double> a, std::span<const double> b, double p)
{
    require_same_size(a, b);
    if (!(p > 1.0)) throw ParameterError("flux_monotonicity_bound: p must exceed 1");
    const double d2 = dist2(a, b);
    if (p < 2.0) {
        const double s = norm2(a) + norm2(b);
        if (s == 0.0) return 0.0;
        return (p - 1.0) / std::pow(2.0, (2.0 - p) / 2.0) * std::pow(s, (p - 2.0) / 2.0) * d2;
    }
    const double na = std::sqrt(norm2(a)), nb = std::sqrt(norm2(b));
    return 0.5 * (std::pow(na, p - 2.0) + std::pow(nb, p - 2.0)) * d2;
}

double power_map_lower_constant(double sigma)
{
    if (!(sigma > -1.0)) throw ParameterError("power map constants require sigma > -1");
    return sigma <= 0.0 ? 1.0 + sigma : std::pow(5.0, -(1.0 + sigma / 2.0));
}

double power_map_upper_constant(double sigma)
{
    if (!(sigma > -1.0)) throw ParameterError("power map constants require sigma > -1");
    if (sigma < 0.0) return std::max(2.0, std::pow(10.0, 0.5 * std::abs(sigma)));
    return (1.0 + sigma) * std::pow(2.0, sigma / 2.0);
}

double power_map_ratio(std::span<const double> a, std::span<const double> b, double sigma)
{
    require_same_size(a, b);
    const double d2 = dist2(a, b);
    if (d2 == 0.0) throw DomainError("power_map_ratio: vectors coincide");
    const double na = std::sqrt(norm2(a)), nb = std::sqrt(norm2(b));
    const double fa = na > 0.0 ? std::pow(na, sigma) : 0.0;
    const double fb = nb > 0.0 ? std::pow(nb, sigma) : 0.0;
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = fa * a[i] - fb * b[i];
        num += t * t;
    }
    return std::sqrt(num) / (std::sqrt(d2) * std::pow(norm2(a) + norm2(b), sigma / 2.0));
}

OracleReport check_flux_monotonicity(int d, double p, int n_pairs, std::uint64_t seed)
{
    if (d < 1 || n_pairs < 1) throw ParameterError("check_flux_monotonicity: need d >= 1 and n_pairs >= 1");
    PairSampler sampler(d, seed);
    std::vector<double> a, b;
    OracleReport report;
    report.worst_relative_margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_pairs; ++k) {
        sampler.draw(a, b);
        const double lhs = flux_monotonicity(a, b, p);
        const double rhs = flux_monotonicity_bound(a, b, p);
        const double scale = std::max(std::abs(lhs), std::abs(rhs));
        const double margin = scale > 0.0 ? (lhs - rhs) / scale : 0.0;
        report.worst_relative_margin = std::min(report.worst_relative_margin, margin);
        if (margin < -kRelativeSlack) ++report.n_failures;
        ++report.n_pairs;
    }
    return report;
}

OracleReport check_power_map_bounds(int d, double sigma, int n_pairs, std::uint64_t seed)
{
    if (d < 1 || n_pairs < 1) throw ParameterError("check_power_map_bounds: need d >= 1 and n_pairs >= 1");
    const double lo = power_map_lower_constant(sigma);
    const double hi = power_map_upper_constant(sigma);
    PairSampler sampler(d, seed);
    std::vector<double> a, b;
    OracleReport report;
    report.worst_relative_margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_pairs; ++k) {
        sampler.draw(a, b);
        const double r = power_map_ratio(a, b, sigma);
        const double margin = std::min((r - lo) / lo, (hi - r) / hi);
        report.worst_relative_margin = std::min(report.worst_relative_margin, margin);
        if (margin < -kRelativeSlack) ++report.n_failures;
        ++report.n_pairs;
    }
    return report;
}

} // namespace pgap
