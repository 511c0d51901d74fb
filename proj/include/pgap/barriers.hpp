#pragma once

// Explicit barrier functions for the insulated p-Laplace neck problem.
//
//   supersolution  w  = (|x'|^m + a |x'|^{m-2} x_d^2)^{gamma/m},   a = m(m+tau)/2
//   subsolution    w_ = [(|x'|^m + b |x'|^{m-2} x_d^2)^{gamma/m} - c]_+,
//                  b = m(m-tau)/2,  c = (2 m eps/(m-2-tau))^{gamma/m}
//
// Derivatives are closed-form. Sign conditions are verified by sampling the
// neck, not proven.

#include "pgap/geometry.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pgap {

enum class BarrierKind { supersolution, subsolution };

std::string to_string(BarrierKind kind);

struct BarrierSpec {
    BarrierKind kind = BarrierKind::supersolution;
    int d = 2;
    double m = 4.0;
    double p = 2.0;
    double tau = 0.5;
    double gamma = 0.5;
    double coeff = 0.0;
    double threshold = 0.0;
    double eps = 0.0; // subsolution only; fixes `threshold`

    /// Throws ParameterError unless tau in (0, p-d-m+1) and
    /// gamma in (0, (p-d-m+1-tau)/(p-1)).
    static BarrierSpec supersolution(int d, double m, double p, double tau, double gamma);
    /// Throws ParameterError unless tau in (0, m-2) and
    /// gamma > max{0, (p-m-1+tau)/(p-1)}.
    static BarrierSpec subsolution(double m, double p, double tau, double gamma, double eps);

    /// Re-checks the parameter ranges and the closed form of coeff/threshold.
    void validate() const;
};

/// Value, gradient and row-major Hessian of a smooth field at one point.
struct FieldJet {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> hess;
};

using ClosedFormField = std::function<FieldJet(std::span<const double>)>;

struct PointEvaluation {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> hess;
    double p_laplace = 0.0;
    /// dW/dnu on a wall point, NaN for interior evaluations.
    double neumann_flux = std::numeric_limits<double>::quiet_NaN();
    /// Subsolutions: value of the untruncated branch and whether it was cut.
    double untruncated_value = 0.0;
    bool truncated = false;
};

/// Throws DomainError at x' = 0 (the barriers are not smooth on the axis).
PointEvaluation eval_barrier(const BarrierSpec& spec, std::span<const double> x);

/// |grad f|^{p-4} (|grad f|^2 lap f + (p-2) <grad f, Hess f grad f>).
/// Throws DomainError when grad f = 0 and p < 2.
double p_laplace_of(const FieldJet& jet, double p);
double p_laplace_of(const ClosedFormField& f, double p, std::span<const double> x);

/// Sum of the absolute values of the two bracketed terms above, times the
/// same power of |grad f|. Used to normalise sign margins.
double p_laplace_scale(const FieldJet& jet, double p);

enum class Wall { upper, lower };

/// Boundary point (x', eps/2 + h1(x')) on the upper wall or
/// (x', -eps/2 + h2(x')) on the lower one.
std::vector<double> wall_point(const GapGeometry& geometry, std::span<const double> xprime, Wall wall);

/// Unit normal pointing out of the gap region at a wall point.
std::vector<double> wall_normal(const GapGeometry& geometry, std::span<const double> xprime, Wall wall);

double neumann_flux(const BarrierSpec& spec, const GapGeometry& geometry, std::span<const double> xprime, Wall wall);

struct SampleGrid {
    int n_radial = 200;
    int n_height = 40;
};

struct Violation {
    std::vector<double> point;
    std::string quantity; // "p_laplace", "flux_upper", "flux_lower", "zero_region"
    double value = 0.0;
    double margin = 0.0;
};

struct BarrierVerdict {
    BarrierSpec spec;
    std::string region;
    double r_inner = 0.0;
    double r_outer = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_interior = 0;
    std::size_t n_boundary = 0;
    std::size_t n_zero_region = 0;
    /// Samples where the (truncated) barrier is nonzero, i.e. where the
    /// sign conditions are actually exercised.
    std::size_t n_active_interior = 0;
    std::size_t n_active_boundary = 0;
    /// Truncated to kMaxStoredViolations entries; n_violations is exact.
    std::vector<Violation> violations;
    std::size_t n_violations = 0;
    double min_margin = 0.0;
    double max_margin = 0.0;
    double empirical_r_hat = 0.0;
    /// Empty region, or no active interior or wall sample.
    bool degenerate = false;
    bool pass = false;
};

inline constexpr std::size_t kMaxStoredViolations = 1000;

/// Samples the region r_inner <= |x'| <= radius (interior and both walls).
BarrierVerdict verify_supersolution_at(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid,
                                       double radius);
BarrierVerdict verify_subsolution_at(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid,
                                     double radius);

/// Full verification: bisection (20 steps over (eps^{2/m}, R0]) for the
/// largest radius without violations, then the verdict on that region.
BarrierVerdict verify_supersolution(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid);
BarrierVerdict verify_subsolution(const BarrierSpec& spec, const GapGeometry& geometry, const SampleGrid& grid);

/// Inner edge of the subsolution check region, (m eps/(m-2-tau))^{1/m}.
double subsolution_core_radius(const BarrierSpec& spec);

} // namespace pgap
