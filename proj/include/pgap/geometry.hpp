#pragma once

// Two inclusions separated by a thin gap: profiles h1 (upper wall) and h2
// (lower wall), the gap width delta(x') = eps + h1(x') - h2(x'), the
// convexity hypotheses (H1)-(H3) and the closed-form length constants that
// go with them.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace pgap {

/// Ellipsoid-type profile |x'|^m + |x_d - r0|^m = r0^m (rounded square for d=2).
struct CurvilinearSquare {
    double r_tilde0 = 1.0;
};

/// h1 = lambda |x'|^m; h2 = -h1 when symmetric, h2 = 0 otherwise.
struct PowerProfile {
    double lambda = 0.25;
    bool symmetric = true;
};

/// h1 = h2 = 0.
struct FlatProfile {};

/// Radial shape f(rho) and its first two derivatives. `fp_over_rho` is
/// f'(rho)/rho, kept separate so the Hessian is finite at rho = 0.
struct RadialJet {
    double f = 0.0;
    double fp = 0.0;
    double fpp = 0.0;
    double fp_over_rho = 0.0;
};

class ProfileSpec {
public:
    using Kind = std::variant<CurvilinearSquare, PowerProfile, FlatProfile>;

    ProfileSpec() = default;
    ProfileSpec(Kind kind, double m);

    static ProfileSpec curvilinear_square(double m, double r_tilde0 = 1.0);
    static ProfileSpec power(double m, double lambda, bool symmetric = true);
    static ProfileSpec flat(double m);

    const Kind& kind() const { return kind_; }
    double m() const { return m_; }
    std::string name() const;

    /// Radius beyond which the profile is undefined (infinity if none).
    double domain_radius() const;
    bool is_symmetric() const;
    bool is_flat() const { return std::holds_alternative<FlatProfile>(kind_); }

    /// Radial jets of h1 and h2 at rho = |x'| >= 0.
    RadialJet upper(double rho) const;
    RadialJet lower(double rho) const;

private:
    RadialJet shape(double rho) const;

    Kind kind_ = CurvilinearSquare{};
    double m_ = 4.0;
};

struct ConvexityBounds {
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    double kappa3 = 1.0;
    double kappa4 = 1.0;
};

/// Value, gradient and Hessian of a profile at a point x' in R^{d-1}.
struct ProfileEval {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> hess; // row-major (d-1)x(d-1)
};

struct GapGeometry {
    int d = 2;
    double m = 4.0;
    double eps = 1e-3;
    ProfileSpec profile = ProfileSpec::curvilinear_square(4.0);
    ConvexityBounds kappa;
    double R0 = 0.25;
    /// Only consulted for R_{0,3}; no default value is claimed correct.
    std::optional<double> mu0;

    /// Throws ParameterError when eps, m, R0 or d are out of range.
    void validate() const;

    double r_tilde0() const;

    ProfileEval h1(std::span<const double> xprime) const;
    ProfileEval h2(std::span<const double> xprime) const;

    // d = 2 shorthands with signed x1.
    double h1(double x1) const;
    double h2(double x1) const;
    double dh1(double x1) const;
    double dh2(double x1) const;
    double delta(double x1) const;
    double ddelta(double x1) const;
};

/// Gap width eps + h1(x') - h2(x'); throws DomainError outside the profile domain.
double eval_delta(const GapGeometry& geometry, std::span<const double> xprime);
double eval_delta(const GapGeometry& geometry, double x1);

struct AdmissibilitySample {
    double rho = 0.0;
    double h1_lower = 0.0;   // (h1-h2)/rho^m - kappa1
    double h1_upper = 0.0;   // kappa2 - (h1-h2)/rho^m
    double grad_upper = 0.0; // kappa3 - |grad h1|/rho^{m-1}
    double grad_lower = 0.0; // kappa3 - |grad h2|/rho^{m-1}
};

struct AdmissibilityReport {
    std::vector<AdmissibilitySample> samples;
    ConvexityBounds estimated;
    /// "exact" for closed-form suprema, "sampled" otherwise.
    std::string estimate_method;
    double c2_norm_estimate = 0.0;
    double h3_margin = 0.0; // kappa4 - c2_norm_estimate
    bool h1_pass = false;
    bool h2_pass = false;
    bool h3_pass = false;
    bool pass = false;
};

/// Samples (H1)-(H3) on a log-spaced radial set in (0, 2 R0].
AdmissibilityReport check_admissibility(const GapGeometry& geometry, int samples);

struct GeometryConstants {
    double c0 = 0.0;
    double c_tilde0 = 0.0;
    double R01 = 0.0;
    double R02 = 0.0;
    std::optional<double> R03; // requires mu0
    int j0 = 0;
    double r01 = 0.0;
    double r02 = 0.0;
    double r03 = 0.0;
    double r04 = 0.0;
    double beta = 0.5;
    double p = 2.0;
};

GeometryConstants compute_constants(const GapGeometry& geometry, double p, double beta);

// Individual closed forms, exposed for property tests.
double constant_c0(double m, const ConvexityBounds& k);
double constant_c_tilde0(double m, const ConvexityBounds& k);
int iteration_index_j0(int d, double p);

} // namespace pgap
