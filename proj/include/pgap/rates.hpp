#pragma once

#include "pgap/geometry.hpp"
#include "pgap/neck_solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pgap {

enum class Regime { convexity_dominated, nonlinearity_dominated, critical };

std::string to_string(Regime regime);

/// Closed-form blow-up exponents beta in |grad u| ~ eps^{-beta}.
struct TheoryRates {
    int d = 2;
    double m = 4.0;
    double p = 2.0;
    double tau = 0.5;
    /// 1/max{p-1, m}.
    double rate_2d = 0.0;
    /// 1/m, valid for every p > 1.
    double upper_general = 0.0;
    /// (d+m-2+2 tau)/(m(p-1)); needs p > d+m-1 and tau < (p+1-d-m)/2.
    std::optional<double> upper_large_p;
    /// (1-tau)/m for p <= m+1, (m-2 tau)/(m(p-1)) otherwise.
    double lower = 0.0;
    Regime regime = Regime::convexity_dominated;
};

double convexity_branch_rate(double m);
double nonlinearity_branch_rate(double p);

/// Throws ParameterError for d < 2, m <= 2, p <= 1 or tau outside (0, m-2).
TheoryRates theory_exponents(int d, double m, double p, double tau);

/// Lower-bound exponent alone; ParameterError unless 0 < tau < m-2.
double lower_bound_exponent(double m, double p, double tau);

struct RateFit {
    std::vector<double> eps;
    std::vector<double> gmax;
    double fitted_exponent = 0.0; // slope of log gmax against -log eps
    double intercept = 0.0;
    double r_squared = 0.0;
    std::optional<TheoryRates> theory;
    std::optional<double> abs_gap;
};

/// Least-squares fit; ParameterError for fewer than 4 pairs, DomainError
/// for non-positive data or a single distinct eps.
RateFit fit_exponent(const std::vector<double>& eps, const std::vector<double>& gmax);

struct OscillationGradientRatio {
    double ratio = 0.0;
    int n_cells = 0;
    int n_skipped = 0; // oscillation below 1e-12 osc(u)
};

/// max over cells of |grad u| (eps + |x1|^m)^{1/m} / osc over the slab of
/// half-width (c_tilde0/3) delta^{1/m}. Cells whose slab leaves the neck are
/// not sampled. DomainError when every sampled cell is skipped.
OscillationGradientRatio oscillation_gradient_ratio(const DiscreteField& field, double c_tilde0);

/// Default measurement radius (4 m eps/(m-2-tau))^{1/m}.
double measurement_radius(double m, double eps, double tau);

struct SweepPlan {
    GapGeometry geometry; // eps is overwritten per point
    SolverConfig solver;
    double L = 0.0;
    std::vector<double> eps; // strictly decreasing, at least 4 entries
    double measure_tau = 0.5;
    double harnack_r = 0.05;
    int jobs = 1;

    void validate() const;
};

struct SweepPoint {
    double eps = 0.0;
    double measure_radius = 0.0;
    bool converged = false;
    int outer_iterations = 0;
    double gmax = 0.0;
    HarnackResult harnack;
    std::optional<OscillationGradientRatio> osc_ratio;
    double osc_center = 0.0;
    std::vector<double> residual_history;
    std::string error;
    std::optional<DiscreteField> field; // kept only when requested
};

struct SweepResult {
    std::vector<SweepPoint> points; // in plan order
    std::vector<std::string> failures;
    std::optional<RateFit> fit;
    TheoryRates theory;
};

/// Runs every eps independently (plan.jobs threads); throws NumericError when
/// more than half of the solves fail.
SweepResult run_sweep(const SweepPlan& plan, bool keep_fields = false);

} // namespace pgap
