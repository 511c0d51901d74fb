#pragma once

// Reduced weighted problem div(a |x'|^2 grad v) = 0 on the unit disk, with a
// depending on the angle only, and the periodic eigenproblem
// -(a u')' = lambda a u on the circle that sets the decay exponent of v.

#include "pgap/errors.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pgap {

struct WeightFunction {
    std::function<double(double)> angular; // a(theta)
    double kappa = 1.0;                    // kappa^{-1} <= a <= kappa
    double sup_bound = 1.0;                // bound M on |v|
    std::string descriptor;

    static WeightFunction constant(double c);
    /// a = mean + amplitude cos(mode theta).
    static WeightFunction cosine(double mean, double amplitude, int mode);
    /// a = mean + sum_k cos_coeffs[k] cos((k+1) theta) + sin_coeffs[k] sin((k+1) theta).
    static WeightFunction fourier(double mean, std::vector<double> cos_coeffs, std::vector<double> sin_coeffs);
};

class InvalidWeightError : public ParameterError {
public:
    InvalidWeightError(const std::string& what, double moment_cos, double moment_sin)
        : ParameterError(what), moment_cos(moment_cos), moment_sin(moment_sin) {}

    double moment_cos;
    double moment_sin;
};

class UnsupportedDimensionError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

struct WeightReport {
    double min_value = 0.0;
    double max_value = 0.0;
    double moment_cos = 0.0; // integral of a cos(theta) over the circle
    double moment_sin = 0.0;
    bool valid = false;
};

/// Trapezoidal check of the bounds and of the vanishing first moments.
/// Throws InvalidWeightError on failure; quad_n must be at least 64.
WeightReport check_weight(const WeightFunction& weight, int quad_n);

struct SphereEigenResult {
    double lambda1 = 0.0;     // two-level Richardson over n, n/2, n/4
    double lambda1_raw = 0.0; // second-order value on n points
    double lambda1_coarse = 0.0;
    double lambda1_coarsest = 0.0;
    double null_eigenvalue = 0.0;
    double alpha = 0.0;
    int n = 0;
    int d = 3;
    std::vector<double> eigenvector; // raw eigenvector on n points, a-normalised
};

/// Requires d = 3 (UnsupportedDimensionError otherwise) and n a multiple of 4, n >= 32.
SphereEigenResult sphere_lambda1(const WeightFunction& weight, int n, int d = 3);

/// Smallest nonzero eigenvalue of the second-order discretisation alone.
double sphere_lambda1_raw(const WeightFunction& weight, int n);

/// Positive root of alpha^2 + (d-1) alpha - lambda1 = 0.
double alpha_from_lambda(double lambda1, int d);

/// [-(d-1) + sqrt((d-1)^2 + 4(d-2))]/4, the exponent for equal curvatures.
double equal_curvature_exponent(int d);

struct WeightedSolveResult {
    int n_r = 0;
    int n_theta = 0;
    std::vector<double> r;     // ring radii (cell centres)
    std::vector<double> theta; // angles
    std::vector<double> v;     // ring-major, v[i * n_theta + k]
    double v0 = 0.0;           // a-weighted mean over the innermost ring
    std::vector<double> sup_osc; // per ring, sup |v - v0|
    std::optional<double> decay_slope;
    double min_v = 0.0;
    double max_v = 0.0;
};

/// Two-point finite volumes in (log r, theta) on 1e-4 <= r <= 1, zero flux
/// at the inner radius, v = boundary(theta) at r = 1. The decay slope is
/// fitted over rings with 1e-3 <= r <= 1e-1 and left empty when sup_osc
/// vanishes there.
WeightedSolveResult solve_weighted_disk(const WeightFunction& weight, const std::function<double(double)>& boundary,
                                        int n_r, int n_theta);

} // namespace pgap
