#pragma once

// Vector inequalities behind the monotonicity of the p-Laplace flux, exposed
// as executable oracles for property tests.

#include <cstdint>
#include <span>

namespace pgap {

/// <|a|^{p-2}a - |b|^{p-2}b, a - b>.
double flux_monotonicity(std::span<const double> a, std::span<const double> b, double p);

/// Right-hand side of the monotonicity lower bound:
///   1 < p < 2:  (p-1) 2^{-(2-p)/2} (|a|^2+|b|^2)^{(p-2)/2} |a-b|^2
///   p >= 2:     (|a|^{p-2} + |b|^{p-2}) |a-b|^2 / 2
double flux_monotonicity_bound(std::span<const double> a, std::span<const double> b, double p);

/// Lower and upper constants of the two-sided bound on
/// ||a|^s a - |b|^s b| / (|a-b| (|a|^2+|b|^2)^{s/2}),  s > -1.
double power_map_lower_constant(double sigma);
double power_map_upper_constant(double sigma);
double power_map_ratio(std::span<const double> a, std::span<const double> b, double sigma);

struct OracleReport {
    int n_pairs = 0;
    int n_failures = 0;
    double worst_relative_margin = 0.0; // smallest (lhs - rhs)/scale seen
};

/// Draws n_pairs random vector pairs in R^d (Gaussian directions, log-uniform
/// magnitudes over six decades) and checks the monotonicity bound.
OracleReport check_flux_monotonicity(int d, double p, int n_pairs, std::uint64_t seed);

/// Same sampling, checking lower <= ratio <= upper.
OracleReport check_power_map_bounds(int d, double sigma, int n_pairs, std::uint64_t seed);

} // namespace pgap
