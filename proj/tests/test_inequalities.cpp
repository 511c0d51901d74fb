#include "pgap/errors.hpp"
#include "pgap/inequalities.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace pgap;

TEST_CASE("power map constants")
{
    CHECK(power_map_lower_constant(-0.5) == 0.5);
    CHECK(power_map_lower_constant(0.0) == 1.0);
    CHECK(power_map_lower_constant(1.0) == doctest::Approx(std::pow(5.0, -1.5)).epsilon(1e-15));
    CHECK(power_map_lower_constant(2.0) == doctest::Approx(1.0 / 25.0).epsilon(1e-15));
    CHECK(power_map_upper_constant(-0.5) == 2.0);
    CHECK(power_map_upper_constant(-0.9) == doctest::Approx(std::pow(10.0, 0.45)).epsilon(1e-15));
    CHECK(power_map_upper_constant(0.0) == 1.0);
    CHECK(power_map_upper_constant(1.0) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
    CHECK(power_map_upper_constant(2.0) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK_THROWS_AS(power_map_lower_constant(-1.0), ParameterError);
    CHECK_THROWS_AS(power_map_upper_constant(-1.5), ParameterError);
}

TEST_CASE("power map ratio is one for sigma = 0")
{
    const std::vector<double> a{0.3, -1.2, 2.0}, b{-4.0, 0.1, 0.5};
    CHECK(power_map_ratio(a, b, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(power_map_ratio(a, a, 1.0), DomainError);
}

TEST_CASE("flux monotonicity closed forms")
{
    const std::vector<double> a{2.0, 0.0}, zero{0.0, 0.0};
    // <|a|^{p-2} a, a> = |a|^p against the two bounds.
    CHECK(flux_monotonicity(a, zero, 3.0) == doctest::Approx(8.0));
    CHECK(flux_monotonicity_bound(a, zero, 3.0) == doctest::Approx(4.0));
    CHECK(flux_monotonicity(a, zero, 1.5) == doctest::Approx(std::pow(2.0, 1.5)));
    CHECK(flux_monotonicity_bound(a, zero, 1.5) ==
          doctest::Approx(0.5 / std::pow(2.0, 0.25) * std::pow(4.0, -0.25) * 4.0));
    CHECK(flux_monotonicity(a, a, 2.5) == 0.0);
    CHECK_THROWS_AS(flux_monotonicity_bound(a, zero, 1.0), ParameterError);
    const std::vector<double> three{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(flux_monotonicity(a, three, 2.0), ParameterError);
}

TEST_CASE("random pairs satisfy the flux monotonicity bound")
{
    for (int d : {2, 3, 5}) {
        for (double p : {1.05, 1.2, 1.5, 2.0, 3.5, 6.0}) {
            const OracleReport r = check_flux_monotonicity(d, p, 4000, 11 + d);
            CHECK(r.n_pairs == 4000);
            CHECK(r.n_failures == 0);
            CHECK(r.worst_relative_margin >= -1e-12);
        }
    }
}

TEST_CASE("random pairs satisfy the two-sided power map bound")
{
    for (int d : {2, 3}) {
        for (double sigma : {-0.9, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0}) {
            const OracleReport r = check_power_map_bounds(d, sigma, 4000, 29 + d);
            CHECK(r.n_failures == 0);
        }
    }
}

TEST_CASE("nearly equal vectors stay inside the bounds")
{
    for (double sigma : {-0.5, 1.0, 2.0}) {
        const std::vector<double> a{1.0, 0.5};
        for (double h : {1e-2, 1e-5, 1e-8}) {
            const std::vector<double> b{1.0 + h, 0.5 - h};
            const double r = power_map_ratio(a, b, sigma);
            CHECK(r >= power_map_lower_constant(sigma));
            CHECK(r <= power_map_upper_constant(sigma));
        }
    }
}

TEST_CASE("oracle sampling is deterministic in the seed")
{
    const OracleReport a = check_flux_monotonicity(3, 1.7, 500, 5);
    const OracleReport b = check_flux_monotonicity(3, 1.7, 500, 5);
    CHECK(a.worst_relative_margin == b.worst_relative_margin);
    CHECK_THROWS_AS(check_flux_monotonicity(0, 2.0, 10, 1), ParameterError);
}
