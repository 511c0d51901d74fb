#include "pgap/barriers.hpp"
#include "pgap/errors.hpp"
#include "support/fd_check.hpp"

#include <doctest.h>

#include <cmath>

using namespace pgap;

namespace {

GapGeometry unit_square(double eps, double R0 = 0.49)
{
    GapGeometry g;
    g.m = 4.0;
    g.eps = eps;
    g.profile = ProfileSpec::curvilinear_square(4.0, 1.0);
    g.R0 = R0;
    return g;
}

FieldJet radial_power(std::span<const double> x, double k)
{
    // f = |x|^k in the plane.
    const double r2 = x[0] * x[0] + x[1] * x[1];
    const double r = std::sqrt(r2);
    const double fr = k * std::pow(r, k - 2.0); // f'/r
    const double frr = k * (k - 2.0) * std::pow(r, k - 4.0);
    FieldJet j;
    j.value = std::pow(r, k);
    j.grad = {fr * x[0], fr * x[1]};
    j.hess = {fr + frr * x[0] * x[0], frr * x[0] * x[1], frr * x[0] * x[1], fr + frr * x[1] * x[1]};
    return j;
}

} // namespace

TEST_CASE("closed-form coefficients")
{
    CHECK(BarrierSpec::supersolution(2, 4.0, 8.0, 1.0, 0.1).coeff == 10.0);
    const BarrierSpec sub = BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4);
    CHECK(sub.coeff == 7.0);
    CHECK(sub.threshold == doctest::Approx(std::pow(8e-4 / 1.5, 0.125)).epsilon(1e-15));
    CHECK(subsolution_core_radius(sub) == doctest::Approx(std::pow(4e-4 / 1.5, 0.25)).epsilon(1e-15));
}

TEST_CASE("supersolution values")
{
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 12.0, 1.0, 0.5);
    const double on_axis[2] = {0.5, 0.0};
    const PointEvaluation e = eval_barrier(s, on_axis);
    CHECK(e.value == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(e.grad[0] == doctest::Approx(0.5 * std::pow(0.5, -0.5)).epsilon(1e-15));
    CHECK(e.grad[1] == 0.0);
    const double off_axis[2] = {0.5, 0.01};
    CHECK(eval_barrier(s, off_axis).value == doctest::Approx(0.7074).epsilon(1e-4));
    CHECK(eval_barrier(s, off_axis).value ==
          doctest::Approx(std::pow(std::pow(0.5, 4) + 10 * 0.25 * 1e-4, 1.0 / 8.0)).epsilon(1e-15));
}

TEST_CASE("both barriers reduce to |x1|^gamma on the axis")
{
    const BarrierSpec sup = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const BarrierSpec sub = BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4);
    for (double x1 : {-0.4, -0.01, 0.003, 0.2, 0.45}) {
        const double x[2] = {x1, 0.0};
        CHECK(eval_barrier(sup, x).value == doctest::Approx(std::pow(std::abs(x1), 1.0 / 6.0)).epsilon(1e-14));
        CHECK(eval_barrier(sub, x).untruncated_value == doctest::Approx(std::pow(std::abs(x1), 0.5)).epsilon(1e-14));
    }
}

TEST_CASE("analytic derivatives match central differences")
{
    const BarrierSpec specs[] = {
        BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0),
        BarrierSpec::supersolution(3, 4.0, 9.0, 0.5, 0.3),
        BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4),
        BarrierSpec::subsolution(3.0, 6.0, 0.4, 0.9, 1e-3),
    };
    for (const BarrierSpec& s : specs) {
        for (const auto& x : testing::fd_points(s.d)) {
            const testing::FdError e = testing::fd_relative_error(s, x, 1e-5);
            CHECK(e.grad <= 1e-6);
            CHECK(e.hess <= 1e-6);
        }
    }
}

TEST_CASE("Hessians are symmetric")
{
    const BarrierSpec s = BarrierSpec::supersolution(3, 4.0, 9.0, 0.5, 0.3);
    const double x[3] = {0.1, -0.05, 0.002};
    const PointEvaluation e = eval_barrier(s, x);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(e.hess[i * 3 + j] == e.hess[j * 3 + i]);
}

TEST_CASE("derivatives on the axis are a domain error")
{
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const double x[2] = {0.0, 0.001};
    CHECK_THROWS_AS(eval_barrier(s, x), DomainError);
}

TEST_CASE("p-Laplacian of simple fields")
{
    const double x[2] = {0.4, 0.3};
    ClosedFormField linear = [](std::span<const double>) {
        return FieldJet{0.0, {1.0, 0.0}, {0.0, 0.0, 0.0, 0.0}};
    };
    for (double p : {1.3, 2.0, 3.0, 7.5}) CHECK(p_laplace_of(linear, p, x) == 0.0);

    // |x|^{(p-2)/(p-1)} is p-harmonic in the plane.
    const double p = 3.0;
    ClosedFormField radial = [&](std::span<const double> y) { return radial_power(y, (p - 2.0) / (p - 1.0)); };
    CHECK(std::abs(p_laplace_of(radial, p, x)) <= 1e-12);

    ClosedFormField flat = [](std::span<const double>) {
        return FieldJet{0.0, {0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}};
    };
    CHECK_THROWS_AS(p_laplace_of(flat, 1.5, x), DomainError);
    CHECK(p_laplace_of(flat, 2.0, x) == 2.0);
}

TEST_CASE("supersolution is strictly p-superharmonic at a neck point")
{
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const double x[2] = {0.05, 0.2 * 0.05 * 0.05};
    CHECK(eval_barrier(s, x).p_laplace < 0.0);
}

TEST_CASE("wall normals and fluxes")
{
    GapGeometry flat;
    flat.m = 4.0;
    flat.eps = 0.01;
    flat.profile = ProfileSpec::flat(4.0);
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const double xp[1] = {0.2};
    const auto up = wall_point(flat, xp, Wall::upper);
    const auto lo = wall_point(flat, xp, Wall::lower);
    CHECK(neumann_flux(s, flat, xp, Wall::upper) == eval_barrier(s, up).grad[1]);
    CHECK(neumann_flux(s, flat, xp, Wall::lower) == -eval_barrier(s, lo).grad[1]);

    const GapGeometry g = unit_square(1e-4);
    const auto nu = wall_normal(g, xp, Wall::upper);
    CHECK(std::hypot(nu[0], nu[1]) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(nu[1] > 0.0);
    CHECK(nu[0] * 1.0 + nu[1] * g.dh1(0.2) == doctest::Approx(0.0).scale(1.0)); // tangent (1, h1') is orthogonal
    CHECK(neumann_flux(s, g, std::span<const double>(xp, 1), Wall::upper) > 0.0);
}

TEST_CASE("parameter ranges")
{
    // Supersolution: tau in (0, p-d-m+1), gamma in (0, (p-d-m+1-tau)/(p-1)).
    CHECK_THROWS_AS(BarrierSpec::supersolution(2, 4.0, 7.0, 2.0, 0.1), ParameterError);
    CHECK_THROWS_AS(BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.5 / 6.0), ParameterError);
    CHECK_NOTHROW(BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.49 / 6.0));
    CHECK_THROWS_AS(BarrierSpec::supersolution(2, 4.0, 5.0, 0.5, 0.1), ParameterError);
    CHECK_THROWS_AS(BarrierSpec::supersolution(2, 4.0, 7.0, 0.0, 0.1), ParameterError);
    // Subsolution: tau in (0, m-2), gamma > max{0, (p-m-1+tau)/(p-1)}.
    CHECK_THROWS_AS(BarrierSpec::subsolution(4.0, 2.0, 2.0, 0.5, 1e-4), ParameterError);
    CHECK_THROWS_AS(BarrierSpec::subsolution(4.0, 7.0, 0.5, 0.41, 1e-4), ParameterError);
    CHECK_NOTHROW(BarrierSpec::subsolution(4.0, 7.0, 0.5, 0.42, 1e-4));
    CHECK_THROWS_AS(BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.0, 1e-4), ParameterError);
    BarrierSpec tampered = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 0.1);
    tampered.coeff = 10.0;
    CHECK_THROWS_AS(tampered.validate(), ParameterError);
}

TEST_CASE("supersolution verification on the unit square")
{
    const GapGeometry g = unit_square(1e-4);
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const BarrierVerdict v = verify_supersolution(s, g, SampleGrid{200, 40});
    CHECK(v.pass);
    CHECK(v.n_violations == 0);
    CHECK(v.violations.empty());
    CHECK(v.min_margin >= 0.0);
    CHECK(v.empirical_r_hat > 0.0);
    CHECK(v.n_samples >= 8000);
    CHECK(v.r_inner == doctest::Approx(std::pow(1e-4, 0.5)));
}

TEST_CASE("supersolution verdict is monotone in the region")
{
    const GapGeometry g = unit_square(1e-4);
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    for (double r : {0.49, 0.3, 0.1, 0.03}) {
        CHECK(verify_supersolution_at(s, g, SampleGrid{60, 12}, r).n_violations == 0);
    }
}

TEST_CASE("supersolution region empty below eps^{2/m}")
{
    GapGeometry g = unit_square(0.3, 0.49);
    const BarrierSpec s = BarrierSpec::supersolution(2, 4.0, 7.0, 0.5, 1.0 / 6.0);
    const BarrierVerdict v = verify_supersolution(s, g, SampleGrid{20, 4});
    CHECK(v.degenerate);
    CHECK_FALSE(v.pass);
}

TEST_CASE("subsolution vanishes on its core")
{
    const BarrierSpec sub = BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4);
    const double core = subsolution_core_radius(sub);
    for (double t : {0.1, 0.5, 0.99}) {
        const double x[2] = {t * core, 1e-5};
        const PointEvaluation e = eval_barrier(sub, x);
        CHECK(e.value == 0.0);
        CHECK(e.truncated);
    }
}

TEST_CASE("subsolution interior sign holds where the barrier is active")
{
    const GapGeometry g = unit_square(1e-4);
    for (double p : {2.0, 7.0}) {
        const BarrierSpec sub = BarrierSpec::subsolution(4.0, p, 0.5, 0.5, 1e-4);
        const BarrierVerdict v = verify_subsolution_at(sub, g, SampleGrid{200, 40}, 0.49);
        CHECK(v.n_active_interior > 0);
        for (const Violation& bad : v.violations) CHECK(bad.quantity != "p_laplace");
        for (const Violation& bad : v.violations) CHECK(bad.quantity != "zero_region");
    }
}

TEST_CASE("subsolution wall flux is positive just outside the truncation edge")
{
    // The outward flux of the untruncated branch on the upper wall is
    // positive on a band next to the core and negative further out.
    const GapGeometry g = unit_square(1e-4);
    const BarrierSpec sub = BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4);
    const double inside[1] = {0.17};
    const double outside[1] = {0.3};
    CHECK(neumann_flux(sub, g, inside, Wall::upper) > 0.0);
    CHECK(neumann_flux(sub, g, outside, Wall::upper) < 0.0);
    const double x[2] = {0.17, g.eps / 2 + g.h1(0.17)};
    CHECK_FALSE(eval_barrier(sub, x).truncated);

    const BarrierVerdict v = verify_subsolution(sub, g, SampleGrid{200, 40});
    CHECK_FALSE(v.pass);
    CHECK(v.n_violations > 0);
    for (const Violation& bad : v.violations) {
        CHECK((bad.quantity == "flux_upper" || bad.quantity == "flux_lower"));
        CHECK(std::abs(bad.point[0]) < 0.2);
    }
}

TEST_CASE("subsolution verification needs the unit curvilinear square")
{
    GapGeometry g = unit_square(1e-4);
    g.profile = ProfileSpec::power(4.0, 0.25);
    const BarrierSpec sub = BarrierSpec::subsolution(4.0, 2.0, 0.5, 0.5, 1e-4);
    CHECK_THROWS_AS(verify_subsolution(sub, g, SampleGrid{}), ParameterError);
}
