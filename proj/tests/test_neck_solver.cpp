#include "pgap/errors.hpp"
#include "pgap/neck_solver.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace pgap;

namespace {

GapGeometry flat_channel(double eps, double R0)
{
    GapGeometry g;
    g.m = 4.0;
    g.eps = eps;
    g.profile = ProfileSpec::flat(4.0);
    g.R0 = R0;
    return g;
}

GapGeometry unit_square(double eps)
{
    GapGeometry g;
    g.m = 4.0;
    g.eps = eps;
    g.profile = ProfileSpec::curvilinear_square(4.0, 1.0);
    g.R0 = 0.49;
    return g;
}

SolverConfig config(double p, int n1, int n2, double q = 1.0)
{
    SolverConfig c;
    c.p = p;
    c.n1 = n1;
    c.n2 = n2;
    c.grading_q = q;
    return c;
}

DiscreteField solve_on(const GapGeometry& g, const SolverConfig& c, double L)
{
    return solve(build_grid(g, c, L), c);
}

/// Radial p-harmonic function centred at x0 (log for p = 2).
DirichletData radial_solution(double p, double x0, double y0)
{
    const double k = (p - 2.0) / (p - 1.0);
    DirichletData dd;
    dd.value = [=](double x, double y) {
        const double r = std::hypot(x - x0, y - y0);
        return p == 2.0 ? std::log(r) : std::pow(r, k);
    };
    dd.gradient = [=](double x, double y) -> std::array<double, 2> {
        const double r = std::hypot(x - x0, y - y0);
        const double dr = p == 2.0 ? 1.0 / r : k * std::pow(r, k - 1.0);
        return {dr * (x - x0) / r, dr * (y - y0) / r};
    };
    return dd;
}

double mms_error(double p, int n)
{
    GapGeometry g;
    g.m = 4.0;
    g.eps = 0.5;
    g.profile = ProfileSpec::power(4.0, 1.0, true);
    g.R0 = 0.5;
    SolverConfig c = config(p, n, n);
    c.tol_nonlinear = 1e-12;
    c.dirichlet_override = radial_solution(p, 0.3, -0.8);
    const DiscreteField f = solve_on(g, c, 0.5);
    double err = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            err = std::max(err, std::abs(f.value(i, j) - c.dirichlet_override->value(f.x1(i), f.x2(i, j))));
    return err;
}

} // namespace

TEST_CASE("flat channel grid is a uniform rectangle")
{
    const GapGeometry g = flat_channel(0.1, 1.0);
    const TransformedGrid grid = build_grid(g, config(2.0, 8, 8), 1.0);
    for (int i = 0; i < 8; ++i) {
        CHECK(grid.width(i) == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(grid.delta_c[i] == 0.1);
    }
    for (double d : grid.delta_f) CHECK(d == 0.1);
    CHECK(grid.x2_at_center(3, 0.0) == doctest::Approx(-0.05));
    CHECK(grid.x2_at_center(3, 1.0) == doctest::Approx(0.05));
}

TEST_CASE("graded grid clusters at the centre")
{
    const GapGeometry g = unit_square(1e-3);
    const TransformedGrid grid = build_grid(g, config(2.0, 64, 8, 2.0), 0.4);
    CHECK(grid.y1_faces.front() == -0.4);
    CHECK(grid.y1_faces.back() == 0.4);
    // Faces at y1 = sign(s) L s^2 on s = -1 + 2k/n1; the smallest cells touch 0.
    CHECK(grid.width(32) == doctest::Approx(0.4 / (32.0 * 32.0)).epsilon(1e-12));
    for (int i = 32; i + 1 < 64; ++i) CHECK(grid.width(i + 1) > grid.width(i));
    for (int i = 0; i < 31; ++i) CHECK(grid.width(i) > grid.width(i + 1));
    for (int i = 0; i < 64; ++i) CHECK(grid.delta_c[i] == doctest::Approx(g.delta(grid.y1_centers[i])).epsilon(1e-15));
}

TEST_CASE("grid preconditions")
{
    const GapGeometry g = unit_square(1e-3);
    CHECK_THROWS_AS(build_grid(g, config(2.0, 16, 8), 0.5), ParameterError);
    GapGeometry overlap = flat_channel(-0.01, 1.0);
    CHECK_THROWS_AS(build_grid(overlap, config(2.0, 16, 8), 0.5), GeometryError);
    SolverConfig bad = config(2.0, 4, 8);
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = config(1.0, 16, 8);
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = config(2.0, 16, 8);
    bad.tol_nonlinear = 0.1;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("flat channel solution is linear for every p")
{
    for (double p : {1.5, 2.0, 3.0, 6.0}) {
        const double L = 0.8;
        const DiscreteField f = solve_on(flat_channel(0.05, 1.0), config(p, 16, 8), L);
        CHECK(f.converged);
        CHECK(f.outer_iterations <= 2);
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 16; ++i) CHECK(std::abs(f.value(i, j) - f.x1(i) / L) <= 1e-10);
        CHECK(grad_max(f, L) == doctest::Approx(1.0 / L).epsilon(1e-10));
    }
}

TEST_CASE("manufactured radial solutions converge at first order or better")
{
    for (double p : {1.5, 2.0, 3.0}) {
        const double e16 = mms_error(p, 16), e32 = mms_error(p, 32), e64 = mms_error(p, 64);
        CHECK(std::log2(e16 / e32) >= 1.0);
        CHECK(std::log2(e32 / e64) >= 1.0);
    }
}

TEST_CASE("conservation, odd symmetry and the maximum principle in the neck")
{
    for (double p : {1.5, 2.0, 4.0}) {
        const DiscreteField f = solve_on(unit_square(1e-3), config(p, 128, 16, 2.0), 0.49);
        const LateralFlux flux = lateral_flux(f);
        CHECK(std::abs(flux.left - flux.right) <= 1e-8 * std::abs(flux.left));
        const int n1 = f.grid->n1;
        double lo = INFINITY, hi = -INFINITY;
        for (int j = 0; j < f.grid->n2; ++j) {
            for (int i = 0; i < n1; ++i) {
                CHECK(std::abs(f.value(i, j) + f.value(n1 - 1 - i, j)) <= 1e-8);
                lo = std::min(lo, f.value(i, j));
                hi = std::max(hi, f.value(i, j));
            }
        }
        CHECK(lo >= -1.0 - 1e-10);
        CHECK(hi <= 1.0 + 1e-10);
    }
}

TEST_CASE("normalised coefficients are uniformly elliptic")
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    for (double p : {1.3, 2.0, 5.0}) {
        const DiscreteField f = solve_on(unit_square(1e-3), config(p, 64, 8, 2.0), 0.49);
        const double lo = std::min(1.0, p - 1.0), hi = std::max(1.0, p - 1.0);
        std::uniform_int_distribution<int> ci(0, 63), cj(0, 7);
        for (int k = 0; k < 1000; ++k) {
            const auto a = normalized_coefficients(f, ci(rng), cj(rng));
            const double x = gauss(rng), y = gauss(rng);
            const double q = a[0] * x * x + (a[1] + a[2]) * x * y + a[3] * y * y;
            const double n2 = x * x + y * y;
            CHECK(q >= lo * n2 * (1 - 1e-12));
            CHECK(q <= hi * n2 * (1 + 1e-12));
        }
    }
}

TEST_CASE("accepted steps reduce the residual")
{
    for (double p : {1.5, 6.0}) {
        const DiscreteField f = solve_on(unit_square(1e-3), config(p, 64, 16, 2.0), 0.49);
        REQUIRE(f.residual_history.size() >= 2);
        for (std::size_t k = 1; k < f.residual_history.size(); ++k) {
            CHECK(f.residual_history[k] < f.residual_history[k - 1]);
        }
        CHECK(f.residual_history.back() <= 1e-10);
        CHECK(f.trace.outer.size() == static_cast<std::size_t>(f.outer_iterations));
        CHECK(f.trace.method == (p > 2.0 ? "newton" : "kacanov"));
    }
}

TEST_CASE("exhausted outer iterations raise with the residual history")
{
    SolverConfig c = config(1.5, 64, 16, 2.0);
    c.max_outer = 1;
    try {
        solve_on(unit_square(1e-4), c, 0.49);
        FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
        CHECK(e.residual_history.size() == 2);
    }
}

TEST_CASE("gradient maximum")
{
    const DiscreteField f = solve_on(flat_channel(0.05, 1.0), config(2.0, 16, 8), 1.0);
    CHECK(grad_max(f, 1.0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK_THROWS_AS(grad_max(f, 1e-3), DomainError);

    DiscreteField synthetic = f;
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 16; ++i) {
            const auto c = static_cast<std::size_t>(f.grid->index(i, j));
            synthetic.gx[c] = 1.0 / std::max(std::abs(f.x1(i)), 1e-3);
            synthetic.gy[c] = 0.0;
        }
    CHECK(grad_max(synthetic, 1.0) == doctest::Approx(1.0 / std::abs(f.x1(8))));

    const DiscreteField sq2 = solve_on(unit_square(1e-2), config(2.0, 64, 8, 2.0), 0.49);
    const DiscreteField sq3 = solve_on(unit_square(1e-3), config(2.0, 64, 8, 2.0), 0.49);
    CHECK(grad_max(sq3, 0.1) > grad_max(sq2, 0.1));
}

TEST_CASE("oscillation of simple fields")
{
    const DiscreteField f = solve_on(flat_channel(0.05, 1.0), config(2.0, 16, 8), 1.0);
    CHECK(oscillation(f, 0.0, 0.05) == doctest::Approx(0.1).epsilon(1e-10));
    CHECK(oscillation(f, 0.3, 0.2) == doctest::Approx(0.4).epsilon(1e-10));
    CHECK_THROWS_AS(oscillation(f, 0.9, 0.2), DomainError);
    CHECK_THROWS_AS(oscillation(f, 0.0, 0.0), DomainError);

    DiscreteField constant = f;
    std::fill(constant.u.begin(), constant.u.end(), 0.25);
    std::fill(constant.left_bc.begin(), constant.left_bc.end(), 0.25);
    std::fill(constant.right_bc.begin(), constant.right_bc.end(), 0.25);
    CHECK(oscillation(constant, 0.0, 0.3) == 0.0);
    const HarnackResult h = harnack_ratio(constant, 0.2);
    CHECK(h.degenerate);
    CHECK(h.ratio == 1.0);
}

TEST_CASE("Harnack ratio of the linear channel solution is three")
{
    const DiscreteField f = solve_on(flat_channel(0.05, 1.0), config(2.0, 32, 8), 1.0);
    for (double r : {0.1, 0.2, 0.45}) {
        const HarnackResult h = harnack_ratio(f, r);
        CHECK_FALSE(h.degenerate);
        CHECK(std::abs(h.ratio - 3.0) <= 1e-8);
    }
    CHECK_THROWS_AS(harnack_ratio(f, 0.6), DomainError);
}

TEST_CASE("field CSV layout")
{
    const DiscreteField f = solve_on(flat_channel(0.05, 1.0), config(2.0, 8, 8), 1.0);
    std::ostringstream out;
    write_field_csv(f, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "y1,y2,x1,x2,u,gx,gy");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 64);
}

TEST_CASE("solves are deterministic")
{
    const SolverConfig c = config(3.0, 64, 8, 2.0);
    const DiscreteField a = solve_on(unit_square(1e-3), c, 0.49);
    const DiscreteField b = solve_on(unit_square(1e-3), c, 0.49);
    CHECK(a.u == b.u);
    CHECK(a.residual_history == b.residual_history);
}
