#pragma once

// Regularised insulated p-Laplace problem in the 2D neck
//
//   div((sigma + |grad u|^2)^{(p-2)/2} grad u) = 0   in |x1| < L,
//   u = -V at x1 = -L,  u = +V at x1 = +L,  zero conormal flux on both walls,
//
// solved with cell-centred finite volumes in flattened coordinates
//
//   x1 = y1,  x2 = -eps/2 + h2(y1) + y2 delta(y1),   (y1, y2) in [-L, L] x [0, 1].
//
// With J = [[1, 0], [s, delta]], s = h2' + y2 delta', the physical gradient is
// xi = (u_y1 - (s/delta) u_y2, u_y2/delta) and the flattened flux is
// det(J) J^{-1} k xi = k (delta xi1, xi2 - s xi1).

#include "pgap/geometry.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pgap {

/// Replaces the lateral/wall conditions by u = value(x1, x2) on all four
/// sides. Used for manufactured-solution studies.
struct DirichletData {
    std::function<double(double, double)> value;
    std::function<std::array<double, 2>(double, double)> gradient;
};

struct SolverConfig {
    double p = 2.0;
    /// Regularisation; unset means 1e-12 (lateral_value / L)^2.
    std::optional<double> sigma;
    double tol_nonlinear = 1e-10;
    int max_outer = 100;
    double damping = 0.5;
    int n1 = 256;
    int n2 = 32;
    double grading_q = 2.0;
    double lateral_value = 1.0;
    /// Contractual relative residual of every linear solve.
    double tol_linear = 1e-10;
    std::optional<DirichletData> dirichlet_override;

    void validate() const;
    double resolved_sigma(double L) const;
};

struct TransformedGrid {
    GapGeometry geometry;
    double L = 0.0;
    int n1 = 0;
    int n2 = 0;
    double q = 1.0;
    std::vector<double> y1_faces;   // n1 + 1
    std::vector<double> y1_centers; // n1
    std::vector<double> y2_faces;   // n2 + 1
    std::vector<double> y2_centers; // n2

    // Geometric data at y1 centres and faces.
    std::vector<double> delta_c, h2_c, dh1_c, dh2_c, ddelta_c;
    std::vector<double> delta_f, h2_f, dh1_f, dh2_f, ddelta_f;

    int index(int i, int j) const { return j * n1 + i; }
    int n_cells() const { return n1 * n2; }
    double dy2() const { return 1.0 / n2; }
    double width(int i) const { return y1_faces[static_cast<std::size_t>(i) + 1] - y1_faces[static_cast<std::size_t>(i)]; }

    /// Physical x2 of the flattened point (y1 at centre i, y2).
    double x2_at_center(int i, double y2) const;
    double x2_at_face(int i, double y2) const;
    /// Entries of the flattening Jacobian [[1, 0], [s, delta]] at centre i.
    double shear_at_center(int i, double y2) const;
    double shear_at_face(int i, double y2) const;
};

/// Graded grid y1 = sign(s) L |s|^q on uniform s in [-1, 1].
/// Throws ParameterError for L > R0 and GeometryError when delta <= 0.
TransformedGrid build_grid(const GapGeometry& geometry, const SolverConfig& config, double L);

struct IterationTrace {
    std::vector<int> outer;
    std::vector<int> linear_refinements;
    std::vector<double> energy;
    std::vector<double> step_size;
    std::vector<double> residual;
    std::string method; // "kacanov" or "newton"
};

struct DiscreteField {
    std::shared_ptr<const TransformedGrid> grid;
    double p = 2.0;
    double sigma = 0.0;
    double lateral_value = 1.0;
    std::vector<double> u;  // cell values, index(i, j)
    std::vector<double> gx; // physical gradient at cell centres
    std::vector<double> gy;
    std::vector<double> left_bc, right_bc;  // per row j
    std::vector<double> bottom_bc, top_bc;  // per column i; empty for insulated walls
    std::optional<DirichletData> dirichlet;
    std::vector<double> residual_history;
    IterationTrace trace;
    bool converged = false;
    int outer_iterations = 0;

    double x1(int i) const { return grid->y1_centers[static_cast<std::size_t>(i)]; }
    double x2(int i, int j) const { return grid->x2_at_center(i, grid->y2_centers[static_cast<std::size_t>(j)]); }
    double value(int i, int j) const { return u[static_cast<std::size_t>(grid->index(i, j))]; }
    double grad_norm(int i, int j) const;

    /// Global max - min including boundary data.
    double total_oscillation() const;
};

/// Throws ConvergenceError (with history) when max_outer is exhausted and
/// NumericError on linear-solver breakdown.
DiscreteField solve(const TransformedGrid& grid, const SolverConfig& config);

/// Max |grad u| over cells with |x1| <= r. DomainError if no cell qualifies.
double grad_max(const DiscreteField& field, double r);

/// max - min of u over |x1 - center| < radius, with values interpolated
/// linearly along each grid row at the slab edges.
double oscillation(const DiscreteField& field, double center, double radius);

struct HarnackResult {
    double ratio = 1.0;
    double sup_w = 0.0;
    double inf_w = 0.0;
    bool degenerate = false;
};

/// w = sup_{|x1|<2r} u - u; ratio sup w / inf w over r/2 <= |x1| <= r.
HarnackResult harnack_ratio(const DiscreteField& field, double r);

/// Conormal flux through the lateral faces y1 = -L and y1 = +L (left to right).
struct LateralFlux {
    double left = 0.0;
    double right = 0.0;
};
LateralFlux lateral_flux(const DiscreteField& field);

/// Coefficients of the normalised form delta_ij + (p-2) u_i u_j/(sigma+|grad u|^2)
/// at a cell, row-major 2x2.
std::array<double, 4> normalized_coefficients(const DiscreteField& field, int i, int j);

/// Writes y1, y2, x1, x2, u, gx, gy with 17 significant digits.
void write_field_csv(const DiscreteField& field, std::ostream& out);

} // namespace pgap
