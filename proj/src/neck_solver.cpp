#include "pgap/neck_solver.hpp"

#include "pgap/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <utility>

namespace pgap {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr int kMaxRefinements = 5;

// Affine form sum_e w_e u_e + constant over cell unknowns.
struct LinearForm {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    void add(const LinearForm& other, double scale)
    {
        for (const auto& [e, w] : other.terms) terms.emplace_back(e, scale * w);
        constant += scale * other.constant;
    }

    double eval(const std::vector<double>& u) const
    {
        double s = constant;
        for (const auto& [e, w] : terms) s += w * u[static_cast<std::size_t>(e)];
        return s;
    }
};

// Flux of one face, oriented from `lo` to `hi` (increasing y1 or y2).
// A missing neighbour is -1.
struct Face {
    int lo = -1;
    int hi = -1;
    bool vertical = true; // normal along y1
    double area = 0.0;
    double delta = 0.0;
    double s = 0.0;
    LinearForm a; // u_y1
    LinearForm b; // u_y2
};

// Derivative at x0 of the quadratic through (xm, fm), (x0, f0), (xp, fp).
std::array<double, 3> lagrange_derivative(double xm, double x0, double xp)
{
    const double hm = x0 - xm, hp = xp - x0;
    return {-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))};
}

enum class Linearisation { newton, picard, laplace };

class Discretization {
public:
    // Unknowns are v = u - base(y1). A base depending on y1 alone drops out
    // of every y2-difference exactly, which keeps the cross-channel fluxes
    // free of the rounding error of |u| ~ V.
    Discretization(const TransformedGrid& grid, double p, double sigma, const std::vector<double>& left,
                   const std::vector<double>& right, const std::vector<double>& bottom,
                   const std::vector<double>& top, const std::optional<DirichletData>& dirichlet,
                   std::vector<double> base)
        : grid_(grid), p_(p), sigma_(sigma), left_(left), right_(right), bottom_(bottom), top_(top),
          dirichlet_(dirichlet), base_(std::move(base))
    {
        if (base_.empty()) base_.assign(static_cast<std::size_t>(grid_.n1), 0.0);
        build_faces();
    }

    const std::vector<double>& base() const { return base_; }

    std::vector<double> to_u(const std::vector<double>& v) const
    {
        std::vector<double> u(v.size());
        for (int j = 0; j < grid_.n2; ++j)
            for (int i = 0; i < grid_.n1; ++i) u[grid_.index(i, j)] = base_[i] + v[grid_.index(i, j)];
        return u;
    }

    std::vector<double> to_v(const std::vector<double>& u) const
    {
        std::vector<double> v(u.size());
        for (int j = 0; j < grid_.n2; ++j)
            for (int i = 0; i < grid_.n1; ++i) v[grid_.index(i, j)] = u[grid_.index(i, j)] - base_[i];
        return v;
    }

    int n() const { return grid_.n_cells(); }
    const std::vector<Face>& faces() const { return faces_; }

    // d/dy1 at a cell centre, acting on v.
    LinearForm dy1(int i, int j) const
    {
        LinearForm f = dy1_u(i, j);
        shift_by_base(f);
        return f;
    }

    LinearForm dy1_u(int i, int j) const
    {
        const auto& yc = grid_.y1_centers;
        const auto& yf = grid_.y1_faces;
        const int n1 = grid_.n1;
        LinearForm f;
        const double xm = i > 0 ? yc[i - 1] : yf[0];
        const double xp = i < n1 - 1 ? yc[i + 1] : yf[n1];
        const auto w = lagrange_derivative(xm, yc[i], xp);
        if (i > 0) f.terms.emplace_back(grid_.index(i - 1, j), w[0]);
        else f.constant += w[0] * left_[j];
        f.terms.emplace_back(grid_.index(i, j), w[1]);
        if (i < n1 - 1) f.terms.emplace_back(grid_.index(i + 1, j), w[2]);
        else f.constant += w[2] * right_[j];
        return f;
    }

    LinearForm dy2(int i, int j) const
    {
        const int n2 = grid_.n2;
        const double h = grid_.dy2();
        LinearForm f;
        auto c = [&](int jj) { return grid_.index(i, jj); };
        if (j > 0 && j < n2 - 1) {
            f.terms = {{c(j - 1), -0.5 / h}, {c(j + 1), 0.5 / h}};
        } else if (dirichlet_) {
            // Wall value at half a cell from the centre.
            if (j == 0) {
                const auto w = lagrange_derivative(-0.5 * h, 0.0, h);
                f.constant = w[0] * bottom_[i];
                f.terms = {{c(0), w[1]}, {c(1), w[2]}};
            } else {
                const auto w = lagrange_derivative(-h, 0.0, 0.5 * h);
                f.terms = {{c(j - 1), w[0]}, {c(j), w[1]}};
                f.constant = w[2] * top_[i];
            }
        } else if (j == 0) {
            f.terms = {{c(0), -1.5 / h}, {c(1), 2.0 / h}, {c(2), -0.5 / h}};
        } else {
            f.terms = {{c(j), 1.5 / h}, {c(j - 1), -2.0 / h}, {c(j - 2), 0.5 / h}};
        }
        return f;
    }

    struct Evaluation {
        std::vector<double> residual;
        double flux_scale = 0.0;
    };

    // Residual R_c = sum of outgoing face fluxes, and optionally the matrix of
    // the requested linearisation.
    Evaluation evaluate(const std::vector<double>& u, Linearisation lin,
                        std::vector<Eigen::Triplet<double>>* triplets) const
    {
        Evaluation ev;
        ev.residual.assign(static_cast<std::size_t>(n()), 0.0);
        std::vector<double> absflux(static_cast<std::size_t>(n()), 0.0);
        if (triplets) {
            triplets->clear();
            triplets->reserve(faces_.size() * 16);
        }
        const double e_k = (p_ - 2.0) / 2.0;
        for (const Face& f : faces_) {
            const double ua = f.a.eval(u);
            const double ub = f.b.eval(u);
            const double xi1 = ua - (f.s / f.delta) * ub;
            const double xi2 = ub / f.delta;
            const double t = xi1 * xi1 + xi2 * xi2;
            double k = 1.0, kp = 0.0;
            if (lin != Linearisation::laplace) {
                k = std::pow(sigma_ + t, e_k);
                kp = lin == Linearisation::newton ? e_k * std::pow(sigma_ + t, e_k - 1.0) : 0.0;
            }
            const double qa = f.vertical ? f.delta : -f.s;
            const double qb = f.vertical ? -f.s : (1.0 + f.s * f.s) / f.delta;
            const double q = qa * ua + qb * ub;
            const double flux = f.area * k * q;
            if (f.lo >= 0) {
                ev.residual[static_cast<std::size_t>(f.lo)] += flux;
                absflux[static_cast<std::size_t>(f.lo)] += std::abs(flux);
            }
            if (f.hi >= 0) {
                ev.residual[static_cast<std::size_t>(f.hi)] -= flux;
                absflux[static_cast<std::size_t>(f.hi)] += std::abs(flux);
            }
            if (!triplets) continue;
            auto push = [&](int e, double dxi1, double dxi2, double dq) {
                const double dflux = f.area * (k * dq + kp * 2.0 * (xi1 * dxi1 + xi2 * dxi2) * q);
                if (f.lo >= 0) triplets->emplace_back(f.lo, e, dflux);
                if (f.hi >= 0) triplets->emplace_back(f.hi, e, -dflux);
            };
            for (const auto& [e, w] : f.a.terms) push(e, w, 0.0, qa * w);
            for (const auto& [e, w] : f.b.terms) push(e, -(f.s / f.delta) * w, w / f.delta, qb * w);
        }
        ev.flux_scale = *std::max_element(absflux.begin(), absflux.end());
        return ev;
    }

    // Oriented face fluxes of the lateral boundary faces, summed over rows.
    LateralFlux lateral(const std::vector<double>& u) const
    {
        LateralFlux out;
        const double e_k = (p_ - 2.0) / 2.0;
        for (const Face& f : faces_) {
            if (!f.vertical || (f.lo >= 0 && f.hi >= 0)) continue;
            const double ua = f.a.eval(u), ub = f.b.eval(u);
            const double xi1 = ua - (f.s / f.delta) * ub, xi2 = ub / f.delta;
            const double k = std::pow(sigma_ + xi1 * xi1 + xi2 * xi2, e_k);
            const double flux = f.area * k * (f.delta * ua - f.s * ub);
            (f.lo < 0 ? out.left : out.right) += flux;
        }
        return out;
    }

    double energy(const std::vector<double>& gx, const std::vector<double>& gy) const
    {
        double e = 0.0;
        for (int j = 0; j < grid_.n2; ++j) {
            for (int i = 0; i < grid_.n1; ++i) {
                const auto c = static_cast<std::size_t>(grid_.index(i, j));
                const double t = gx[c] * gx[c] + gy[c] * gy[c];
                e += std::pow(sigma_ + t, p_ / 2.0) / p_ * grid_.delta_c[i] * grid_.width(i) * grid_.dy2();
            }
        }
        return e;
    }

    void cell_gradients(const std::vector<double>& u, std::vector<double>& gx, std::vector<double>& gy) const
    {
        gx.assign(static_cast<std::size_t>(n()), 0.0);
        gy.assign(static_cast<std::size_t>(n()), 0.0);
        for (int j = 0; j < grid_.n2; ++j) {
            for (int i = 0; i < grid_.n1; ++i) {
                const double ua = dy1(i, j).eval(u);
                const double ub = dy2(i, j).eval(u);
                const double delta = grid_.delta_c[i];
                const double s = grid_.shear_at_center(i, grid_.y2_centers[j]);
                const auto c = static_cast<std::size_t>(grid_.index(i, j));
                gx[c] = ua - (s / delta) * ub;
                gy[c] = ub / delta;
            }
        }
    }

private:
    void build_faces()
    {
        const int n1 = grid_.n1, n2 = grid_.n2;
        const double h = grid_.dy2();
        const auto& yc = grid_.y1_centers;
        const auto& yf = grid_.y1_faces;
        faces_.reserve(static_cast<std::size_t>((n1 + 1) * n2 + n1 * (n2 + 1)));

        for (int j = 0; j < n2; ++j) {
            const double y2 = grid_.y2_centers[j];
            for (int fi = 0; fi <= n1; ++fi) {
                Face f;
                f.vertical = true;
                f.area = h;
                f.delta = grid_.delta_f[fi];
                f.s = grid_.shear_at_face(fi, y2);
                if (fi == 0) {
                    const double hh = yc[0] - yf[0];
                    f.hi = grid_.index(0, j);
                    f.a.terms = {{f.hi, 1.0 / hh}};
                    f.a.constant = (base_[0] - left_[j]) / hh;
                    f.b.constant = wall_tangent_y2(-grid_.L, grid_.x2_at_face(0, y2), f.delta);
                } else if (fi == n1) {
                    const double hh = yf[n1] - yc[n1 - 1];
                    f.lo = grid_.index(n1 - 1, j);
                    f.a.terms = {{f.lo, -1.0 / hh}};
                    f.a.constant = (right_[j] - base_[n1 - 1]) / hh;
                    f.b.constant = wall_tangent_y2(grid_.L, grid_.x2_at_face(n1, y2), f.delta);
                } else {
                    const double dd = yc[fi] - yc[fi - 1];
                    f.lo = grid_.index(fi - 1, j);
                    f.hi = grid_.index(fi, j);
                    f.a.terms = {{f.lo, -1.0 / dd}, {f.hi, 1.0 / dd}};
                    f.a.constant = (base_[fi] - base_[fi - 1]) / dd;
                    f.b.add(dy2(fi - 1, j), 0.5);
                    f.b.add(dy2(fi, j), 0.5);
                }
                faces_.push_back(std::move(f));
            }
        }

        for (int i = 0; i < n1; ++i) {
            for (int fj = 0; fj <= n2; ++fj) {
                const bool wall = fj == 0 || fj == n2;
                if (wall && !dirichlet_) continue; // insulated: zero conormal flux
                Face f;
                f.vertical = false;
                f.area = grid_.width(i);
                f.delta = grid_.delta_c[i];
                f.s = grid_.shear_at_center(i, grid_.y2_faces[fj]);
                if (fj == 0) {
                    f.hi = grid_.index(i, 0);
                    f.b.terms = {{f.hi, 2.0 / h}};
                    f.b.constant = -2.0 * bottom_[i] / h;
                    f.a.constant = wall_tangent_y1(yc[i], grid_.x2_at_center(i, 0.0), f.s);
                } else if (fj == n2) {
                    f.lo = grid_.index(i, n2 - 1);
                    f.b.terms = {{f.lo, -2.0 / h}};
                    f.b.constant = 2.0 * top_[i] / h;
                    f.a.constant = wall_tangent_y1(yc[i], grid_.x2_at_center(i, 1.0), f.s);
                } else {
                    f.lo = grid_.index(i, fj - 1);
                    f.hi = grid_.index(i, fj);
                    f.b.terms = {{f.lo, -1.0 / h}, {f.hi, 1.0 / h}};
                    f.a.add(dy1(i, fj - 1), 0.5);
                    f.a.add(dy1(i, fj), 0.5);
                }
                faces_.push_back(std::move(f));
            }
        }
    }

    void shift_by_base(LinearForm& f) const
    {
        for (const auto& [e, w] : f.terms) f.constant += w * base_[static_cast<std::size_t>(e % grid_.n1)];
    }

    // d/dy2 of the boundary data along a lateral face: g_x2 * delta.
    double wall_tangent_y2(double x1, double x2, double delta) const
    {
        if (!dirichlet_) return 0.0;
        return dirichlet_->gradient(x1, x2)[1] * delta;
    }

    // d/dy1 of the boundary data along a wall: g_x1 + g_x2 * s.
    double wall_tangent_y1(double x1, double x2, double s) const
    {
        const auto g = dirichlet_->gradient(x1, x2);
        return g[0] + g[1] * s;
    }

    const TransformedGrid& grid_;
    double p_;
    double sigma_;
    const std::vector<double>& left_;
    const std::vector<double>& right_;
    const std::vector<double>& bottom_;
    const std::vector<double>& top_;
    const std::optional<DirichletData>& dirichlet_;
    std::vector<double> base_;
    std::vector<Face> faces_;
};

double inf_norm(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double two_norm(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double relative_residual(const Discretization::Evaluation& ev)
{
    const double r = inf_norm(ev.residual);
    if (ev.flux_scale > 0.0) return r / ev.flux_scale;
    return r == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

class LinearSolver {
public:
    explicit LinearSolver(int n, double tol) : n_(n), tol_(tol), matrix_(n, n) {}

    // Solves M x = rhs; returns the number of refinement passes used.
    int solve(const std::vector<Eigen::Triplet<double>>& triplets, const std::vector<double>& rhs,
              std::vector<double>& x)
    {
        matrix_.setFromTriplets(triplets.begin(), triplets.end());
        matrix_.makeCompressed();
        if (!analysed_) {
            lu_.analyzePattern(matrix_);
            analysed_ = true;
        }
        lu_.factorize(matrix_);
        if (lu_.info() != Eigen::Success) throw NumericError("sparse LU factorisation failed: " + lu_.lastErrorMessage());

        const Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n_);
        Eigen::VectorXd sol = lu_.solve(b);
        const double bnorm = b.norm();
        int refinements = 0;
        for (;;) {
            const Eigen::VectorXd r = b - matrix_ * sol;
            const double rel = bnorm > 0.0 ? r.norm() / bnorm : r.norm();
            if (!std::isfinite(rel)) throw NumericError("linear solve produced non-finite values");
            if (rel <= tol_) break;
            if (refinements == kMaxRefinements) {
                std::ostringstream msg;
                msg << "linear solve relative residual " << rel << " above " << tol_ << " after refinement";
                throw NumericError(msg.str());
            }
            sol += lu_.solve(r);
            ++refinements;
        }
        x.assign(sol.data(), sol.data() + n_);
        return refinements;
    }

private:
    int n_;
    double tol_;
    Eigen::SparseMatrix<double> matrix_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
    bool analysed_ = false;
};

// Cumulative integral of delta^{-1/(p-1)} from -L, Simpson per sub-interval.
std::vector<double> one_dimensional_profile(const TransformedGrid& grid, double p, double V)
{
    const double e = -1.0 / (p - 1.0);
    auto w = [&](double y) { return std::pow(grid.geometry.delta(y), e); };
    auto simpson = [&](double a, double b) { return (b - a) / 6.0 * (w(a) + 4.0 * w(0.5 * (a + b)) + w(b)); };
    std::vector<double> at_center(static_cast<std::size_t>(grid.n1));
    double acc = 0.0;
    for (int i = 0; i < grid.n1; ++i) {
        at_center[i] = acc + simpson(grid.y1_faces[i], grid.y1_centers[i]);
        acc += simpson(grid.y1_faces[i], grid.y1_faces[i + 1]);
    }
    for (double& v : at_center) v = -V + 2.0 * V * v / acc;
    return at_center;
}

} // namespace

void SolverConfig::validate() const
{
    if (!(p > 1.0)) throw ParameterError("solver: p must exceed 1");
    if (sigma && !(*sigma > 0.0)) throw ParameterError("solver: sigma must be positive");
    if (!(tol_nonlinear > 0.0 && tol_nonlinear <= 1e-2)) throw ParameterError("solver: tol_nonlinear must lie in (0, 1e-2]");
    if (max_outer < 1) throw ParameterError("solver: max_outer must be positive");
    if (!(damping > 0.0 && damping < 1.0)) throw ParameterError("solver: damping must lie in (0, 1)");
    if (n1 < 8 || n2 < 8) throw ParameterError("solver: n1 and n2 must be at least 8");
    if (!(grading_q >= 1.0)) throw ParameterError("solver: grading_q must be at least 1");
    if (!(lateral_value > 0.0)) throw ParameterError("solver: lateral_value must be positive");
    if (!(tol_linear > 0.0 && tol_linear <= 1e-10)) throw ParameterError("solver: tol_linear must lie in (0, 1e-10]");
    if (dirichlet_override && (!dirichlet_override->value || !dirichlet_override->gradient)) {
        throw ParameterError("solver: Dirichlet override needs value and gradient");
    }
}

double SolverConfig::resolved_sigma(double L) const
{
    if (sigma) return *sigma;
    return 1e-12 * (lateral_value / L) * (lateral_value / L);
}

double TransformedGrid::x2_at_center(int i, double y2) const
{
    return -geometry.eps / 2.0 + h2_c[static_cast<std::size_t>(i)] + y2 * delta_c[static_cast<std::size_t>(i)];
}

double TransformedGrid::x2_at_face(int i, double y2) const
{
    return -geometry.eps / 2.0 + h2_f[static_cast<std::size_t>(i)] + y2 * delta_f[static_cast<std::size_t>(i)];
}

double TransformedGrid::shear_at_center(int i, double y2) const
{
    return dh2_c[static_cast<std::size_t>(i)] + y2 * ddelta_c[static_cast<std::size_t>(i)];
}

double TransformedGrid::shear_at_face(int i, double y2) const
{
    return dh2_f[static_cast<std::size_t>(i)] + y2 * ddelta_f[static_cast<std::size_t>(i)];
}

TransformedGrid build_grid(const GapGeometry& geometry, const SolverConfig& config, double L)
{
    config.validate();
    if (geometry.d != 2) throw ParameterError("neck solver: only d = 2 is supported");
    if (!(L > 0.0)) throw ParameterError("neck solver: L must be positive");
    if (L > geometry.R0 * (1.0 + 1e-12)) throw ParameterError("neck solver: L must not exceed R0");

    TransformedGrid g;
    g.geometry = geometry;
    g.L = L;
    g.n1 = config.n1;
    g.n2 = config.n2;
    g.q = config.grading_q;

    g.y1_faces.resize(static_cast<std::size_t>(g.n1) + 1);
    for (int i = 0; i <= g.n1; ++i) {
        const double s = -1.0 + 2.0 * i / g.n1;
        g.y1_faces[i] = std::copysign(L * std::pow(std::abs(s), g.q), s);
    }
    g.y1_faces.front() = -L;
    g.y1_faces.back() = L;
    g.y1_centers.resize(static_cast<std::size_t>(g.n1));
    for (int i = 0; i < g.n1; ++i) g.y1_centers[i] = 0.5 * (g.y1_faces[i] + g.y1_faces[i + 1]);
    g.y2_faces.resize(static_cast<std::size_t>(g.n2) + 1);
    g.y2_centers.resize(static_cast<std::size_t>(g.n2));
    for (int j = 0; j <= g.n2; ++j) g.y2_faces[j] = static_cast<double>(j) / g.n2;
    for (int j = 0; j < g.n2; ++j) g.y2_centers[j] = (j + 0.5) / g.n2;

    auto fill = [&](const std::vector<double>& ys, std::vector<double>& delta, std::vector<double>& h2,
                    std::vector<double>& dh1, std::vector<double>& dh2, std::vector<double>& dd) {
        const std::size_t n = ys.size();
        delta.resize(n);
        h2.resize(n);
        dh1.resize(n);
        dh2.resize(n);
        dd.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double y = ys[k];
            delta[k] = geometry.delta(y);
            if (!(delta[k] > 0.0)) {
                std::ostringstream msg;
                msg << "gap width " << delta[k] << " <= 0 at x1 = " << y << " (overlapping inclusions)";
                throw GeometryError(msg.str());
            }
            h2[k] = geometry.h2(y);
            dh1[k] = geometry.dh1(y);
            dh2[k] = geometry.dh2(y);
            dd[k] = dh1[k] - dh2[k];
        }
    };
    fill(g.y1_centers, g.delta_c, g.h2_c, g.dh1_c, g.dh2_c, g.ddelta_c);
    fill(g.y1_faces, g.delta_f, g.h2_f, g.dh1_f, g.dh2_f, g.ddelta_f);
    geometry.validate();
    return g;
}

double DiscreteField::grad_norm(int i, int j) const
{
    const auto c = static_cast<std::size_t>(grid->index(i, j));
    return std::hypot(gx[c], gy[c]);
}

double DiscreteField::total_oscillation() const
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* v : {&u, &left_bc, &right_bc, &bottom_bc, &top_bc}) {
        for (double x : *v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    return hi >= lo ? hi - lo : 0.0;
}

DiscreteField solve(const TransformedGrid& grid, const SolverConfig& config)
{
    config.validate();
    if (grid.n1 != config.n1 || grid.n2 != config.n2) throw ParameterError("solve: grid and config sizes differ");

    DiscreteField field;
    field.grid = std::make_shared<const TransformedGrid>(grid);
    field.p = config.p;
    field.sigma = config.resolved_sigma(grid.L);
    field.lateral_value = config.lateral_value;
    field.dirichlet = config.dirichlet_override;

    const int n1 = grid.n1, n2 = grid.n2;
    const double V = config.lateral_value;
    if (field.dirichlet) {
        const auto& g = field.dirichlet->value;
        for (int j = 0; j < n2; ++j) {
            field.left_bc.push_back(g(-grid.L, grid.x2_at_face(0, grid.y2_centers[j])));
            field.right_bc.push_back(g(grid.L, grid.x2_at_face(n1, grid.y2_centers[j])));
        }
        for (int i = 0; i < n1; ++i) {
            field.bottom_bc.push_back(g(grid.y1_centers[i], grid.x2_at_center(i, 0.0)));
            field.top_bc.push_back(g(grid.y1_centers[i], grid.x2_at_center(i, 1.0)));
        }
    } else {
        field.left_bc.assign(static_cast<std::size_t>(n2), -V);
        field.right_bc.assign(static_cast<std::size_t>(n2), V);
    }

    // Initial guess: the 1D p-Laplace profile across the neck (kept as the
    // base of the unknowns), or the harmonic extension of Dirichlet data.
    std::vector<double> base;
    if (!field.dirichlet) base = one_dimensional_profile(grid, field.p, V);
    const Discretization disc(*field.grid, field.p, field.sigma, field.left_bc, field.right_bc, field.bottom_bc,
                              field.top_bc, field.dirichlet, std::move(base));
    const int n = disc.n();
    LinearSolver linear(n, config.tol_linear);
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<double> rhs(static_cast<std::size_t>(n)), step;

    std::vector<double> u(static_cast<std::size_t>(n), 0.0); // deviation from the base
    if (field.dirichlet) {
        const auto ev = disc.evaluate(u, Linearisation::laplace, &triplets);
        for (int c = 0; c < n; ++c) rhs[c] = -ev.residual[c];
        linear.solve(triplets, rhs, u);
    }

    const bool newton = field.p > 2.0;
    field.trace.method = newton ? "newton" : "kacanov";
    auto ev = disc.evaluate(u, Linearisation::picard, nullptr);
    double rel = relative_residual(ev);
    field.residual_history.push_back(rel);

    int outer = 0;
    while (rel > config.tol_nonlinear) {
        if (outer == config.max_outer) {
            std::ostringstream msg;
            msg << "nonlinear solve did not reach " << config.tol_nonlinear << " in " << config.max_outer
                << " iterations (last relative residual " << rel << ")";
            throw ConvergenceError(msg.str(), field.residual_history);
        }
        ++outer;
        const double norm0 = two_norm(ev.residual);
        for (int c = 0; c < n; ++c) rhs[c] = -ev.residual[c];

        // Kacanov falls back to the Newton direction when its step does not
        // reduce the residual.
        bool accepted = false;
        int refinements = 0;
        double alpha = 1.0;
        std::vector<double> trial(static_cast<std::size_t>(n));
        Discretization::Evaluation trial_ev;
        for (const Linearisation lin : {newton ? Linearisation::newton : Linearisation::picard, Linearisation::newton}) {
            disc.evaluate(u, lin, &triplets);
            refinements = linear.solve(triplets, rhs, step);
            alpha = 1.0;
            for (int bt = 0; bt <= kMaxBacktracks; ++bt) {
                for (int c = 0; c < n; ++c) trial[c] = u[c] + alpha * step[c];
                trial_ev = disc.evaluate(trial, Linearisation::picard, nullptr);
                if (two_norm(trial_ev.residual) <= (1.0 - kArmijo * alpha) * norm0) {
                    accepted = true;
                    break;
                }
                alpha *= config.damping;
            }
            if (accepted || lin == Linearisation::newton) break;
        }
        if (!accepted) {
            std::ostringstream msg;
            msg << "line search failed at iteration " << outer << " (relative residual " << rel << ")";
            throw ConvergenceError(msg.str(), field.residual_history);
        }
        u.swap(trial);
        ev = std::move(trial_ev);
        rel = relative_residual(ev);
        field.residual_history.push_back(rel);

        disc.cell_gradients(u, field.gx, field.gy);
        field.trace.outer.push_back(outer);
        field.trace.linear_refinements.push_back(refinements);
        field.trace.step_size.push_back(alpha);
        field.trace.residual.push_back(rel);
        field.trace.energy.push_back(disc.energy(field.gx, field.gy));
    }

    disc.cell_gradients(u, field.gx, field.gy);
    field.u = disc.to_u(u);
    field.converged = true;
    field.outer_iterations = outer;
    return field;
}

double grad_max(const DiscreteField& field, double r)
{
    const auto& g = *field.grid;
    double best = -1.0;
    for (int i = 0; i < g.n1; ++i) {
        if (std::abs(g.y1_centers[i]) > r) continue;
        for (int j = 0; j < g.n2; ++j) best = std::max(best, field.grad_norm(i, j));
    }
    if (best < 0.0) throw DomainError("grad_max: no cell with |x1| <= r");
    return best;
}

namespace {

// Piecewise-linear value along grid row j at y1 = x, through the lateral
// boundary values and the cell centres.
double row_value(const DiscreteField& field, int j, double x)
{
    const auto& g = *field.grid;
    const auto& yc = g.y1_centers;
    if (x <= yc.front()) {
        const double t = (x + g.L) / (yc.front() + g.L);
        return field.left_bc[j] + t * (field.value(0, j) - field.left_bc[j]);
    }
    if (x >= yc.back()) {
        const double t = (x - yc.back()) / (g.L - yc.back());
        return field.value(g.n1 - 1, j) + t * (field.right_bc[j] - field.value(g.n1 - 1, j));
    }
    const auto it = std::upper_bound(yc.begin(), yc.end(), x);
    const int i = static_cast<int>(it - yc.begin()) - 1;
    const double t = (x - yc[i]) / (yc[i + 1] - yc[i]);
    return field.value(i, j) + t * (field.value(i + 1, j) - field.value(i, j));
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v)
    {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
};

// Extremes of u over a <= x1 <= b (closed), edges interpolated per row.
Range slab_range(const DiscreteField& field, double a, double b)
{
    const auto& g = *field.grid;
    Range r;
    for (int j = 0; j < g.n2; ++j) {
        r.add(row_value(field, j, a));
        r.add(row_value(field, j, b));
        for (int i = 0; i < g.n1; ++i) {
            if (g.y1_centers[i] >= a && g.y1_centers[i] <= b) r.add(field.value(i, j));
        }
    }
    if (!field.bottom_bc.empty()) {
        for (int i = 0; i < g.n1; ++i) {
            if (g.y1_centers[i] >= a && g.y1_centers[i] <= b) {
                r.add(field.bottom_bc[i]);
                r.add(field.top_bc[i]);
            }
        }
    }
    return r;
}

void require_inside(const DiscreteField& field, double a, double b, const char* what)
{
    const double L = field.grid->L;
    const double slack = 1e-12 * L;
    if (a < -L - slack || b > L + slack) {
        std::ostringstream msg;
        msg << what << ": region [" << a << ", " << b << "] leaves the neck [-" << L << ", " << L << "]";
        throw DomainError(msg.str());
    }
}

} // namespace

double oscillation(const DiscreteField& field, double center, double radius)
{
    if (!(radius > 0.0)) throw DomainError("oscillation: empty slab (radius <= 0)");
    const double a = center - radius, b = center + radius;
    require_inside(field, a, b, "oscillation");
    const double L = field.grid->L;
    const Range r = slab_range(field, std::max(a, -L), std::min(b, L));
    return r.hi - r.lo;
}

HarnackResult harnack_ratio(const DiscreteField& field, double r)
{
    if (!(r > 0.0)) throw DomainError("harnack_ratio: r must be positive");
    require_inside(field, -2.0 * r, 2.0 * r, "harnack_ratio");
    const double L = field.grid->L;
    const double sup_u = slab_range(field, std::max(-2.0 * r, -L), std::min(2.0 * r, L)).hi;

    Range ann = slab_range(field, -r, -0.5 * r);
    const Range right = slab_range(field, 0.5 * r, r);
    ann.add(right.lo);
    ann.add(right.hi);

    HarnackResult out;
    out.sup_w = sup_u - ann.lo;
    out.inf_w = sup_u - ann.hi;
    if (out.sup_w <= 1e-12 * field.total_oscillation()) {
        out.degenerate = true;
        out.ratio = 1.0;
        return out;
    }
    out.ratio = out.inf_w > 0.0 ? out.sup_w / out.inf_w : std::numeric_limits<double>::infinity();
    return out;
}

LateralFlux lateral_flux(const DiscreteField& field)
{
    const Discretization disc(*field.grid, field.p, field.sigma, field.left_bc, field.right_bc, field.bottom_bc,
                              field.top_bc, field.dirichlet, {});
    return disc.lateral(field.u);
}

std::array<double, 4> normalized_coefficients(const DiscreteField& field, int i, int j)
{
    const auto c = static_cast<std::size_t>(field.grid->index(i, j));
    const double a = field.gx[c], b = field.gy[c];
    const double f = (field.p - 2.0) / (field.sigma + a * a + b * b);
    return {1.0 + f * a * a, f * a * b, f * a * b, 1.0 + f * b * b};
}

void write_field_csv(const DiscreteField& field, std::ostream& out)
{
    const auto& g = *field.grid;
    const auto old_precision = out.precision();
    out << std::setprecision(17);
    out << "y1,y2,x1,x2,u,gx,gy\n";
    for (int j = 0; j < g.n2; ++j) {
        for (int i = 0; i < g.n1; ++i) {
            const auto c = static_cast<std::size_t>(g.index(i, j));
            out << g.y1_centers[i] << ',' << g.y2_centers[j] << ',' << g.y1_centers[i] << ',' << field.x2(i, j) << ','
                << field.u[c] << ',' << field.gx[c] << ',' << field.gy[c] << '\n';
        }
    }
    out.precision(old_precision);
}

} // namespace pgap
