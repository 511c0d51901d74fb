#include "pgap/weighted.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pgap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInnerRadius = 1e-4;
constexpr double kFitLow = 1e-3;
constexpr double kFitHigh = 1e-1;
constexpr double kMomentTolerance = 1e-10;

std::string format_double(double x)
{
    std::ostringstream out;
    out.precision(17);
    out << x;
    return out.str();
}

struct Spectrum {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

// Periodic flux form on theta_k = 2 pi k/n with lumped mass a(theta_k).
Spectrum periodic_spectrum(const WeightFunction& weight, int n)
{
    const double h = kTwoPi / n;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        const int kp = (k + 1) % n;
        const double ah = weight.angular((k + 0.5) * h) / (h * h);
        K(k, k) += ah;
        K(kp, kp) += ah;
        K(k, kp) -= ah;
        K(kp, k) -= ah;
        M(k, k) = weight.angular(k * h);
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(K, M);
    if (solver.info() != Eigen::Success) throw NumericError("sphere eigenproblem: eigen-solver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

// Rayleigh quotient in difference form. The dense solver loses about
// eps * |K| ~ 1e-12 absolute; the quotient recovers the discrete value to
// rounding of the eigenvalue itself.
double rayleigh_quotient(const WeightFunction& weight, const Eigen::VectorXd& u)
{
    const auto n = static_cast<int>(u.size());
    const double h = kTwoPi / n;
    long double num = 0.0L;
    long double den = 0.0L;
    for (int k = 0; k < n; ++k) {
        const int kp = (k + 1) % n;
        const long double du = u(kp) - u(k);
        num += static_cast<long double>(weight.angular((k + 0.5) * h)) * du * du;
        den += static_cast<long double>(weight.angular(k * h)) * u(k) * u(k);
    }
    return static_cast<double>(num / den / (static_cast<long double>(h) * h));
}

void require_circle(int d)
{
    if (d != 3) throw UnsupportedDimensionError("sphere eigenproblem: only d = 3 (the circle) is supported");
}

} // namespace

WeightFunction WeightFunction::constant(double c)
{
    if (!(c > 0.0)) throw ParameterError("weight: constant must be positive");
    WeightFunction w;
    w.angular = [c](double) { return c; };
    w.kappa = std::max(c, 1.0 / c);
    w.descriptor = "constant(" + format_double(c) + ")";
    return w;
}

WeightFunction WeightFunction::cosine(double mean, double amplitude, int mode)
{
    if (mode < 0) throw ParameterError("weight: mode must be non-negative");
    const double lo = mean - std::abs(amplitude), hi = mean + std::abs(amplitude);
    if (!(lo > 0.0)) throw ParameterError("weight: a must stay positive");
    WeightFunction w;
    w.angular = [=](double t) { return mean + amplitude * std::cos(mode * t); };
    w.kappa = std::max(hi, 1.0 / lo);
    w.descriptor = "cosine(mean=" + format_double(mean) + ", amplitude=" + format_double(amplitude) +
                   ", mode=" + std::to_string(mode) + ")";
    return w;
}

WeightFunction WeightFunction::fourier(double mean, std::vector<double> cos_coeffs, std::vector<double> sin_coeffs)
{
    double total = 0.0;
    for (double c : cos_coeffs) total += std::abs(c);
    for (double s : sin_coeffs) total += std::abs(s);
    if (!(mean - total > 0.0)) throw ParameterError("weight: Fourier series must stay positive (mean > sum |c_k|)");
    WeightFunction w;
    std::ostringstream desc;
    desc << "fourier(mean=" << format_double(mean) << ", cos=[";
    for (std::size_t k = 0; k < cos_coeffs.size(); ++k) desc << (k ? ", " : "") << format_double(cos_coeffs[k]);
    desc << "], sin=[";
    for (std::size_t k = 0; k < sin_coeffs.size(); ++k) desc << (k ? ", " : "") << format_double(sin_coeffs[k]);
    desc << "])";
    w.descriptor = desc.str();
    w.kappa = std::max(mean + total, 1.0 / (mean - total));
    w.angular = [mean, c = std::move(cos_coeffs), s = std::move(sin_coeffs)](double t) {
        double a = mean;
        for (std::size_t k = 0; k < c.size(); ++k) a += c[k] * std::cos((k + 1.0) * t);
        for (std::size_t k = 0; k < s.size(); ++k) a += s[k] * std::sin((k + 1.0) * t);
        return a;
    };
    return w;
}

WeightReport check_weight(const WeightFunction& weight, int quad_n)
{
    if (quad_n < 64) throw ParameterError("check_weight: quad_n must be at least 64");
    if (!weight.angular) throw ParameterError("check_weight: weight has no rule");
    WeightReport rep;
    rep.min_value = std::numeric_limits<double>::infinity();
    rep.max_value = -rep.min_value;
    const double h = kTwoPi / quad_n;
    for (int k = 0; k < quad_n; ++k) {
        const double t = k * h;
        const double a = weight.angular(t);
        rep.min_value = std::min(rep.min_value, a);
        rep.max_value = std::max(rep.max_value, a);
        rep.moment_cos += a * std::cos(t) * h;
        rep.moment_sin += a * std::sin(t) * h;
    }
    const double slack = 1e-12 * weight.kappa;
    if (!(rep.min_value >= 1.0 / weight.kappa - slack) || !(rep.max_value <= weight.kappa + slack)) {
        std::ostringstream msg;
        msg << "invalid weight: sampled range [" << rep.min_value << ", " << rep.max_value
            << "] leaves [1/kappa, kappa] with kappa = " << weight.kappa;
        throw InvalidWeightError(msg.str(), rep.moment_cos, rep.moment_sin);
    }
    if (std::abs(rep.moment_cos) > kMomentTolerance || std::abs(rep.moment_sin) > kMomentTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "invalid weight: first moments " << rep.moment_cos << " (cos), " << rep.moment_sin
            << " (sin) do not vanish";
        throw InvalidWeightError(msg.str(), rep.moment_cos, rep.moment_sin);
    }
    rep.valid = true;
    return rep;
}

double sphere_lambda1_raw(const WeightFunction& weight, int n)
{
    if (n < 8) throw ParameterError("sphere eigenproblem: n must be at least 8");
    const Spectrum s = periodic_spectrum(weight, n);
    return rayleigh_quotient(weight, s.vectors.col(1));
}

SphereEigenResult sphere_lambda1(const WeightFunction& weight, int n, int d)
{
    require_circle(d);
    if (n < 32 || n % 4 != 0) throw ParameterError("sphere eigenproblem: n must be a multiple of 4 and at least 32");
    check_weight(weight, std::max(64, n));

    const Spectrum fine = periodic_spectrum(weight, n);
    // The constants span the kernel: check before dropping them.
    const double null_value = fine.values(0);
    const Eigen::VectorXd null_vec = fine.vectors.col(0);
    const double mean = null_vec.mean();
    const double spread = (null_vec.array() - mean).abs().maxCoeff();
    if (std::abs(null_value) > 1e-9 * std::max(1.0, std::abs(fine.values(1))) || spread > 1e-8 * std::abs(mean)) {
        std::ostringstream msg;
        msg << "sphere eigenproblem: smallest eigenvalue " << null_value << " is not the constant null mode";
        throw NumericError(msg.str());
    }

    SphereEigenResult res;
    res.n = n;
    res.d = d;
    res.null_eigenvalue = null_value;
    res.lambda1_raw = rayleigh_quotient(weight, fine.vectors.col(1));
    res.lambda1_coarse = sphere_lambda1_raw(weight, n / 2);
    res.lambda1_coarsest = sphere_lambda1_raw(weight, n / 4);
    // Error expansion c2 h^2 + c4 h^4 + O(h^6): eliminate both terms.
    const double r_fine = (4.0 * res.lambda1_raw - res.lambda1_coarse) / 3.0;
    const double r_coarse = (4.0 * res.lambda1_coarse - res.lambda1_coarsest) / 3.0;
    res.lambda1 = (16.0 * r_fine - r_coarse) / 15.0;
    if (!(res.lambda1 > 0.0)) throw NumericError("sphere eigenproblem: non-positive first eigenvalue");
    res.alpha = alpha_from_lambda(res.lambda1, d);
    const Eigen::VectorXd ev = fine.vectors.col(1);
    res.eigenvector.assign(ev.data(), ev.data() + ev.size());
    return res;
}

double alpha_from_lambda(double lambda1, int d)
{
    if (!(lambda1 > 0.0)) throw ParameterError("alpha_from_lambda: lambda1 must be positive");
    if (d < 3) throw ParameterError("alpha_from_lambda: d must be at least 3");
    const double b = d - 1.0;
    // Rationalised root, stable for small lambda1.
    return 2.0 * lambda1 / (b + std::sqrt(b * b + 4.0 * lambda1));
}

double equal_curvature_exponent(int d)
{
    if (d < 3) throw ParameterError("equal_curvature_exponent: d must be at least 3");
    const double b = d - 1.0;
    return (-b + std::sqrt(b * b + 4.0 * (d - 2.0))) / 4.0;
}

WeightedSolveResult solve_weighted_disk(const WeightFunction& weight, const std::function<double(double)>& boundary,
                                        int n_r, int n_theta)
{
    if (n_r < 8 || n_theta < 8) throw ParameterError("weighted disk: n_r and n_theta must be at least 8");
    if (!weight.angular || !boundary) throw ParameterError("weighted disk: weight and boundary data are required");
    check_weight(weight, std::max(64, n_theta));

    const double s0 = std::log(kInnerRadius);
    const double ds = -s0 / n_r;
    const double dt = kTwoPi / n_theta;
    const int n = n_r * n_theta;
    auto idx = [n_theta](int i, int k) { return i * n_theta + ((k % n_theta) + n_theta) % n_theta; };

    WeightedSolveResult res;
    res.n_r = n_r;
    res.n_theta = n_theta;
    res.r.resize(static_cast<std::size_t>(n_r));
    res.theta.resize(static_cast<std::size_t>(n_theta));
    for (int i = 0; i < n_r; ++i) res.r[i] = std::exp(s0 + (i + 0.5) * ds);
    for (int k = 0; k < n_theta; ++k) res.theta[k] = (k + 0.5) * dt;

    // In s = log r the equation reads d_s(a e^{2s} v_s) + e^{2s} d_theta(a v_theta) = 0.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * n));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    auto couple = [&](int p, int q, double c) {
        trip.emplace_back(p, p, c);
        trip.emplace_back(q, q, c);
        trip.emplace_back(p, q, -c);
        trip.emplace_back(q, p, -c);
    };
    for (int i = 0; i < n_r; ++i) {
        const double s_lo = s0 + i * ds, s_hi = s_lo + ds;
        const double ring_area = 0.5 * (std::exp(2.0 * s_hi) - std::exp(2.0 * s_lo)); // integral of e^{2s}
        for (int k = 0; k < n_theta; ++k) {
            const double a_c = weight.angular(res.theta[k]);
            // radial face s_hi
            const double cr = a_c * std::exp(2.0 * s_hi) * dt / ds;
            if (i + 1 < n_r) {
                couple(idx(i, k), idx(i + 1, k), cr);
            } else {
                const double cb = a_c * dt / (0.5 * ds);
                trip.emplace_back(idx(i, k), idx(i, k), cb);
                rhs(idx(i, k)) += cb * boundary(res.theta[k]);
            }
            // angular face theta_{k+1}
            const double ct = weight.angular((k + 1) * dt) * ring_area / dt;
            couple(idx(i, k), idx(i, k + 1), ct);
        }
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericError("weighted disk: LDLT factorisation failed");
    Eigen::VectorXd v = ldlt.solve(rhs);
    const double rel = rhs.norm() > 0.0 ? (A * v - rhs).norm() / rhs.norm() : (A * v - rhs).norm();
    if (!(rel <= 1e-10)) {
        std::ostringstream msg;
        msg << "weighted disk: linear residual " << rel << " above 1e-10";
        throw NumericError(msg.str());
    }
    res.v.assign(v.data(), v.data() + n);
    res.min_v = v.minCoeff();
    res.max_v = v.maxCoeff();

    double asum = 0.0, vsum = 0.0;
    for (int k = 0; k < n_theta; ++k) {
        const double a = weight.angular(res.theta[k]);
        asum += a;
        vsum += a * v(idx(0, k));
    }
    res.v0 = vsum / asum;

    res.sup_osc.resize(static_cast<std::size_t>(n_r));
    for (int i = 0; i < n_r; ++i) {
        double m = 0.0;
        for (int k = 0; k < n_theta; ++k) m = std::max(m, std::abs(v(idx(i, k)) - res.v0));
        res.sup_osc[i] = m;
    }

    std::vector<double> xs, ys;
    double scale = 0.0;
    for (int k = 0; k < n_theta; ++k) scale = std::max(scale, std::abs(boundary(res.theta[k])));
    bool degenerate = false;
    for (int i = 0; i < n_r; ++i) {
        if (res.r[i] < kFitLow || res.r[i] > kFitHigh) continue;
        if (res.sup_osc[i] <= 1e-12 * std::max(scale, 1.0)) degenerate = true;
        xs.push_back(std::log(res.r[i]));
        ys.push_back(std::log(std::max(res.sup_osc[i], std::numeric_limits<double>::min())));
    }
    if (!degenerate && xs.size() >= 2) {
        const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            sxx += (xs[k] - mx) * (xs[k] - mx);
            sxy += (xs[k] - mx) * (ys[k] - my);
        }
        res.decay_slope = sxy / sxx;
    }
    return res;
}

} // namespace pgap
