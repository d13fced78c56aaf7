#pragma once

// Analytic laboratory: scalar problems whose iteration is a closed-form
// linear recurrence.  Running the real solver against matrix powers is the
// central anti-regression oracle for the iteration order and argument
// mapping.
//
// Toy problem A ("prop"): min_u c/2 u^2 - 1/2 u^2 with K = 1.  With
// theta = 0 the pair (g, u) evolves by a fixed 2x2 matrix; one eigenvalue
// leaves the unit disc whenever sigma < 2 omega = 2 and c is large, so the
// iteration diverges from the matching eigenvector even though the energy
// is strongly convex.
//
// Toy problem B ("example"): min_u c/2 u^2 - 1/2 ||K u||^2 with K = (1,1)^T
// and q^0 = (-1, 1).  Then u^n = 0 exactly for all n while
// g^{n+1} = (-1)^n (sigma - 1)^{-(n+1)} q^0, which decays only for
// sigma > 2: convergence of u does not imply convergence of g.

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdhg/grid.hpp"
#include "pdhg/linops.hpp"
#include "pdhg/prox.hpp"
#include "pdhg/solver.hpp"

namespace pdhg {

struct Mat2 {
    double a11, a12, a21, a22;

    std::array<double, 2> apply(const std::array<double, 2>& v) const {
        return {a11 * v[0] + a12 * v[1], a21 * v[0] + a22 * v[1]};
    }
};

// Fixed-point matrix of toy problem A acting on (g, u).
inline Mat2 divergence_matrix(double sigma, double tau, double c) {
    if (!(sigma > 1.0))
        throw std::invalid_argument("divergence_matrix: sigma > 1 required for well-definedness");
    if (!(tau > 0.0) || !(c > 1.0))
        throw std::invalid_argument("divergence_matrix: need tau > 0 and c > 1");
    const double ti = 1.0 / tau;
    const double s1 = sigma - 1.0;
    return Mat2{-1.0 / s1, sigma / s1, -1.0 / ((ti + c) * s1),
                ti / (ti + c) + sigma / ((ti + c) * s1)};
}

// d_{1,2} = tr/2 +- sqrt((tr/2)^2 - det); complex pair when the
// discriminant is negative.
inline std::pair<std::complex<double>, std::complex<double>> eigvals_2x2(const Mat2& a) {
    const double half_tr = 0.5 * (a.a11 + a.a22);
    const double det = a.a11 * a.a22 - a.a12 * a.a21;
    const double disc = half_tr * half_tr - det;
    if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        return {std::complex<double>(half_tr + s, 0.0), std::complex<double>(half_tr - s, 0.0)};
    }
    const double s = std::sqrt(-disc);
    return {std::complex<double>(half_tr, s), std::complex<double>(half_tr, -s)};
}

// Unit eigenvector for a real eigenvalue, first nonzero component positive.
inline std::array<double, 2> eigvec_2x2(const Mat2& a, double eigenvalue) {
    // (a12, d - a11) is an eigenvector unless a12 == 0
    std::array<double, 2> v{a.a12, eigenvalue - a.a11};
    if (v[0] == 0.0 && v[1] == 0.0) v = {eigenvalue - a.a22, a.a21};
    if (v[0] == 0.0 && v[1] == 0.0) v = {1.0, 0.0};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1]);
    v[0] /= n;
    v[1] /= n;
    const double lead = v[0] != 0.0 ? v[0] : v[1];
    if (lead < 0.0) {
        v[0] = -v[0];
        v[1] = -v[1];
    }
    return v;
}

struct ToyTrace {
    std::vector<Vec> g_seq, u_seq;  // state after each iteration
    bool diverged = false;
    bool matched_closed_form = false;
    double max_closed_form_err = 0.0;  // relative, against the analytic recurrence
    bool u_all_zero = true;            // toy problem B only
};

// Runs the real solver on toy problem A from z0 = (g0, u0) and compares
// against powers of divergence_matrix (the comparison assumes theta = 0).
inline ToyTrace run_toy_prop(double sigma, double tau, double c,
                             const std::array<double, 2>& z0, int iterations,
                             double theta = 0.0) {
    const Mat2 a = divergence_matrix(sigma, tau, c);  // validates the parameters

    Model m;
    m.name = "toy-prop";
    m.op = std::make_shared<IdentityOp>(1);
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 1);
    m.g_term = std::make_shared<QuadraticProx>(c, 1);
    m.omega = 1.0;
    m.strong_convexity = c;

    PrimalDualState state;
    state.u = {z0[1]};
    state.u_prev = state.u;
    state.u_bar = state.u;
    state.g = {z0[0]};
    state.q = {-z0[0]};  // q in dF(g) = {-g}

    ToyTrace trace;
    trace.matched_closed_form = true;
    std::array<double, 2> zn = z0;
    for (int n = 0; n < iterations; ++n) {
        pdhg_step(state, *m.op, *m.f_term, *m.g_term, sigma, tau, theta);
        if (state.diverged) break;
        trace.g_seq.push_back(state.g);
        trace.u_seq.push_back(state.u);
        if (theta == 0.0) {
            zn = a.apply(zn);
            const double scale = 1.0 + std::hypot(zn[0], zn[1]);
            const double err = std::hypot(state.g[0] - zn[0], state.u[0] - zn[1]) / scale;
            trace.max_closed_form_err = std::max(trace.max_closed_form_err, err);
        }
        if (std::max(std::fabs(state.g[0]), std::fabs(state.u[0])) > 1e12) {
            trace.diverged = true;
            break;
        }
    }
    if (state.diverged) trace.diverged = true;
    if (theta != 0.0) trace.matched_closed_form = false;
    trace.matched_closed_form =
        theta == 0.0 && trace.max_closed_form_err <= 1e-10;
    return trace;
}

// Runs the real solver on toy problem B and compares g^n against
// (-1)^{n-1} (sigma - 1)^{-n} q0.  The diverged flag reports measured
// growth, which happens exactly for sigma < 2.
inline ToyTrace run_toy_example(double sigma, const std::array<double, 2>& q0, int iterations,
                                double c = 3.0) {
    if (!(sigma > 1.0)) throw std::invalid_argument("run_toy_example: sigma must be > 1");
    if (!(c > 2.0)) throw std::invalid_argument("run_toy_example: c must be > 2");

    Model m;
    m.name = "toy-example";
    m.op = std::make_shared<DenseMap>(2, 1, Vec{1.0, 1.0});  // K = (1, 1)^T
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 2);
    m.g_term = std::make_shared<QuadraticProx>(c, 1);
    m.omega = 1.0;
    m.strong_convexity = c;

    PrimalDualState state;
    state.u = {0.0};
    state.u_prev = state.u;
    state.u_bar = state.u;
    state.q = {q0[0], q0[1]};
    state.g = {-q0[0], -q0[1]};

    ToyTrace trace;
    double factor = 1.0;  // (-1)^{n-1} (sigma - 1)^{-n} after n updates
    for (int n = 0; n < iterations; ++n) {
        pdhg_step(state, *m.op, *m.f_term, *m.g_term, sigma, 1.0 / sigma, 0.0);
        if (state.diverged) break;
        trace.g_seq.push_back(state.g);
        trace.u_seq.push_back(state.u);
        factor = (n == 0) ? 1.0 / (sigma - 1.0) : -factor / (sigma - 1.0);
        const double e0 = state.g[0] - factor * q0[0];
        const double e1 = state.g[1] - factor * q0[1];
        const double scale = std::fabs(factor) * std::hypot(q0[0], q0[1]);
        trace.max_closed_form_err =
            std::max(trace.max_closed_form_err, std::hypot(e0, e1) / (scale + 1e-300));
        if (state.u[0] != 0.0) trace.u_all_zero = false;
    }
    trace.matched_closed_form = trace.max_closed_form_err <= 1e-12;
    if (!trace.g_seq.empty()) {
        const double first = norm2(trace.g_seq.front());
        const double last = norm2(trace.g_seq.back());
        trace.diverged = state.diverged || last > first;
    }
    return trace;
}

struct RateReport {
    double c_start = 0.0;  // n ||u^n - ref||^2 at the window start
    double c_max = 0.0;    // sup over the window
    double ratio = 0.0;    // c_max / c_start
    bool bounded = false;  // c_max <= 3 c_start
    bool finite = true;
};

// Checks the 1/n error decay: C_n = n ||u^n - ref||^2 over a window
// [n_lo, n_hi]; points[i] is the iterate after iteration i + 1.
inline RateReport rate_check(const std::vector<Vec>& points, const Vec& ref, long n_lo,
                             long n_hi) {
    const long n_max = static_cast<long>(points.size());
    n_hi = std::min(n_hi, n_max);
    if (n_lo < 1 || n_lo > n_hi) throw std::invalid_argument("rate_check: empty window");
    RateReport rep;
    for (long n = n_lo; n <= n_hi; ++n) {
        const Vec& u = points[n - 1];
        if (u.size() != ref.size()) throw std::invalid_argument("rate_check: size mismatch");
        double e2 = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double d = u[i] - ref[i];
            e2 += d * d;
        }
        const double cn = static_cast<double>(n) * e2;
        if (!std::isfinite(cn)) rep.finite = false;
        if (n == n_lo) rep.c_start = cn;
        rep.c_max = std::max(rep.c_max, cn);
    }
    rep.ratio = rep.c_start > 0.0 ? rep.c_max / rep.c_start : (rep.c_max > 0.0 ? kInf : 1.0);
    rep.bounded = rep.finite && rep.c_max <= 3.0 * rep.c_start + 1e-30;
    return rep;
}

}  // namespace pdhg
