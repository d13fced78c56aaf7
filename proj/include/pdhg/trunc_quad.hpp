#pragma once

// Smoothed truncated quadratic edge penalty.
//
// The raw penalty min(lambda, alpha t^2) is not omega-semiconvex, so the
// middle of the graph is replaced by a C^1 cubic spline between
// s1 = sqrt(lambda/alpha) - eps and s2 = sqrt(lambda/alpha) + eps with
// eps = eps0 sqrt(lambda/alpha).  The result is omega-semiconvex with
// omega = alpha (2 + eps0) / (2 eps0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdhg/grid.hpp"
#include "pdhg/prox.hpp"

namespace pdhg {

struct TruncQuadParams {
    double alpha;   // quadratic slope weight
    double lambda;  // truncation level
    double eps0;    // relative smoothing width, 0 < eps0 < 1

    double eps, s1, s2;  // spline window
    double A, B, C;      // spline coefficients, pi(t) = A (t-s2)^3 + B (t-s2)^2 + C

    TruncQuadParams(double alpha_, double lambda_, double eps0_)
        : alpha(alpha_), lambda(lambda_), eps0(eps0_) {
        if (!(alpha > 0.0) || !(lambda > 0.0) || !(eps0 > 0.0) || !(eps0 < 1.0))
            throw std::invalid_argument("TruncQuadParams: need alpha, lambda > 0 and 0 < eps0 < 1");
        const double root = std::sqrt(lambda / alpha);
        eps = eps0 * root;
        s1 = root - eps;  // > 0 because eps0 < 1
        s2 = root + eps;
        A = -alpha / (4.0 * eps);
        B = -alpha * (2.0 * root + eps) / (4.0 * eps);
        C = lambda;
    }
};

inline double semiconvexity_modulus(const TruncQuadParams& p) {
    return p.alpha * (2.0 + p.eps0) / (2.0 * p.eps0);
}

inline double rms_eval(double t, const TruncQuadParams& p) {
    if (t < 0.0) throw std::invalid_argument("rms_eval: t must be >= 0");
    if (t < p.s1) return p.alpha * t * t;
    if (t <= p.s2) {
        const double v = t - p.s2;
        return p.A * v * v * v + p.B * v * v + p.C;
    }
    return p.lambda;
}

// branch-formula derivative; continuous at both knots
inline double rms_deriv(double t, const TruncQuadParams& p) {
    if (t < 0.0) throw std::invalid_argument("rms_deriv: t must be >= 0");
    if (t < p.s1) return 2.0 * p.alpha * t;
    if (t <= p.s2) {
        const double v = t - p.s2;
        return 3.0 * p.A * v * v + 2.0 * p.B * v;
    }
    return 0.0;
}

// Global minimizer over t >= 0 of 1/(2 tau) (t - tt)^2 + rms_eval(t).
// Enumerates the stationary candidate of each branch (clipped to its branch)
// plus the knots; smallest argument wins ties.  Requires 1/tau > omega, so
// the objective is strongly convex and the winner is the unique minimizer.
inline double scalar_prox_rms(double tt, double tau, const TruncQuadParams& p) {
    if (!(tau > 0.0) || !(1.0 / tau > semiconvexity_modulus(p)))
        throw std::invalid_argument("scalar_prox_rms: requires 1/tau > omega");

    double cands[6];
    int nc = 0;
    // quadratic branch
    cands[nc++] = std::clamp(tt / (1.0 + 2.0 * p.alpha * tau), 0.0, p.s1);
    // spline branch: (t - tt)/tau + pi'(t) = 0 is a quadratic in v = t - s2
    {
        const double a = 3.0 * p.A;
        const double b = 2.0 * p.B + 1.0 / tau;
        const double c = (p.s2 - tt) / tau;
        double disc = b * b - 4.0 * a * c;
        if (disc < 0.0 && disc >= -1e-12 * std::max(1.0, b * b)) disc = 0.0;  // tangency guard
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
            if (q != 0.0) {
                cands[nc++] = std::clamp(q / a + p.s2, p.s1, p.s2);
                cands[nc++] = std::clamp(c / q + p.s2, p.s1, p.s2);
            } else {
                cands[nc++] = std::clamp(p.s2, p.s1, p.s2);
            }
        }
    }
    // constant branch and the knots
    cands[nc++] = std::max(tt, p.s2);
    cands[nc++] = p.s1;
    cands[nc++] = p.s2;

    std::sort(cands, cands + nc);
    double best = cands[0], best_obj = kInf;
    for (int i = 0; i < nc; ++i) {
        const double t = cands[i];
        const double d = t - tt;
        const double obj = 0.5 * d * d / tau + rms_eval(t, p);
        if (obj < best_obj) {
            best_obj = obj;
            best = t;
        }
    }
    return best;
}

// phi(g) = sum over pixel blocks b of rms_eval(||b||_2).  The radial
// decomposition reduces each d x k block to the scalar prox along b's ray
// (0/0 = 0).  C^1 everywhere, so the gradient carries no kink mask.
class TruncQuadProx final : public SemiconvexProx {
  public:
    TruncQuadProx(ImageShape shape, TruncQuadParams params)
        : p_(params), plane_size_(shape.pixel_count()),
          planes_(2 * static_cast<std::size_t>(shape.channels)) {}

    std::size_t dim() const override { return plane_size_ * planes_; }
    double modulus() const override { return semiconvexity_modulus(p_); }
    const TruncQuadParams& params() const { return p_; }

    double energy(std::span<const double> g) const override {
        check_dim(g, dim());
        double s = 0.0;
        for (std::size_t i = 0; i < plane_size_; ++i) s += rms_eval(block_norm(g, i), p_);
        return s;
    }

    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, dim());
        for (std::size_t i = 0; i < plane_size_; ++i) {
            const double rho = block_norm(z, i);
            double scale = 0.0;
            if (rho > 0.0) scale = scalar_prox_rms(rho, tau, p_) / rho;
            for (std::size_t p = 0; p < planes_; ++p)
                out[p * plane_size_ + i] = scale * z[p * plane_size_ + i];
        }
    }

    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> g, double /*kink_delta*/, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(g, dim());
        valid.assign(dim(), 1);
        for (std::size_t i = 0; i < plane_size_; ++i) {
            const double rho = block_norm(g, i);
            // differentiable at 0 as well since rms_deriv(0) = 0
            const double scale = (rho > 0.0) ? rms_deriv(rho, p_) / rho : 0.0;
            for (std::size_t p = 0; p < planes_; ++p)
                grad[p * plane_size_ + i] = scale * g[p * plane_size_ + i];
        }
    }

  private:
    double block_norm(std::span<const double> g, std::size_t pixel) const {
        double s = 0.0;
        for (std::size_t p = 0; p < planes_; ++p) {
            const double v = g[p * plane_size_ + pixel];
            s += v * v;
        }
        return std::sqrt(s);
    }

    TruncQuadParams p_;
    std::size_t plane_size_;
    std::size_t planes_;
};

}  // namespace pdhg
