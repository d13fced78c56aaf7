#pragma once

// Proximal-operator catalogue.
//
// A SemiconvexProx bundles an evaluable energy phi, its proximal map
//   prox(z, tau) = argmin_x  1/(2 tau) ||x - z||^2 + phi(x),
// and a declared semiconvexity modulus omega (phi + omega/2 ||.||^2 is
// convex).  The prox is well defined whenever 1/tau > omega.  Where the
// energy is differentiable a branch-formula gradient is available; entries
// closer than kink_delta to a nonsmooth point are masked out.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdhg/grid.hpp"

namespace pdhg {

class SemiconvexProx {
  public:
    virtual ~SemiconvexProx() = default;

    virtual std::size_t dim() const = 0;
    virtual double modulus() const = 0;
    virtual double energy(std::span<const double> x) const = 0;
    virtual void apply(std::span<const double> z, double tau, std::span<double> out) const = 0;

    virtual bool has_gradient() const { return false; }
    virtual void gradient(std::span<const double> /*x*/, double /*kink_delta*/,
                          std::span<double> /*grad*/, std::vector<std::uint8_t>& /*valid*/) const {
        throw std::logic_error("SemiconvexProx: gradient not available for this term");
    }

  protected:
    void check_tau(double tau) const {
        if (!(tau > 0.0) || !(1.0 / tau > modulus()))
            throw std::invalid_argument("prox: requires 1/tau > modulus");
    }
    static void check_dim(std::span<const double> v, std::size_t n) {
        if (v.size() != n) throw std::invalid_argument("prox: size mismatch");
    }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline Vec apply_prox(const SemiconvexProx& p, const Vec& z, double tau) {
    Vec out(z.size());
    p.apply(std::span<const double>(z), tau, std::span<double>(out));
    return out;
}

// phi = 0; the prox is the identity.
class ZeroProx final : public SemiconvexProx {
  public:
    explicit ZeroProx(std::size_t n) : n_(n) {}
    std::size_t dim() const override { return n_; }
    double modulus() const override { return 0.0; }
    double energy(std::span<const double>) const override { return 0.0; }
    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, n_);
        std::copy(z.begin(), z.end(), out.begin());
    }
    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> x, double, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(x, n_);
        std::fill(grad.begin(), grad.end(), 0.0);
        valid.assign(n_, 1);
    }

  private:
    std::size_t n_;
};

// phi(u) = c/2 ||u - f||^2, optionally plus the [0,1] box indicator.
// Pointwise prox: proj_[0,1]((v + tau c f) / (1 + tau c)).
class L2BoxProx final : public SemiconvexProx {
  public:
    L2BoxProx(double c, Vec data, bool box)
        : c_(c), f_(std::move(data)), box_(box) {
        if (c < 0.0) throw std::invalid_argument("L2BoxProx: c must be >= 0");
    }

    std::size_t dim() const override { return f_.size(); }
    double modulus() const override { return 0.0; }
    double strong_convexity() const { return c_; }

    double energy(std::span<const double> u) const override {
        check_dim(u, f_.size());
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (box_ && (u[i] < -kBoxSlack || u[i] > 1.0 + kBoxSlack)) return kInf;
            const double d = u[i] - f_[i];
            s += d * d;
        }
        return 0.5 * c_ * s;
    }

    void apply(std::span<const double> v, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(v, f_.size());
        const double denom = 1.0 + tau * c_;
        for (std::size_t i = 0; i < v.size(); ++i) {
            double x = (v[i] + tau * c_ * f_[i]) / denom;
            if (box_) x = std::clamp(x, 0.0, 1.0);
            out[i] = x;
        }
    }

  private:
    static constexpr double kBoxSlack = 1e-12;
    double c_;
    Vec f_;
    bool box_;
};

// Inpainting indicator: u pinned to f wherever known is true, free elsewhere.
class InpaintProx final : public SemiconvexProx {
  public:
    InpaintProx(Vec data, std::vector<std::uint8_t> known)
        : f_(std::move(data)), known_(std::move(known)) {
        if (f_.size() != known_.size())
            throw std::invalid_argument("InpaintProx: mask shape mismatch");
    }

    std::size_t dim() const override { return f_.size(); }
    double modulus() const override { return 0.0; }

    double energy(std::span<const double> u) const override {
        check_dim(u, f_.size());
        for (std::size_t i = 0; i < u.size(); ++i)
            if (known_[i] && u[i] != f_[i]) return kInf;
        return 0.0;
    }

    void apply(std::span<const double> v, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(v, f_.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = known_[i] ? f_[i] : v[i];
    }

  private:
    Vec f_;
    std::vector<std::uint8_t> known_;
};

// phi(u) = c/2 ||u||^2.
class QuadraticProx final : public SemiconvexProx {
  public:
    QuadraticProx(double c, std::size_t n) : c_(c), n_(n) {
        if (c < 0.0) throw std::invalid_argument("QuadraticProx: c must be >= 0");
    }
    std::size_t dim() const override { return n_; }
    double modulus() const override { return 0.0; }
    double strong_convexity() const { return c_; }
    double energy(std::span<const double> u) const override {
        check_dim(u, n_);
        const double n = norm2(u);
        return 0.5 * c_ * n * n;
    }
    void apply(std::span<const double> v, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(v, n_);
        const double s = 1.0 / (1.0 + tau * c_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = s * v[i];
    }
    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> u, double, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(u, n_);
        for (std::size_t i = 0; i < n_; ++i) grad[i] = c_ * u[i];
        valid.assign(n_, 1);
    }

  private:
    double c_;
    std::size_t n_;
};

// phi(g) = -omega/2 ||g||^2, the canonical omega-semiconvex term.
class ConcaveQuadraticProx final : public SemiconvexProx {
  public:
    ConcaveQuadraticProx(double omega, std::size_t n) : omega_(omega), n_(n) {
        if (omega < 0.0) throw std::invalid_argument("ConcaveQuadraticProx: omega must be >= 0");
    }
    std::size_t dim() const override { return n_; }
    double modulus() const override { return omega_; }
    double energy(std::span<const double> g) const override {
        check_dim(g, n_);
        const double n = norm2(g);
        return -0.5 * omega_ * n * n;
    }
    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, n_);
        const double s = 1.0 / (1.0 - tau * omega_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = s * z[i];
    }
    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> g, double, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(g, n_);
        for (std::size_t i = 0; i < n_; ++i) grad[i] = -omega_ * g[i];
        valid.assign(n_, 1);
    }

  private:
    double omega_;
    std::size_t n_;
};

// phi(g) = sum over pixel blocks b of ||b||_2 - omega/2 ||b||_2^2 on d x k
// blocks of a gradient field.  With sigma = 1/tau the per-block minimizer is
//   max(0, (sigma rho - 1) / (sigma - omega)) * b / rho,   rho = ||b||_2,
// scale-adjusted shrinkage; omega = 0 recovers plain soft shrinkage.
class ShrinkSharpenProx final : public SemiconvexProx {
  public:
    // blocks of block_len consecutive planes, plane stride = plane_size
    ShrinkSharpenProx(ImageShape shape, double omega)
        : omega_(omega), plane_size_(shape.pixel_count()),
          planes_(2 * static_cast<std::size_t>(shape.channels)) {
        if (omega < 0.0) throw std::invalid_argument("ShrinkSharpenProx: omega must be >= 0");
    }

    std::size_t dim() const override { return plane_size_ * planes_; }
    double modulus() const override { return omega_; }

    double energy(std::span<const double> g) const override {
        check_dim(g, dim());
        double s = 0.0;
        for (std::size_t i = 0; i < plane_size_; ++i) {
            const double rho = block_norm(g, i);
            s += rho - 0.5 * omega_ * rho * rho;
        }
        return s;
    }

    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, dim());
        for (std::size_t i = 0; i < plane_size_; ++i) {
            const double rho = block_norm(z, i);
            double scale = 0.0;
            if (rho > tau)  // dead zone: rho <= 1/sigma maps to the zero block
                scale = (rho - tau) / ((1.0 - tau * omega_) * rho);
            for (std::size_t p = 0; p < planes_; ++p)
                out[p * plane_size_ + i] = scale * z[p * plane_size_ + i];
        }
    }

    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> g, double kink_delta, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(g, dim());
        valid.assign(dim(), 1);
        for (std::size_t i = 0; i < plane_size_; ++i) {
            const double rho = block_norm(g, i);
            if (rho <= kink_delta) {  // ||.||_2 is nonsmooth at 0
                for (std::size_t p = 0; p < planes_; ++p) {
                    grad[p * plane_size_ + i] = 0.0;
                    valid[p * plane_size_ + i] = 0;
                }
                continue;
            }
            for (std::size_t p = 0; p < planes_; ++p) {
                const double v = g[p * plane_size_ + i];
                grad[p * plane_size_ + i] = v / rho - omega_ * v;
            }
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

    double omega_;
    std::size_t plane_size_;
    std::size_t planes_;
};

// phi(g) = w |(g - r)^2 - e| componentwise, the sparse-square penalty.  The
// inner piece has second derivative -2w, hence modulus 2w.  Candidates are
// the stationary points of the two smooth pieces plus the kinks r +- sqrt(e);
// smallest argument wins ties.
class SparseSquareProx final : public SemiconvexProx {
  public:
    SparseSquareProx(double weight, double r, double e, std::size_t n)
        : w_(weight), r_(r), e_(e), n_(n) {
        if (!(e > 0.0)) throw std::invalid_argument("SparseSquareProx: e must be > 0");
        if (w_ < 0.0) throw std::invalid_argument("SparseSquareProx: weight must be >= 0");
    }

    std::size_t dim() const override { return n_; }
    double modulus() const override { return 2.0 * w_; }

    static double scalar_energy(double g, double w, double r, double e) {
        const double d = g - r;
        return w * std::fabs(d * d - e);
    }

    // global minimizer of 1/(2 tau) (g - z)^2 + w |(g - r)^2 - e|
    static double scalar_prox(double z, double tau, double w, double r, double e) {
        const double root = std::sqrt(e);
        double cands[4];
        int nc = 0;
        // outer piece  (g - z)/tau + 2 w (g - r) = 0, valid where (g-r)^2 >= e
        {
            const double g = (z + 2.0 * w * tau * r) / (1.0 + 2.0 * w * tau);
            if ((g - r) * (g - r) >= e) cands[nc++] = g;
        }
        // inner piece  (g - z)/tau - 2 w (g - r) = 0, valid where (g-r)^2 <= e
        {
            const double denom = 1.0 - 2.0 * w * tau;  // > 0 since 1/tau > 2w
            const double g = (z - 2.0 * w * tau * r) / denom;
            if ((g - r) * (g - r) <= e) cands[nc++] = g;
        }
        cands[nc++] = r - root;
        cands[nc++] = r + root;
        std::sort(cands, cands + nc);
        double best = cands[0], best_obj = kInf;
        for (int i = 0; i < nc; ++i) {
            const double d = cands[i] - z;
            const double obj = 0.5 * d * d / tau + scalar_energy(cands[i], w, r, e);
            if (obj < best_obj) {
                best_obj = obj;
                best = cands[i];
            }
        }
        return best;
    }

    double energy(std::span<const double> g) const override {
        check_dim(g, n_);
        double s = 0.0;
        for (double v : g) s += scalar_energy(v, w_, r_, e_);
        return s;
    }

    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = scalar_prox(z[i], tau, w_, r_, e_);
    }

    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> g, double kink_delta, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(g, n_);
        valid.assign(n_, 1);
        const double root = std::sqrt(e_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double d = g[i] - r_;
            if (std::fabs(std::fabs(d) - root) <= kink_delta) {
                grad[i] = 0.0;
                valid[i] = 0;
                continue;
            }
            grad[i] = 2.0 * w_ * d * ((d * d > e_) ? 1.0 : -1.0);
        }
    }

  private:
    double w_, r_, e_;
    std::size_t n_;
};

// phi(u) = sum_x -lambda (2 u(x) - 1)^2 + [0,1] box indicator; the concave
// double well that drives dithering.  omega = 8 lambda; the prox is
//   proj_[0,1]((z - 4 lambda tau) / (1 - 8 lambda tau)),
// requiring 8 lambda tau < 1.
class BinaryConcaveProx final : public SemiconvexProx {
  public:
    BinaryConcaveProx(double lambda, std::size_t n) : lambda_(lambda), n_(n) {
        if (!(lambda > 0.0)) throw std::invalid_argument("BinaryConcaveProx: lambda must be > 0");
    }

    std::size_t dim() const override { return n_; }
    double modulus() const override { return 8.0 * lambda_; }

    double energy(std::span<const double> u) const override {
        check_dim(u, n_);
        double s = 0.0;
        for (double v : u) {
            if (v < -kBoxSlack || v > 1.0 + kBoxSlack) return kInf;
            const double t = 2.0 * v - 1.0;
            s -= lambda_ * t * t;
        }
        return s;
    }

    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);  // 1/tau > 8 lambda
        check_dim(z, n_);
        const double denom = 1.0 - 8.0 * lambda_ * tau;
        const double shift = 4.0 * lambda_ * tau;
        for (std::size_t i = 0; i < n_; ++i)
            out[i] = std::clamp((z[i] - shift) / denom, 0.0, 1.0);
    }

    bool has_gradient() const override { return true; }
    void gradient(std::span<const double> u, double kink_delta, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(u, n_);
        valid.assign(n_, 1);
        for (std::size_t i = 0; i < n_; ++i) {
            if (u[i] <= kink_delta || u[i] >= 1.0 - kink_delta) {  // box boundary
                grad[i] = 0.0;
                valid[i] = 0;
                continue;
            }
            grad[i] = -8.0 * lambda_ * u[i] + 4.0 * lambda_;
        }
    }

  private:
    static constexpr double kBoxSlack = 1e-12;
    double lambda_;
    std::size_t n_;
};

// Blockwise composition over the segments of a stacked operator's range.
class BlockProx final : public SemiconvexProx {
  public:
    explicit BlockProx(std::vector<std::shared_ptr<const SemiconvexProx>> parts)
        : parts_(std::move(parts)) {
        if (parts_.empty()) throw std::invalid_argument("BlockProx: empty part list");
        for (const auto& p : parts_) {
            offsets_.push_back(dim_);
            dim_ += p->dim();
            modulus_ = std::max(modulus_, p->modulus());
        }
    }

    std::size_t dim() const override { return dim_; }
    double modulus() const override { return modulus_; }

    double energy(std::span<const double> x) const override {
        check_dim(x, dim_);
        double s = 0.0;
        for (std::size_t i = 0; i < parts_.size(); ++i)
            s += parts_[i]->energy(x.subspan(offsets_[i], parts_[i]->dim()));
        return s;
    }

    void apply(std::span<const double> z, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(z, dim_);
        for (std::size_t i = 0; i < parts_.size(); ++i)
            parts_[i]->apply(z.subspan(offsets_[i], parts_[i]->dim()), tau,
                             out.subspan(offsets_[i], parts_[i]->dim()));
    }

    bool has_gradient() const override {
        for (const auto& p : parts_)
            if (!p->has_gradient()) return false;
        return true;
    }
    void gradient(std::span<const double> x, double kink_delta, std::span<double> grad,
                  std::vector<std::uint8_t>& valid) const override {
        check_dim(x, dim_);
        valid.assign(dim_, 1);
        std::vector<std::uint8_t> part_valid;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            const auto n = parts_[i]->dim();
            parts_[i]->gradient(x.subspan(offsets_[i], n), kink_delta,
                                grad.subspan(offsets_[i], n), part_valid);
            std::copy(part_valid.begin(), part_valid.end(), valid.begin() + offsets_[i]);
        }
    }

  private:
    std::vector<std::shared_ptr<const SemiconvexProx>> parts_;
    std::vector<std::size_t> offsets_;
    std::size_t dim_ = 0;
    double modulus_ = 0.0;
};

// Brute-force scalar prox: grid search with step 1e-4 (hi - lo) followed by
// local ternary refinement to an interval width of 1e-8.  Independent of
// every closed form above; the reference the catalogue is tested against.
inline double scalar_prox_oracle(const std::function<double(double)>& phi, double z, double tau,
                                 double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("scalar_prox_oracle: invalid interval");
    const auto obj = [&](double t) { return 0.5 * (t - z) * (t - z) / tau + phi(t); };

    const int n = 10000;
    const double step = (hi - lo) / n;
    double best_t = lo, best_obj = obj(lo);
    for (int i = 1; i <= n; ++i) {
        const double t = lo + step * i;
        const double o = obj(t);
        if (o < best_obj) {  // ascending scan: smallest argument wins ties
            best_obj = o;
            best_t = t;
        }
    }
    double a = std::max(lo, best_t - step);
    double b = std::min(hi, best_t + step);
    while (b - a > 1e-8) {
        const double m1 = a + (b - a) / 3.0;
        const double m2 = b - (b - a) / 3.0;
        const double o1 = obj(m1), o2 = obj(m2);
        if (o1 < best_obj) best_obj = o1, best_t = m1;
        if (o2 < best_obj) best_obj = o2, best_t = m2;
        if (o1 <= o2)
            b = m2;
        else
            a = m1;
    }
    const double mid = 0.5 * (a + b);
    if (obj(mid) < best_obj) best_t = mid;
    return best_t;
}

}  // namespace pdhg
