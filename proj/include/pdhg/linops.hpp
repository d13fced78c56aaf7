#pragma once

// Linear operators on flat coefficient vectors.
//
// Every operator carries a certified upper bound on its spectral norm;
// op_norm_estimate gives a seeded lower bound via power iteration, so
// tests can sandwich the truth between the two.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdhg/fft.hpp"
#include "pdhg/grid.hpp"
#include "pdhg/rng.hpp"

namespace pdhg {

class LinearMap {
  public:
    virtual ~LinearMap() = default;

    virtual std::size_t domain_dim() const = 0;
    virtual std::size_t range_dim() const = 0;
    // certified upper bound on the spectral norm
    virtual double norm_bound() const = 0;

    void forward(std::span<const double> x, std::span<double> y) const { do_forward(x, y); }
    void adjoint(std::span<const double> y, std::span<double> x) const { do_adjoint(y, x); }
    Vec forward(const Vec& x) const {
        Vec y(range_dim());
        do_forward(std::span<const double>(x), std::span<double>(y));
        return y;
    }
    Vec adjoint(const Vec& y) const {
        Vec x(domain_dim());
        do_adjoint(std::span<const double>(y), std::span<double>(x));
        return x;
    }

  protected:
    virtual void do_forward(std::span<const double> x, std::span<double> y) const = 0;
    virtual void do_adjoint(std::span<const double> y, std::span<double> x) const = 0;

    static void check_size(std::span<const double> v, std::size_t n, const char* what) {
        if (v.size() != n) throw std::invalid_argument(std::string(what) + ": size mismatch");
    }
};

class IdentityOp final : public LinearMap {
  public:
    explicit IdentityOp(std::size_t n) : n_(n) {}
    std::size_t domain_dim() const override { return n_; }
    std::size_t range_dim() const override { return n_; }
    void do_forward(std::span<const double> x, std::span<double> y) const override {
        check_size(x, n_, "IdentityOp");
        std::copy(x.begin(), x.end(), y.begin());
    }
    void do_adjoint(std::span<const double> y, std::span<double> x) const override {
        check_size(y, n_, "IdentityOp");
        std::copy(y.begin(), y.end(), x.begin());
    }
    double norm_bound() const override { return 1.0; }

  private:
    std::size_t n_;
};

// Forward-difference gradient with replicate (Neumann) boundary: the
// difference is zero at the last row/column.  ||grad|| <= sqrt(4*d), d = 2.
class GradOp final : public LinearMap {
  public:
    explicit GradOp(ImageShape shape) : shape_(shape) {
        if (shape.width <= 0 || shape.height <= 0 || shape.channels <= 0)
            throw std::invalid_argument("GradOp: bad shape");
    }

    std::size_t domain_dim() const override { return shape_.value_count(); }
    std::size_t range_dim() const override { return shape_.value_count() * 2; }

    void do_forward(std::span<const double> u, std::span<double> g) const override {
        check_size(u, domain_dim(), "GradOp::forward");
        check_size(g, range_dim(), "GradOp::forward");
        const int w = shape_.width, h = shape_.height;
        const std::size_t ps = shape_.pixel_count();
        for (int c = 0; c < shape_.channels; ++c) {
            const double* uc = u.data() + static_cast<std::size_t>(c) * ps;
            double* gx = g.data() + (static_cast<std::size_t>(c) * 2 + 0) * ps;
            double* gy = g.data() + (static_cast<std::size_t>(c) * 2 + 1) * ps;
            for (int y = 0; y < h; ++y) {
                const std::size_t row = static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = row + x;
                    gx[i] = (x < w - 1) ? uc[i + 1] - uc[i] : 0.0;
                    gy[i] = (y < h - 1) ? uc[i + w] - uc[i] : 0.0;
                }
            }
        }
    }

    // exact transpose of the forward stencil (negative divergence)
    void do_adjoint(std::span<const double> g, std::span<double> u) const override {
        check_size(g, range_dim(), "GradOp::adjoint");
        check_size(u, domain_dim(), "GradOp::adjoint");
        const int w = shape_.width, h = shape_.height;
        const std::size_t ps = shape_.pixel_count();
        for (int c = 0; c < shape_.channels; ++c) {
            const double* gx = g.data() + (static_cast<std::size_t>(c) * 2 + 0) * ps;
            const double* gy = g.data() + (static_cast<std::size_t>(c) * 2 + 1) * ps;
            double* uc = u.data() + static_cast<std::size_t>(c) * ps;
            for (int y = 0; y < h; ++y) {
                const std::size_t row = static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = row + x;
                    double v = 0.0;
                    if (x > 0) v += gx[i - 1];
                    if (x < w - 1) v -= gx[i];
                    if (y > 0) v += gy[i - w];
                    if (y < h - 1) v -= gy[i];
                    uc[i] = v;
                }
            }
        }
    }

    double norm_bound() const override { return 2.0 * std::numbers::sqrt2; }  // sqrt(4*d), d = 2

    const ImageShape& shape() const { return shape_; }

  private:
    ImageShape shape_;
};

// Gradient of a single channel of a multichannel image; the adjoint embeds
// back into that channel.  Used as a stack component.
class ChannelGradOp final : public LinearMap {
  public:
    ChannelGradOp(ImageShape shape, int channel)
        : shape_(shape), channel_(channel), mono_({shape.width, shape.height, 1}) {
        if (channel < 0 || channel >= shape.channels)
            throw std::invalid_argument("ChannelGradOp: channel out of range");
    }

    std::size_t domain_dim() const override { return shape_.value_count(); }
    std::size_t range_dim() const override { return mono_.range_dim(); }

    void do_forward(std::span<const double> u, std::span<double> g) const override {
        check_size(u, domain_dim(), "ChannelGradOp::forward");
        mono_.forward(u.subspan(static_cast<std::size_t>(channel_) * shape_.pixel_count(),
                                shape_.pixel_count()),
                      g);
    }
    void do_adjoint(std::span<const double> g, std::span<double> u) const override {
        check_size(u, domain_dim(), "ChannelGradOp::adjoint");
        std::fill(u.begin(), u.end(), 0.0);
        mono_.adjoint(g, u.subspan(static_cast<std::size_t>(channel_) * shape_.pixel_count(),
                                   shape_.pixel_count()));
    }
    double norm_bound() const override { return mono_.norm_bound(); }

  private:
    ImageShape shape_;
    int channel_;
    GradOp mono_;
};

// Per-pixel mean of exactly three channels; adjoint distributes y/3.
class ChannelMeanOp final : public LinearMap {
  public:
    explicit ChannelMeanOp(ImageShape shape) : shape_(shape) {
        if (shape.channels != 3)
            throw std::invalid_argument("ChannelMeanOp: requires exactly 3 channels");
    }

    std::size_t domain_dim() const override { return shape_.value_count(); }
    std::size_t range_dim() const override { return shape_.pixel_count(); }

    void do_forward(std::span<const double> u, std::span<double> y) const override {
        check_size(u, domain_dim(), "ChannelMeanOp::forward");
        check_size(y, range_dim(), "ChannelMeanOp::forward");
        const std::size_t ps = shape_.pixel_count();
        for (std::size_t i = 0; i < ps; ++i)
            y[i] = (u[i] + u[ps + i] + u[2 * ps + i]) / 3.0;
    }
    void do_adjoint(std::span<const double> y, std::span<double> u) const override {
        check_size(y, range_dim(), "ChannelMeanOp::adjoint");
        check_size(u, domain_dim(), "ChannelMeanOp::adjoint");
        const std::size_t ps = shape_.pixel_count();
        for (std::size_t i = 0; i < ps; ++i) {
            const double v = y[i] / 3.0;
            u[i] = v;
            u[ps + i] = v;
            u[2 * ps + i] = v;
        }
    }
    double norm_bound() const override { return 1.0 / std::sqrt(3.0); }

  private:
    ImageShape shape_;
};

inline GradientField grad_forward(const ImageGrid& u) {
    GradOp op(u.shape);
    GradientField g(u.shape);
    op.forward(std::span<const double>(u.values), std::span<double>(g.values));
    return g;
}

inline ImageGrid grad_adjoint(const GradientField& g) {
    GradOp op(g.shape);
    ImageGrid u(g.shape);
    op.adjoint(std::span<const double>(g.values), std::span<double>(u.values));
    return u;
}

inline ImageGrid channel_mean(const ImageGrid& u) {
    ChannelMeanOp op(u.shape);
    ImageGrid out(u.shape.width, u.shape.height, 1);
    op.forward(std::span<const double>(u.values), std::span<double>(out.values));
    return out;
}

// Normalized, truncated Gaussian kernel; returns the kernel wrapped onto a
// periodic w x h grid with its center at (0, 0).  Sums to exactly one.
inline Vec gaussian_kernel_image(int width, int height, double std_dev) {
    if (std_dev <= 0.0) throw std::invalid_argument("gaussian_kernel_image: std must be > 0");
    const int r = static_cast<int>(std::ceil(4.0 * std_dev));
    std::vector<double> w1(2 * r + 1);
    for (int i = -r; i <= r; ++i)
        w1[i + r] = std::exp(-0.5 * (static_cast<double>(i) * i) / (std_dev * std_dev));
    Vec kernel(static_cast<std::size_t>(width) * height, 0.0);
    double total = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) total += w1[dy + r] * w1[dx + r];
    for (int dy = -r; dy <= r; ++dy) {
        const int y = ((dy % height) + height) % height;
        for (int dx = -r; dx <= r; ++dx) {
            const int x = ((dx % width) + width) % width;
            kernel[static_cast<std::size_t>(y) * width + x] += w1[dy + r] * w1[dx + r] / total;
        }
    }
    return kernel;
}

// Periodic convolution, channel by channel, realized in the frequency
// domain.  The adjoint multiplies by the conjugate spectrum, so the pair is
// an exact adjoint for any kernel; for the (even) Gaussian it is
// self-adjoint.  ||K|| = max |khat| = 1 for a normalized nonnegative kernel.
class ConvolveOp final : public LinearMap {
  public:
    ConvolveOp(ImageShape shape, Vec kernel)
        : shape_(shape), dft_(std::make_shared<Dft2D>(shape.width, shape.height)) {
        if (kernel.size() != shape_.pixel_count())
            throw std::invalid_argument("ConvolveOp: kernel size mismatch");
        khat_ = dft_->forward(kernel);
        double nb = 0.0;
        for (const auto& k : khat_) nb = std::max(nb, std::abs(k));
        norm_bound_ = nb;
    }

    static ConvolveOp gaussian(ImageShape shape, double std_dev) {
        return ConvolveOp(shape, gaussian_kernel_image(shape.width, shape.height, std_dev));
    }

    std::size_t domain_dim() const override { return shape_.value_count(); }
    std::size_t range_dim() const override { return shape_.value_count(); }

    void do_forward(std::span<const double> u, std::span<double> y) const override {
        apply_spectrum(u, y, /*conjugate=*/false);
    }
    void do_adjoint(std::span<const double> y, std::span<double> u) const override {
        apply_spectrum(y, u, /*conjugate=*/true);
    }
    double norm_bound() const override { return norm_bound_; }

    const CVec& kernel_spectrum() const { return khat_; }
    std::shared_ptr<const Dft2D> dft() const { return dft_; }

  private:
    void apply_spectrum(std::span<const double> in, std::span<double> out, bool conjugate) const {
        check_size(in, domain_dim(), "ConvolveOp");
        check_size(out, range_dim(), "ConvolveOp");
        const std::size_t ps = shape_.pixel_count();
        for (int c = 0; c < shape_.channels; ++c) {
            Vec plane(in.begin() + static_cast<std::size_t>(c) * ps,
                      in.begin() + static_cast<std::size_t>(c + 1) * ps);
            CVec spec = dft_->forward(plane);
            for (std::size_t i = 0; i < spec.size(); ++i)
                spec[i] *= conjugate ? std::conj(khat_[i]) : khat_[i];
            Vec res = dft_->inverse(spec);
            std::copy(res.begin(), res.end(), out.begin() + static_cast<std::size_t>(c) * ps);
        }
    }

    ImageShape shape_;
    std::shared_ptr<Dft2D> dft_;
    CVec khat_;
    double norm_bound_ = 1.0;
};

inline ImageGrid gaussian_convolve(const ImageGrid& u, double std_dev) {
    auto op = ConvolveOp::gaussian(u.shape, std_dev);
    ImageGrid out(u.shape);
    op.forward(std::span<const double>(u.values), std::span<double>(out.values));
    return out;
}

// Vertical concatenation of operators sharing one domain.  The adjoint sums
// the component adjoints; norm_bound is the root-sum-square of the
// component bounds.
class StackOp final : public LinearMap {
  public:
    explicit StackOp(std::vector<std::shared_ptr<const LinearMap>> ops) : ops_(std::move(ops)) {
        if (ops_.empty()) throw std::invalid_argument("StackOp: empty component list");
        domain_ = ops_.front()->domain_dim();
        double sq = 0.0;
        for (const auto& op : ops_) {
            if (op->domain_dim() != domain_)
                throw std::invalid_argument("StackOp: mismatched domains");
            offsets_.push_back(range_);
            range_ += op->range_dim();
            sq += op->norm_bound() * op->norm_bound();
        }
        norm_bound_ = std::sqrt(sq);
    }

    std::size_t domain_dim() const override { return domain_; }
    std::size_t range_dim() const override { return range_; }

    void do_forward(std::span<const double> x, std::span<double> y) const override {
        check_size(x, domain_, "StackOp::forward");
        check_size(y, range_, "StackOp::forward");
        for (std::size_t i = 0; i < ops_.size(); ++i)
            ops_[i]->forward(x, y.subspan(offsets_[i], ops_[i]->range_dim()));
    }
    void do_adjoint(std::span<const double> y, std::span<double> x) const override {
        check_size(y, range_, "StackOp::adjoint");
        check_size(x, domain_, "StackOp::adjoint");
        std::fill(x.begin(), x.end(), 0.0);
        Vec part(domain_);
        for (std::size_t i = 0; i < ops_.size(); ++i) {
            ops_[i]->adjoint(y.subspan(offsets_[i], ops_[i]->range_dim()), part);
            for (std::size_t j = 0; j < domain_; ++j) x[j] += part[j];
        }
    }
    double norm_bound() const override { return norm_bound_; }

    std::size_t component_count() const { return ops_.size(); }
    std::size_t component_offset(std::size_t i) const { return offsets_[i]; }
    const LinearMap& component(std::size_t i) const { return *ops_[i]; }

  private:
    std::vector<std::shared_ptr<const LinearMap>> ops_;
    std::vector<std::size_t> offsets_;
    std::size_t domain_ = 0, range_ = 0;
    double norm_bound_ = 0.0;
};

// Small dense matrix, row-major.  norm_bound is the Frobenius norm, a
// certified upper bound on the spectral norm.
class DenseMap final : public LinearMap {
  public:
    DenseMap(std::size_t rows, std::size_t cols, Vec entries)
        : rows_(rows), cols_(cols), a_(std::move(entries)) {
        if (a_.size() != rows_ * cols_) throw std::invalid_argument("DenseMap: entry count");
        double sq = 0.0;
        for (double v : a_) sq += v * v;
        norm_bound_ = std::sqrt(sq);
    }

    std::size_t domain_dim() const override { return cols_; }
    std::size_t range_dim() const override { return rows_; }

    void do_forward(std::span<const double> x, std::span<double> y) const override {
        check_size(x, cols_, "DenseMap::forward");
        for (std::size_t r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols_; ++c) s += a_[r * cols_ + c] * x[c];
            y[r] = s;
        }
    }
    void do_adjoint(std::span<const double> y, std::span<double> x) const override {
        check_size(y, rows_, "DenseMap::adjoint");
        for (std::size_t c = 0; c < cols_; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows_; ++r) s += a_[r * cols_ + c] * y[r];
            x[c] = s;
        }
    }
    double norm_bound() const override { return norm_bound_; }

  private:
    std::size_t rows_, cols_;
    Vec a_;
    double norm_bound_;
};

// Deterministic power iteration on K^T K.  The Rayleigh-type estimate
// ||K x|| / ||x|| never exceeds the true norm, so the result certifies
// norm_bound from below.
inline double op_norm_estimate(const LinearMap& op, int iterations, std::uint64_t seed) {
    if (iterations < 1) throw std::invalid_argument("op_norm_estimate: iterations must be >= 1");
    if (op.domain_dim() == 0)
        throw std::invalid_argument("op_norm_estimate: zero-dimensional domain");
    Rng rng(seed);
    Vec x(op.domain_dim());
    for (double& v : x) v = rng.normal();
    double nx = norm2(x);
    if (nx == 0.0) x[0] = 1.0, nx = 1.0;
    for (double& v : x) v /= nx;

    Vec y(op.range_dim()), xt(op.domain_dim());
    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        op.forward(std::span<const double>(x), std::span<double>(y));
        estimate = norm2(y);  // ||x|| == 1
        op.adjoint(std::span<const double>(y), std::span<double>(xt));
        const double nxt = norm2(xt);
        if (nxt == 0.0) return 0.0;  // x in the null space
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = xt[i] / nxt;
    }
    return estimate;
}

}  // namespace pdhg
