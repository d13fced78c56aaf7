#pragma once

// Quadratic deconvolution data term G(u) = ||k * u - f||^2 under periodic
// boundary, with its exact prox by a frequency-domain solve:
//   (1/tau + 2 |khat|^2) uhat = vhat/tau + 2 conj(khat) fhat.

#include <complex>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdhg/grid.hpp"
#include "pdhg/linops.hpp"
#include "pdhg/prox.hpp"

namespace pdhg {

class DeconvProx final : public SemiconvexProx {
  public:
    DeconvProx(std::shared_ptr<const ConvolveOp> conv, ImageShape shape, Vec data)
        : conv_(std::move(conv)), shape_(shape), f_(std::move(data)) {
        if (f_.size() != shape_.value_count())
            throw std::invalid_argument("DeconvProx: data size mismatch");
        if (conv_->domain_dim() != shape_.value_count())
            throw std::invalid_argument("DeconvProx: operator shape mismatch");
        const auto& dft = *conv_->dft();
        const std::size_t ps = shape_.pixel_count();
        for (int c = 0; c < shape_.channels; ++c) {
            Vec plane(f_.begin() + static_cast<std::size_t>(c) * ps,
                      f_.begin() + static_cast<std::size_t>(c + 1) * ps);
            fhat_.push_back(dft.forward(plane));
        }
    }

    std::size_t dim() const override { return shape_.value_count(); }
    double modulus() const override { return 0.0; }

    double energy(std::span<const double> u) const override {
        check_dim(u, dim());
        Vec ku(dim());
        conv_->forward(u, std::span<double>(ku));
        double s = 0.0;
        for (std::size_t i = 0; i < ku.size(); ++i) {
            const double d = ku[i] - f_[i];
            s += d * d;
        }
        return s;
    }

    void apply(std::span<const double> v, double tau, std::span<double> out) const override {
        check_tau(tau);
        check_dim(v, dim());
        const auto& dft = *conv_->dft();
        const auto& khat = conv_->kernel_spectrum();
        const std::size_t ps = shape_.pixel_count();
        for (int c = 0; c < shape_.channels; ++c) {
            Vec plane(v.begin() + static_cast<std::size_t>(c) * ps,
                      v.begin() + static_cast<std::size_t>(c + 1) * ps);
            CVec vhat = dft.forward(plane);
            for (std::size_t i = 0; i < vhat.size(); ++i) {
                const double k2 = std::norm(khat[i]);
                vhat[i] = (vhat[i] / tau + 2.0 * std::conj(khat[i]) * fhat_[c][i]) /
                          (1.0 / tau + 2.0 * k2);
            }
            Vec res = dft.inverse(vhat);
            std::copy(res.begin(), res.end(), out.begin() + static_cast<std::size_t>(c) * ps);
        }
    }

    // certified lower bound on the strong convexity of G
    double strong_convexity() const {
        double m = kInf;
        for (const auto& k : conv_->kernel_spectrum()) m = std::min(m, std::norm(k));
        return 2.0 * m;
    }

  private:
    std::shared_ptr<const ConvolveOp> conv_;
    ImageShape shape_;
    Vec f_;
    std::vector<CVec> fhat_;
};

}  // namespace pdhg
