#pragma once

// Thin wrapper around FFTW's 2-D real transforms.
//
// Plans are created with FFTW_ESTIMATE | FFTW_UNALIGNED so the new-array
// execute functions accept ordinary std::vector storage.  Plan creation is
// not thread-safe (construct on one thread); execution through a const
// instance is re-entrant because every call uses its own buffers.

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace pdhg {

using CVec = std::vector<std::complex<double>>;

class Dft2D {
  public:
    Dft2D(int width, int height) : w_(width), h_(height) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("Dft2D: dimensions must be positive");
        std::vector<double> real(static_cast<std::size_t>(w_) * h_);
        CVec cplx(spectrum_size());
        fwd_ = fftw_plan_dft_r2c_2d(h_, w_, real.data(),
                                    reinterpret_cast<fftw_complex*>(cplx.data()),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        inv_ = fftw_plan_dft_c2r_2d(h_, w_, reinterpret_cast<fftw_complex*>(cplx.data()),
                                    real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!fwd_ || !inv_) throw std::runtime_error("Dft2D: plan creation failed");
    }

    ~Dft2D() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
    }
    Dft2D(const Dft2D&) = delete;
    Dft2D& operator=(const Dft2D&) = delete;

    std::size_t spectrum_size() const {
        return static_cast<std::size_t>(h_) * (static_cast<std::size_t>(w_) / 2 + 1);
    }

    CVec forward(const std::vector<double>& real) const {
        if (real.size() != static_cast<std::size_t>(w_) * h_)
            throw std::invalid_argument("Dft2D::forward: size mismatch");
        std::vector<double> in(real);  // r2c transforms may clobber input
        CVec out(spectrum_size());
        fftw_execute_dft_r2c(fwd_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
        return out;
    }

    // inverse transform scaled by 1/(w*h), so inverse(forward(x)) == x
    std::vector<double> inverse(const CVec& spectrum) const {
        if (spectrum.size() != spectrum_size())
            throw std::invalid_argument("Dft2D::inverse: size mismatch");
        CVec in(spectrum);  // c2r transforms clobber input
        std::vector<double> out(static_cast<std::size_t>(w_) * h_);
        fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
        const double scale = 1.0 / (static_cast<double>(w_) * h_);
        for (double& v : out) v *= scale;
        return out;
    }

    int width() const { return w_; }
    int height() const { return h_; }

  private:
    int w_, h_;
    fftw_plan fwd_, inv_;
};

}  // namespace pdhg
