#pragma once

// Model builders: each experiment assembles (K, F-prox, G-prox, omega, c)
// plus its natural default initialization.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdhg/deconv.hpp"
#include "pdhg/grid.hpp"
#include "pdhg/linops.hpp"
#include "pdhg/prox.hpp"
#include "pdhg/solver.hpp"
#include "pdhg/trunc_quad.hpp"

namespace pdhg {

// min_u  c/2 ||u - f||^2 + ||grad u||_{2,1} - omega/2 ||grad u||_{2,2}^2 + box,
// split with g = grad u.  omega = omega_frac * c / ||grad||^2 keeps the
// strong convexity dominant (c > omega ||K||^2), so the iteration stays in
// the convergence regime.
inline Model build_denoise_sharpen(const ImageGrid& f, double c, double omega_frac) {
    if (!(c > 0.0)) throw std::invalid_argument("build_denoise_sharpen: c must be > 0");
    if (!(omega_frac > 0.0) || !(omega_frac < 1.0))
        throw std::invalid_argument("build_denoise_sharpen: omega_frac must be in (0,1)");
    auto grad = std::make_shared<GradOp>(f.shape);
    const double norm2k = grad->norm_bound() * grad->norm_bound();
    const double omega = omega_frac * c / norm2k;

    Model m;
    m.name = "denoise-sharpen";
    m.op = grad;
    m.f_term = std::make_shared<ShrinkSharpenProx>(f.shape, omega);
    m.g_term = std::make_shared<L2BoxProx>(c, f.values, /*box=*/true);
    m.omega = omega;
    m.strong_convexity = c;
    m.domain_shape = f.shape;
    m.data_init = f.values;
    return m;
}

// min_u  c/2 ||u - f||^2 + ||grad u||_{2,1} + omega/2 ||(A u - r)^2 - e||_1 + box
// with A the channel mean, split through the stacked operator
// K = stack(grad, A).  The multichannel gradient keeps the d x k blocks of
// the (2,1)-norm coupled and certifies ||K||^2 <= 4d + 1/3, which is what
// allows omega to approach the full c/||K||^2 budget.  F is blockwise: TV
// shrinkage on the gradient segment, the sparse-square prox (modulus
// 2 * (omega/2) = omega) on the mean segment.
inline Model build_illumination(const ImageGrid& f, double c, double omega, double r, double e) {
    if (f.shape.channels != 3)
        throw std::invalid_argument("build_illumination: requires a 3-channel image");
    if (!(e > 0.0)) throw std::invalid_argument("build_illumination: e must be > 0");
    if (!(c > 0.0)) throw std::invalid_argument("build_illumination: c must be > 0");
    if (omega < 0.0) throw std::invalid_argument("build_illumination: omega must be >= 0");

    std::vector<std::shared_ptr<const LinearMap>> comps;
    comps.push_back(std::make_shared<GradOp>(f.shape));
    comps.push_back(std::make_shared<ChannelMeanOp>(f.shape));
    std::vector<std::shared_ptr<const SemiconvexProx>> parts;
    parts.push_back(std::make_shared<ShrinkSharpenProx>(f.shape, 0.0));
    parts.push_back(
        std::make_shared<SparseSquareProx>(0.5 * omega, r, e, f.shape.pixel_count()));

    Model m;
    m.name = "illum";
    m.op = std::make_shared<StackOp>(std::move(comps));
    m.f_term = std::make_shared<BlockProx>(std::move(parts));
    m.g_term = std::make_shared<L2BoxProx>(c, f.values, /*box=*/true);
    m.omega = m.f_term->modulus();
    m.strong_convexity = c;
    m.domain_shape = f.shape;
    m.data_init = f.values;
    return m;
}

// min_u  sum (u - f)^2 + sum rms(||grad u||): data weight c = 2 and no box,
// matching the plain least-squares form of the denoising energy.
inline Model build_ms_denoise(const ImageGrid& f, const TruncQuadParams& p) {
    auto grad = std::make_shared<GradOp>(f.shape);
    Model m;
    m.name = "ms-denoise";
    m.op = grad;
    m.f_term = std::make_shared<TruncQuadProx>(f.shape, p);
    m.g_term = std::make_shared<L2BoxProx>(2.0, f.values, /*box=*/false);
    m.omega = m.f_term->modulus();
    m.strong_convexity = 2.0;
    m.domain_shape = f.shape;
    m.data_init = f.values;
    return m;
}

// Mumford-Shah inpainting: data pinned on the known region (mask true =
// pixel carries data), free elsewhere.  No strong convexity; the adaptive
// schedule is the recommended driver.
inline Model build_ms_inpaint(const ImageGrid& f, std::vector<std::uint8_t> known_mask,
                              const TruncQuadParams& p) {
    if (known_mask.size() != f.shape.value_count())
        throw std::invalid_argument("build_ms_inpaint: mask shape mismatch");
    auto grad = std::make_shared<GradOp>(f.shape);
    Model m;
    m.name = "ms-inpaint";
    m.op = grad;
    m.f_term = std::make_shared<TruncQuadProx>(f.shape, p);
    m.g_term = std::make_shared<InpaintProx>(f.values, std::move(known_mask));
    m.omega = m.f_term->modulus();
    m.strong_convexity = 0.0;
    m.domain_shape = f.shape;
    m.data_init = f.values;
    return m;
}

// min_u  ||k * u - f||^2 + lambda sum -(2u - 1)^2 + box, K = identity.
// The concave double well is 8 lambda-semiconvex; the data prox solves in
// the frequency domain.
inline Model build_dithering(const ImageGrid& f, double lambda, double kernel_std) {
    if (f.shape.channels != 1)
        throw std::invalid_argument("build_dithering: requires a single-channel image");
    if (!(lambda > 0.0)) throw std::invalid_argument("build_dithering: lambda must be > 0");
    auto conv = std::make_shared<ConvolveOp>(ConvolveOp::gaussian(f.shape, kernel_std));
    auto g_term = std::make_shared<DeconvProx>(conv, f.shape, f.values);

    Model m;
    m.name = "dither";
    m.op = std::make_shared<IdentityOp>(f.shape.value_count());
    m.f_term = std::make_shared<BinaryConcaveProx>(lambda, f.shape.value_count());
    m.strong_convexity = g_term->strong_convexity();
    m.g_term = std::move(g_term);
    m.omega = 8.0 * lambda;
    m.domain_shape = f.shape;
    m.data_init = Vec(f.shape.value_count(), 0.0);
    return m;
}

// Outer flow: re-solve with the data replaced by the previous solution,
// starting from u^0 = f.  Inner divergence aborts with partial results.
inline std::vector<ImageGrid> flow_iterate(
    const std::function<Model(const ImageGrid&)>& build, const ImageGrid& f0, int outer_steps,
    StepSchedule schedule, const StopRule& stop, const SolveOptions& opts = {}) {
    if (outer_steps < 1) throw std::invalid_argument("flow_iterate: outer_steps must be >= 1");
    std::vector<ImageGrid> trajectory;
    ImageGrid current = f0;
    for (int k = 0; k < outer_steps; ++k) {
        Model model = build(current);
        Vec q0(model.op->range_dim(), 0.0);
        auto [state, trace] = solve(model, schedule, stop, current.values, q0, opts);
        if (trace.diverged) break;
        current.values = state.u;
        trajectory.push_back(current);
    }
    return trajectory;
}

}  // namespace pdhg
