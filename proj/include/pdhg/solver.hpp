#pragma once

// Primal-dual hybrid gradient iteration for  min_u G(u) + F(K u)  with
// convex G and omega-semiconvex F.  One iteration, in this order:
//
//   g    <- argmin_g  sigma/2 ||g - K ubar||^2 - <g, q> + F(g)
//   q    <- q + sigma (K ubar - g)
//   u    <- argmin_u  1/(2 tau) ||u - u||^2 + <K u, q> + G(u)
//   ubar <- u + theta (u - u_prev)
//
// The g-subproblem needs sigma > omega to be strongly convex; convergence
// to the minimizer holds for sigma >= 2 omega, tau sigma ||K||^2 <= 1 when
// the strong convexity c of G dominates omega ||K||^2.  After every
// g-update the dual variable satisfies q in dF(g).

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "pdhg/grid.hpp"
#include "pdhg/linops.hpp"
#include "pdhg/prox.hpp"

namespace pdhg {

struct Model {
    std::string name;
    std::shared_ptr<const LinearMap> op;           // K
    std::shared_ptr<const SemiconvexProx> f_term;  // F, on the range of K
    std::shared_ptr<const SemiconvexProx> g_term;  // G, on the domain
    double omega = 0.0;              // semiconvexity modulus of F
    double strong_convexity = 0.0;   // certified strong convexity of G (0 if none)
    ImageShape domain_shape{};       // meaningful for imaging models
    Vec data_init;                   // the "input" initialization for u

    double energy(std::span<const double> u) const {
        Vec ku(op->range_dim());
        op->forward(u, std::span<double>(ku));
        return g_term->energy(u) + f_term->energy(ku);
    }
};

struct PrimalDualState {
    Vec u, u_prev, u_bar, g, q;
    long iter = 0;
    bool diverged = false;
    double last_sigma = 0.0, last_tau = 0.0, last_theta = 0.0;
};

struct StepReport {
    bool well_defined = false;         // sigma > omega
    bool theorem_regime = false;       // sigma >= 2 omega and tau sigma ||K||^2 <= 1
    bool g_convergence_regime = false; // sigma > 2 omega
};

// strict mode turns a failed theorem_regime into an error
inline StepReport check_steps(double sigma, double tau, double omega, double norm_k,
                              bool strict = false) {
    if (sigma < 0.0 || tau < 0.0 || omega < 0.0 || norm_k < 0.0)
        throw std::invalid_argument("check_steps: inputs must be >= 0");
    StepReport r;
    r.well_defined = sigma > omega;
    // 1e-12 slack absorbs roundoff when tau is derived as 1/(sigma ||K||^2)
    const double prod = tau * sigma * norm_k * norm_k;
    r.theorem_regime = sigma >= 2.0 * omega * (1.0 - 1e-12) && prod <= 1.0 + 1e-12;
    r.g_convergence_regime = sigma > 2.0 * omega;
    if (strict && !r.theorem_regime)
        throw std::runtime_error(
            "check_steps: step sizes outside the convergence regime "
            "(need sigma >= 2*omega and tau*sigma*||K||^2 <= 1)");
    return r;
}

// theta_n = 1/sqrt(1 + 2 gamma tau_n), sigma_{n+1} = sigma_n/theta_n,
// tau_{n+1} = tau_n theta_n; once sigma_n >= sigma_freeze the parameters
// stay fixed and theta = 1.
inline std::tuple<double, double, double> adaptive_update(double sigma, double tau, double gamma,
                                                          double sigma_freeze) {
    if (!(gamma >= 0.0) || !(sigma > 0.0) || !(tau > 0.0))
        throw std::invalid_argument("adaptive_update: need gamma >= 0 and sigma, tau > 0");
    if (sigma >= sigma_freeze) return {sigma, tau, 1.0};
    const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
    return {sigma / theta, tau * theta, theta};
}

class StepSchedule {
  public:
    struct Params {
        double sigma, tau, theta;
    };

    static StepSchedule constant(double sigma, double tau, double theta) {
        if (!(sigma > 0.0) || !(tau > 0.0) || theta < 0.0 || theta > 1.0)
            throw std::invalid_argument("StepSchedule: need sigma, tau > 0 and theta in [0,1]");
        StepSchedule s;
        s.adaptive_ = false;
        s.sigma_ = sigma;
        s.tau_ = tau;
        s.theta_ = theta;
        return s;
    }

    static StepSchedule adaptive(double gamma, double sigma0, double tau0, double sigma_freeze) {
        if (!(sigma0 > 0.0) || !(tau0 > 0.0) || gamma < 0.0)
            throw std::invalid_argument("StepSchedule: need sigma0, tau0 > 0 and gamma >= 0");
        StepSchedule s;
        s.adaptive_ = true;
        s.sigma_ = sigma0;
        s.tau_ = tau0;
        s.gamma_ = gamma;
        s.sigma_freeze_ = sigma_freeze;
        return s;
    }

    bool is_adaptive() const { return adaptive_; }
    bool frozen() const { return frozen_; }
    double sigma() const { return sigma_; }
    double tau() const { return tau_; }

    // parameters for the upcoming iteration; advances the adaptive state
    Params next() {
        if (!adaptive_) return {sigma_, tau_, theta_};
        if (sigma_ >= sigma_freeze_) {
            frozen_ = true;
            return {sigma_, tau_, 1.0};
        }
        auto [s, t, th] = adaptive_update(sigma_, tau_, gamma_, sigma_freeze_);
        Params p{sigma_, tau_, th};
        sigma_ = s;
        tau_ = t;
        return p;
    }

  private:
    bool adaptive_ = false;
    bool frozen_ = false;
    double sigma_ = 0.0, tau_ = 0.0, theta_ = 0.0;
    double gamma_ = 0.0, sigma_freeze_ = 0.0;
};

// One iteration in the printed order g, q, u, ubar.  Non-finite state sets
// the divergence flag instead of throwing mid-iteration.
inline void pdhg_step(PrimalDualState& state, const LinearMap& op, const SemiconvexProx& f_term,
                      const SemiconvexProx& g_term, double sigma, double tau, double theta) {
    if (!(sigma > f_term.modulus()))
        throw std::invalid_argument("pdhg_step: requires sigma > omega(F)");
    if (!(tau > 0.0) || theta < 0.0 || theta > 1.0)
        throw std::invalid_argument("pdhg_step: requires tau > 0 and theta in [0,1]");
    if (!all_finite(state.u) || !all_finite(state.g) || !all_finite(state.q) ||
        !all_finite(state.u_bar)) {
        state.diverged = true;
        return;
    }

    const std::size_t m = op.range_dim();
    Vec ku(m), z(m);
    op.forward(state.u_bar, std::span<double>(ku));
    for (std::size_t i = 0; i < m; ++i) z[i] = ku[i] + state.q[i] / sigma;
    f_term.apply(std::span<const double>(z), 1.0 / sigma, std::span<double>(state.g));

    for (std::size_t i = 0; i < m; ++i) state.q[i] += sigma * (ku[i] - state.g[i]);

    Vec ktq(op.domain_dim());
    op.adjoint(state.q, std::span<double>(ktq));
    std::swap(state.u_prev, state.u);
    Vec v(op.domain_dim());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = state.u_prev[i] - tau * ktq[i];
    g_term.apply(std::span<const double>(v), tau, std::span<double>(state.u));

    for (std::size_t i = 0; i < state.u.size(); ++i)
        state.u_bar[i] = state.u[i] + theta * (state.u[i] - state.u_prev[i]);

    state.iter += 1;
    state.last_sigma = sigma;
    state.last_tau = tau;
    state.last_theta = theta;
}

struct TraceRecord {
    long iter = 0;
    double du = 0.0;        // ||u^{n+1} - u^n||
    double dq = 0.0;        // ||q^{n+1} - q^n||
    double residual = 0.0;  // ||g - K u||, computed fresh
    double energy = 0.0;    // G(u) + F(K u)
    double sigma = 0.0, tau = 0.0, theta = 0.0;
    double wall_ms = 0.0;
    double dual_residual = 0.0;  // ||q - grad F(g)|| / (1 + ||q||), when tracked
};

struct ConvergenceTrace {
    std::vector<TraceRecord> records;
    bool diverged = false;
    std::string stop_reason;  // "max_iter", "tolerance" or "diverged"
    double max_u_inf = 0.0, max_g_inf = 0.0, max_q_inf = 0.0;
    double max_dual_residual = 0.0;
};

struct StopRule {
    long max_iter = 10000;
    double tol = 1e-6;  // on max(du, dq) / (1 + ||u||)
    double divergence_threshold = 1e12;
};

struct SolveOptions {
    bool with_energy = true;
    bool track_dual_residual = false;
    double kink_delta = 1e-6;
    bool measure_time = false;  // off by default so traces are reproducible
    std::function<void(const PrimalDualState&)> observer;
    std::optional<Vec> initial_g;  // default: K u0
};

// ||q - grad F(g)|| / (1 + ||q||) over entries away from kinks
inline double dual_feasibility_residual(const SemiconvexProx& f_term,
                                        std::span<const double> g, std::span<const double> q,
                                        double kink_delta) {
    if (!f_term.has_gradient()) return 0.0;
    Vec grad(g.size());
    std::vector<std::uint8_t> valid;
    f_term.gradient(g, kink_delta, std::span<double>(grad), valid);
    double num = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!valid[i]) continue;
        const double d = q[i] - grad[i];
        num += d * d;
    }
    return std::sqrt(num) / (1.0 + norm2(q));
}

// Per-iteration diagnostics between two consecutive states.
inline TraceRecord diagnostics(const PrimalDualState& prev, const PrimalDualState& cur,
                               const Model& model, bool with_energy = true) {
    TraceRecord r;
    r.iter = cur.iter;
    double du = 0.0, dq = 0.0;
    for (std::size_t i = 0; i < cur.u.size(); ++i) {
        const double d = cur.u[i] - prev.u[i];
        du += d * d;
    }
    for (std::size_t i = 0; i < cur.q.size(); ++i) {
        const double d = cur.q[i] - prev.q[i];
        dq += d * d;
    }
    r.du = std::sqrt(du);
    r.dq = std::sqrt(dq);
    Vec ku(model.op->range_dim());
    model.op->forward(cur.u, std::span<double>(ku));
    double res = 0.0;
    for (std::size_t i = 0; i < ku.size(); ++i) {
        const double d = cur.g[i] - ku[i];
        res += d * d;
    }
    r.residual = std::sqrt(res);
    r.energy = with_energy ? model.energy(cur.u) : 0.0;
    r.sigma = cur.last_sigma;
    r.tau = cur.last_tau;
    r.theta = cur.last_theta;
    return r;
}

inline std::pair<PrimalDualState, ConvergenceTrace> solve(const Model& model,
                                                          StepSchedule schedule,
                                                          const StopRule& stop, const Vec& u0,
                                                          const Vec& q0,
                                                          const SolveOptions& opts = {}) {
    if (u0.size() != model.op->domain_dim())
        throw std::invalid_argument("solve: u0 size mismatch");
    if (q0.size() != model.op->range_dim())
        throw std::invalid_argument("solve: q0 size mismatch");

    PrimalDualState state;
    state.u = u0;
    state.u_prev = u0;
    state.u_bar = u0;  // ubar^0 = u^0
    state.q = q0;
    if (opts.initial_g) {
        if (opts.initial_g->size() != model.op->range_dim())
            throw std::invalid_argument("solve: initial g size mismatch");
        state.g = *opts.initial_g;
    } else {
        state.g = model.op->forward(u0);
    }

    ConvergenceTrace trace;
    trace.stop_reason = "max_iter";
    const auto t0 = std::chrono::steady_clock::now();

    Vec u_before, q_before;
    PrimalDualState prev_view;  // only u and q are filled
    for (long n = 0; n < stop.max_iter; ++n) {
        const auto p = schedule.next();
        u_before = state.u;
        q_before = state.q;
        pdhg_step(state, *model.op, *model.f_term, *model.g_term, p.sigma, p.tau, p.theta);
        if (state.diverged) {
            trace.diverged = true;
            trace.stop_reason = "diverged";
            break;
        }

        prev_view.u = std::move(u_before);
        prev_view.q = std::move(q_before);
        TraceRecord rec = diagnostics(prev_view, state, model, opts.with_energy);
        if (opts.measure_time)
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        if (opts.track_dual_residual) {
            rec.dual_residual =
                dual_feasibility_residual(*model.f_term, state.g, state.q, opts.kink_delta);
            trace.max_dual_residual = std::max(trace.max_dual_residual, rec.dual_residual);
        }
        trace.records.push_back(rec);

        trace.max_u_inf = std::max(trace.max_u_inf, max_abs(state.u));
        trace.max_g_inf = std::max(trace.max_g_inf, max_abs(state.g));
        trace.max_q_inf = std::max(trace.max_q_inf, max_abs(state.q));

        const double magnitude =
            std::max({max_abs(state.u), max_abs(state.g), max_abs(state.q)});
        if (!std::isfinite(magnitude) || magnitude > stop.divergence_threshold) {
            state.diverged = true;
            trace.diverged = true;
            trace.stop_reason = "diverged";
            break;
        }

        if (opts.observer) opts.observer(state);

        if (std::max(rec.du, rec.dq) / (1.0 + norm2(state.u)) <= stop.tol) {
            trace.stop_reason = "tolerance";
            break;
        }
    }
    return {std::move(state), std::move(trace)};
}

struct CriticalityReport {
    double constraint_residual = 0.0;  // ||g - K u|| / (1 + ||K u||)
    double primal_residual = 0.0;      // ||(u_prev - u)/tau|| / (1 + ||u||)
    double dual_residual = 0.0;        // ||q - grad F(g)|| / (1 + ||q||), kinks excluded
    bool critical = false;
};

// A-posteriori criticality check: at a critical triple the splitting
// constraint holds, -K^T q in dG(u) (witnessed by the last primal step),
// and q in dF(g) where F is differentiable.
inline CriticalityReport check_critical(const PrimalDualState& state, const Model& model,
                                        double tol, double kink_delta = 1e-6) {
    CriticalityReport rep;
    Vec ku(model.op->range_dim());
    model.op->forward(state.u, std::span<double>(ku));
    double cres = 0.0;
    for (std::size_t i = 0; i < ku.size(); ++i) {
        const double d = state.g[i] - ku[i];
        cres += d * d;
    }
    rep.constraint_residual = std::sqrt(cres) / (1.0 + norm2(ku));

    const double tau = state.last_tau > 0.0 ? state.last_tau : 1.0;
    double pres = 0.0;
    for (std::size_t i = 0; i < state.u.size(); ++i) {
        const double d = (state.u_prev[i] - state.u[i]) / tau;
        pres += d * d;
    }
    rep.primal_residual = std::sqrt(pres) / (1.0 + norm2(state.u));

    rep.dual_residual =
        dual_feasibility_residual(*model.f_term, state.g, state.q, kink_delta);

    rep.critical = rep.constraint_residual <= tol && rep.primal_residual <= tol &&
                   rep.dual_residual <= tol;
    return rep;
}

}  // namespace pdhg
