#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "pdhg/imgio.hpp"
#include "pdhg/models.hpp"
#include "pdhg/solver.hpp"

using namespace pdhg;

namespace {

Model zero_model(std::size_t n) {
    Model m;
    m.name = "zero";
    m.op = std::make_shared<IdentityOp>(n);
    m.f_term = std::make_shared<ZeroProx>(n);
    m.g_term = std::make_shared<ZeroProx>(n);
    return m;
}

}  // namespace

TEST_CASE("zero energy with zero dual start is a fixed point") {
    Model m = zero_model(4);
    PrimalDualState s;
    s.u = {0.1, -0.2, 0.3, 0.4};
    s.u_prev = s.u;
    s.u_bar = s.u;
    s.g = m.op->forward(s.u);
    s.q = Vec(4, 0.0);
    Vec u0 = s.u, g0 = s.g;
    for (int i = 0; i < 5; ++i) pdhg_step(s, *m.op, *m.f_term, *m.g_term, 1.0, 1.0, 1.0);
    REQUIRE(s.u == u0);
    REQUIRE(s.g == g0);
    REQUIRE(s.q == Vec(4, 0.0));
}

TEST_CASE("one step matches a straight-line transcription on a 2x2 instance") {
    // Mumford-Shah denoising on a 2x2 image, written out by hand
    ImageGrid f(2, 2, 1);
    f.values = {0.1, 0.9, 0.4, 0.6};
    TruncQuadParams p(10.0, 0.1, 0.5);
    Model m = build_ms_denoise(f, p);
    const double sigma = 2.0 * m.omega;
    const double tau = 1.0 / (sigma * 8.0);
    const double theta = 1.0;

    Vec u0{0.3, 0.5, 0.2, 0.7};
    Vec q0{0.01, -0.02, 0.03, 0.0, -0.01, 0.02, 0.0, 0.04};

    PrimalDualState s;
    s.u = u0;
    s.u_prev = u0;
    s.u_bar = u0;
    s.g = m.op->forward(u0);
    s.q = q0;
    pdhg_step(s, *m.op, *m.f_term, *m.g_term, sigma, tau, theta);

    // transcription: forward differences of the 2x2 image, planes (gx, gy)
    auto grad2 = [](const Vec& u) {
        Vec g(8, 0.0);
        g[0] = u[1] - u[0];  // gx row 0
        g[2] = u[3] - u[2];  // gx row 1
        g[4] = u[2] - u[0];  // gy col 0
        g[5] = u[3] - u[1];  // gy col 1
        return g;
    };
    auto div2 = [](const Vec& g) {
        Vec u(4, 0.0);
        u[0] = -g[0] - g[4];
        u[1] = g[0] - g[5];
        u[2] = -g[2] + g[4];
        u[3] = g[2] + g[5];
        return u;
    };
    Vec ku = grad2(u0);
    Vec z(8);
    for (int i = 0; i < 8; ++i) z[i] = ku[i] + q0[i] / sigma;
    // radial prox per pixel block (gx, gy at the same pixel)
    Vec g1(8, 0.0);
    for (int pix = 0; pix < 4; ++pix) {
        const double zx = z[pix], zy = z[4 + pix];
        const double rho = std::hypot(zx, zy);
        double scale = 0.0;
        if (rho > 0.0) scale = scalar_prox_rms(rho, 1.0 / sigma, p) / rho;
        g1[pix] = scale * zx;
        g1[4 + pix] = scale * zy;
    }
    Vec q1(8);
    for (int i = 0; i < 8; ++i) q1[i] = q0[i] + sigma * (ku[i] - g1[i]);
    Vec ktq = div2(q1);
    Vec u1(4);
    for (int i = 0; i < 4; ++i) {
        const double v = u0[i] - tau * ktq[i];
        u1[i] = (v + tau * 2.0 * f.values[i]) / (1.0 + tau * 2.0);
    }
    Vec ubar1(4);
    for (int i = 0; i < 4; ++i) ubar1[i] = u1[i] + theta * (u1[i] - u0[i]);

    for (int i = 0; i < 8; ++i) {
        REQUIRE(s.g[i] == Catch::Approx(g1[i]).margin(1e-14));
        REQUIRE(s.q[i] == Catch::Approx(q1[i]).margin(1e-14));
    }
    for (int i = 0; i < 4; ++i) {
        REQUIRE(s.u[i] == Catch::Approx(u1[i]).margin(1e-14));
        REQUIRE(s.u_bar[i] == Catch::Approx(ubar1[i]).margin(1e-14));
    }
}

TEST_CASE("step validation") {
    Model m = zero_model(2);
    PrimalDualState s;
    s.u = {0.0, 0.0};
    s.u_prev = s.u;
    s.u_bar = s.u;
    s.g = s.u;
    s.q = s.u;
    SECTION("sigma must exceed the modulus") {
        Model toy = zero_model(2);
        toy.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 2);
        REQUIRE_THROWS_AS(pdhg_step(s, *toy.op, *toy.f_term, *toy.g_term, 1.0, 1.0, 0.0),
                          std::invalid_argument);
    }
    SECTION("non-finite state raises the divergence flag, no throw") {
        s.u[0] = std::numeric_limits<double>::quiet_NaN();
        pdhg_step(s, *m.op, *m.f_term, *m.g_term, 1.0, 1.0, 0.0);
        REQUIRE(s.diverged);
    }
}

TEST_CASE("check_steps classifies the regimes") {
    SECTION("boundary of both inequalities") {
        const double omega = 2.0, normk = std::sqrt(8.0);
        const double sigma = 2.0 * omega, tau = 1.0 / (sigma * normk * normk);
        auto r = check_steps(sigma, tau, omega, normk);
        REQUIRE(r.well_defined);
        REQUIRE(r.theorem_regime);
        REQUIRE_FALSE(r.g_convergence_regime);
    }
    SECTION("well defined but below 2 omega") {
        auto r = check_steps(1.5, 1.0, 1.0, 1.0);
        REQUIRE(r.well_defined);
        REQUIRE_FALSE(r.theorem_regime);
    }
    SECTION("sigma = omega loses strong convexity") {
        auto r = check_steps(1.0, 1.0, 1.0, 1.0);
        REQUIRE_FALSE(r.well_defined);
    }
    SECTION("strict mode throws outside the theorem regime") {
        REQUIRE_THROWS_AS(check_steps(1.5, 1.0, 1.0, 1.0, true), std::runtime_error);
        REQUIRE_NOTHROW(check_steps(2.0, 0.5, 1.0, 1.0, true));
    }
    SECTION("g-convergence needs sigma strictly above 2 omega") {
        REQUIRE(check_steps(2.2, 0.1, 1.0, 1.0).g_convergence_regime);
    }
}

TEST_CASE("adaptive step updates") {
    SECTION("gamma = 0 leaves everything unchanged") {
        auto [s, t, th] = adaptive_update(1.0, 0.5, 0.0, 10.0);
        REQUIRE(s == 1.0);
        REQUIRE(t == 0.5);
        REQUIRE(th == 1.0);
    }
    SECTION("sigma tau product is invariant") {
        double s = 1.0, t = 0.5;
        for (int i = 0; i < 50; ++i) {
            auto [s1, t1, th] = adaptive_update(s, t, 3.0, 1e9);
            REQUIRE(s1 * t1 == Catch::Approx(s * t).epsilon(1e-12));
            s = s1;
            t = t1;
        }
    }
    SECTION("sigma grows monotonically until the freeze") {
        StepSchedule sched = StepSchedule::adaptive(50.0, 1.0, 0.125, 4.0);
        double prev_sigma = 0.0;
        bool frozen_theta = false;
        for (int i = 0; i < 2000; ++i) {
            auto p = sched.next();
            REQUIRE(p.sigma >= prev_sigma);
            prev_sigma = p.sigma;
            if (p.sigma >= 4.0) {
                REQUIRE(p.theta == 1.0);
                frozen_theta = true;
                break;
            }
        }
        REQUIRE(frozen_theta);
        // frozen forever after
        auto p1 = sched.next();
        auto p2 = sched.next();
        REQUIRE(p1.sigma == p2.sigma);
        REQUIRE(p1.tau == p2.tau);
        REQUIRE(p1.theta == 1.0);
    }
}

TEST_CASE("diagnostics") {
    ImageGrid f = synthetic_shapes(8, 8);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);

    PrimalDualState s;
    s.u = f.values;
    s.u_prev = s.u;
    s.u_bar = s.u;
    s.g = m.op->forward(s.u);
    s.q = Vec(m.op->range_dim(), 0.0);

    SECTION("identical consecutive states give zero increments") {
        auto r = diagnostics(s, s, m);
        REQUIRE(r.du == 0.0);
        REQUIRE(r.dq == 0.0);
    }
    SECTION("dual increment equals sigma times the g-residual of the step") {
        PrimalDualState before = s;
        Vec ubar_n = s.u_bar;
        pdhg_step(s, *m.op, *m.f_term, *m.g_term, sigma, tau, 1.0);
        auto r = diagnostics(before, s, m);
        Vec kub = m.op->forward(ubar_n);
        double rn = 0.0;
        for (std::size_t i = 0; i < kub.size(); ++i) {
            const double d = kub[i] - s.g[i];
            rn += d * d;
        }
        REQUIRE(r.dq == Catch::Approx(sigma * std::sqrt(rn)).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("dual feasibility holds after every g-update") {
    ImageGrid f = add_gaussian_noise(synthetic_shapes(24, 24), 0.1, 5);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);
    SolveOptions opts;
    opts.track_dual_residual = true;
    auto [state, trace] = solve(m, StepSchedule::constant(sigma, tau, 1.0), StopRule{200, 0.0},
                                m.data_init, Vec(m.op->range_dim(), 0.0), opts);
    REQUIRE(trace.max_dual_residual <= 1e-8);
}

TEST_CASE("extrapolation identity is exact") {
    ImageGrid f = synthetic_shapes(8, 8);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0), theta = 0.7;
    PrimalDualState s;
    s.u = f.values;
    s.u_prev = s.u;
    s.u_bar = s.u;
    s.g = m.op->forward(s.u);
    s.q = Vec(m.op->range_dim(), 0.0);
    for (int n = 0; n < 3; ++n) {
        pdhg_step(s, *m.op, *m.f_term, *m.g_term, sigma, tau, theta);
        for (std::size_t i = 0; i < s.u.size(); ++i)
            REQUIRE(s.u_bar[i] == s.u[i] + theta * (s.u[i] - s.u_prev[i]));  // bitwise
    }
}

TEST_CASE("with theta = 0 the trajectory ignores u_prev") {
    ImageGrid f = synthetic_shapes(8, 8);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);

    auto make_state = [&](double prev_fill) {
        PrimalDualState s;
        s.u = f.values;
        s.u_prev = Vec(f.values.size(), prev_fill);  // deliberately inconsistent
        s.u_bar = s.u;
        s.g = m.op->forward(s.u);
        s.q = Vec(m.op->range_dim(), 0.0);
        return s;
    };
    PrimalDualState a = make_state(0.0), b = make_state(123.0);
    for (int n = 0; n < 4; ++n) {
        pdhg_step(a, *m.op, *m.f_term, *m.g_term, sigma, tau, 0.0);
        pdhg_step(b, *m.op, *m.f_term, *m.g_term, sigma, tau, 0.0);
    }
    REQUIRE(a.u == b.u);
    REQUIRE(a.g == b.g);
    REQUIRE(a.q == b.q);
}

TEST_CASE("solve with max_iter = 0 returns the initial state and empty trace") {
    ImageGrid f = synthetic_shapes(8, 8);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    auto [state, trace] = solve(m, StepSchedule::constant(60.0, 1e-3, 1.0), StopRule{0, 1e-6},
                                m.data_init, Vec(m.op->range_dim(), 0.0));
    REQUIRE(trace.records.empty());
    REQUIRE(state.u == m.data_init);
    REQUIRE(state.iter == 0);
}

TEST_CASE("solve stops on the relative increment tolerance") {
    ImageGrid f = add_gaussian_noise(synthetic_shapes(16, 16), 0.1, 6);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);
    auto [state, trace] = solve(m, StepSchedule::constant(sigma, tau, 1.0),
                                StopRule{20000, 1e-6}, m.data_init,
                                Vec(m.op->range_dim(), 0.0));
    REQUIRE(trace.stop_reason == "tolerance");
    const auto& last = trace.records.back();
    REQUIRE(std::max(last.du, last.dq) / (1.0 + norm2(state.u)) <= 1e-6);
}

TEST_CASE("theorem-regime toy converges with shrinking increments") {
    // scalar problem with known minimizer 0; sigma = 2 omega, tau sigma = 1
    Model m;
    m.op = std::make_shared<IdentityOp>(1);
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 1);
    m.g_term = std::make_shared<QuadraticProx>(100.0, 1);
    m.omega = 1.0;
    SolveOptions opts;
    opts.initial_g = Vec{0.7};
    auto [state, trace] = solve(m, StepSchedule::constant(2.0, 0.5, 1.0), StopRule{600, 0.0},
                                Vec{0.7}, Vec{-0.7}, opts);
    REQUIRE(std::fabs(state.u[0]) <= 1e-6);
    // one decaying mode: increments fall monotonically beyond burn-in
    for (std::size_t n = 20; n + 1 < trace.records.size(); ++n)
        REQUIRE(trace.records[n + 1].du <= trace.records[n].du * (1.0 + 1e-9) + 1e-300);
}

TEST_CASE("divergent configuration raises the flag, no exception") {
    // toy divergence: sigma < 2 omega with large c
    Model m;
    m.op = std::make_shared<IdentityOp>(1);
    m.f_term = std::make_shared<ConcaveQuadraticProx>(1.0, 1);
    m.g_term = std::make_shared<QuadraticProx>(100.0, 1);
    m.omega = 1.0;
    SolveOptions opts;
    opts.initial_g = Vec{1.0};
    auto [state, trace] = solve(m, StepSchedule::constant(1.5, 1.0, 0.0), StopRule{100, 0.0},
                                Vec{0.01}, Vec{-1.0}, opts);
    REQUIRE(trace.diverged);
    REQUIRE(trace.stop_reason == "diverged");
    REQUIRE(state.iter < 100);
}

TEST_CASE("criticality check") {
    SECTION("analytic critical triple of a smooth quadratic toy") {
        Model m;
        m.op = std::make_shared<IdentityOp>(2);
        m.f_term = std::make_shared<ConcaveQuadraticProx>(0.5, 2);
        m.g_term = std::make_shared<QuadraticProx>(4.0, 2);
        m.omega = 0.5;
        PrimalDualState s;
        s.u = {0.0, 0.0};
        s.u_prev = s.u;
        s.u_bar = s.u;
        s.g = {0.0, 0.0};
        s.q = {0.0, 0.0};
        s.last_tau = 0.1;
        auto rep = check_critical(s, m, 1e-12);
        REQUIRE(rep.constraint_residual <= 1e-12);
        REQUIRE(rep.primal_residual <= 1e-12);
        REQUIRE(rep.dual_residual <= 1e-12);
        REQUIRE(rep.critical);
    }
    SECTION("mid-run state is not critical") {
        ImageGrid f = add_gaussian_noise(synthetic_shapes(16, 16), 0.1, 7);
        Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
        const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);
        auto [state, trace] = solve(m, StepSchedule::constant(sigma, tau, 1.0),
                                    StopRule{5, 0.0}, m.data_init,
                                    Vec(m.op->range_dim(), 0.0));
        auto rep = check_critical(state, m, 1e-4);
        REQUIRE(rep.primal_residual > 1e-4);
        REQUIRE_FALSE(rep.critical);
    }
    SECTION("converged dithering run is critical at 1e-4") {
        ImageGrid f = synthetic_shapes(32, 32);
        Model m = build_dithering(f, 0.01, 1.75);
        auto [state, trace] = solve(m, StepSchedule::constant(0.16, 6.25, 1.0),
                                    StopRule{500, 0.0}, m.data_init,
                                    Vec(m.op->range_dim(), 0.0));
        auto rep = check_critical(state, m, 1e-4);
        REQUIRE(rep.critical);
    }
}

TEST_CASE("boundedness on a long nonconvex run") {
    ImageGrid f = add_gaussian_noise(synthetic_shapes(24, 24), 0.1, 8);
    Model m = build_ms_denoise(f, TruncQuadParams(10.0, 0.1, 0.5));
    const double sigma = 2.0 * m.omega, tau = 1.0 / (sigma * 8.0);
    auto [state, trace] = solve(m, StepSchedule::constant(sigma, tau, 1.0),
                                StopRule{10000, 0.0}, m.data_init,
                                Vec(m.op->range_dim(), 0.0));
    REQUIRE(trace.max_u_inf <= 10.0);
    REQUIRE(trace.max_g_inf <= 10.0);
    REQUIRE(trace.max_q_inf <= 10.0);
    REQUIRE_FALSE(trace.diverged);
}
