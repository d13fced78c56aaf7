#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "pdhg/toy.hpp"

using namespace pdhg;

TEST_CASE("divergence matrix entries") {
    SECTION("sigma = 2 puts the g-coefficient on the stability boundary") {
        Mat2 a = divergence_matrix(2.0, 1.0, 100.0);
        REQUIRE(a.a11 == -1.0);
    }
    SECTION("explicit entries for sigma = 1.5, tau = 1, c = 10") {
        Mat2 a = divergence_matrix(1.5, 1.0, 10.0);
        REQUIRE(a.a11 == Catch::Approx(-2.0).epsilon(1e-14));
        REQUIRE(a.a12 == Catch::Approx(3.0).epsilon(1e-14));
        REQUIRE(a.a21 == Catch::Approx(-2.0 / 11.0).epsilon(1e-14));
        REQUIRE(a.a22 == Catch::Approx(4.0 / 11.0).epsilon(1e-14));
    }
    SECTION("large c decouples the u-row") {
        Mat2 a = divergence_matrix(1.5, 1.0, 1e9);
        REQUIRE(std::fabs(a.a21) < 1e-8);
        REQUIRE(std::fabs(a.a22) < 1e-8);
    }
    SECTION("requires sigma > 1") {
        REQUIRE_THROWS_AS(divergence_matrix(1.0, 1.0, 10.0), std::invalid_argument);
    }
}

TEST_CASE("2x2 eigenvalues") {
    SECTION("identity") {
        auto [d1, d2] = eigvals_2x2(Mat2{1, 0, 0, 1});
        REQUIRE(d1.real() == 1.0);
        REQUIRE(d2.real() == 1.0);
        REQUIRE(d1.imag() == 0.0);
    }
    SECTION("diag(2,3) returns the larger root first") {
        auto [d1, d2] = eigvals_2x2(Mat2{2, 0, 0, 3});
        REQUIRE(d1.real() == Catch::Approx(3.0).epsilon(1e-14));
        REQUIRE(d2.real() == Catch::Approx(2.0).epsilon(1e-14));
    }
    SECTION("divergent configuration has a root below -1") {
        auto [d1, d2] = eigvals_2x2(divergence_matrix(1.5, 1.0, 10.0));
        REQUIRE(d2.real() == Catch::Approx(-1.741).margin(5e-4));
        REQUIRE(std::fabs(d2.real()) > 1.0);
    }
    SECTION("rotation yields a complex pair") {
        auto [d1, d2] = eigvals_2x2(Mat2{0, -1, 1, 0});
        REQUIRE(d1.imag() == Catch::Approx(1.0).epsilon(1e-14));
        REQUIRE(d2.imag() == Catch::Approx(-1.0).epsilon(1e-14));
    }
}

TEST_CASE("eigenvector convention") {
    Mat2 a = divergence_matrix(1.5, 1.0, 100.0);
    const double d2 = eigvals_2x2(a).second.real();
    auto v = eigvec_2x2(a, d2);
    REQUIRE(std::hypot(v[0], v[1]) == Catch::Approx(1.0).epsilon(1e-14));
    REQUIRE(v[0] > 0.0);  // first nonzero component positive
    // A v = d2 v
    auto av = a.apply(v);
    REQUIRE(av[0] == Catch::Approx(d2 * v[0]).epsilon(1e-12));
    REQUIRE(av[1] == Catch::Approx(d2 * v[1]).margin(1e-12));
}

TEST_CASE("solver reproduces the closed-form recurrence in all regimes") {
    for (double sigma : {1.3, 1.5, 1.8, 2.0, 2.5}) {
        for (double c : {5.0, 50.0, 100.0}) {
            auto trace = run_toy_prop(sigma, 1.0, c, {0.6, 0.4}, 30);
            REQUIRE(trace.max_closed_form_err <= 1e-10);
            REQUIRE(trace.matched_closed_form);
        }
    }
}

TEST_CASE("divergence dichotomy of the scalar toy") {
    SECTION("spectral radius below one implies a bounded, vanishing run") {
        Mat2 a = divergence_matrix(2.0, 1.0, 100.0);
        auto [d1, d2] = eigvals_2x2(a);
        REQUIRE(std::max(std::fabs(d1.real()), std::fabs(d2.real())) < 1.0);
        auto trace = run_toy_prop(2.0, 1.0, 100.0, eigvec_2x2(a, d2.real()), 500);
        REQUIRE_FALSE(trace.diverged);
        REQUIRE(std::fabs(trace.u_seq.back()[0]) <= 1e-4);
    }
    SECTION("spectral radius above one from the matching eigenvector diverges") {
        Mat2 a = divergence_matrix(1.5, 1.0, 100.0);
        auto [d1, d2] = eigvals_2x2(a);
        REQUIRE(d2.real() < -1.0);
        auto trace = run_toy_prop(1.5, 1.0, 100.0, eigvec_2x2(a, d2.real()), 60);
        bool exceeded = false;
        for (std::size_t i = 0; i < trace.g_seq.size(); ++i)
            if (std::hypot(trace.g_seq[i][0], trace.u_seq[i][0]) >= 1e6) exceeded = true;
        REQUIRE(exceeded);
    }
}

TEST_CASE("g-divergence example") {
    SECTION("sigma = 3: geometric decay with ratio one half") {
        auto t = run_toy_example(3.0, {-1.0, 1.0}, 30);
        REQUIRE(t.matched_closed_form);
        REQUIRE(t.max_closed_form_err <= 1e-12);
        REQUIRE(t.g_seq[0][0] == Catch::Approx(-0.5).epsilon(1e-14));
        REQUIRE(t.g_seq[0][1] == Catch::Approx(0.5).epsilon(1e-14));
        REQUIRE(norm2(t.g_seq[1]) == Catch::Approx(0.5 * norm2(t.g_seq[0])).epsilon(1e-12));
        REQUIRE_FALSE(t.diverged);
    }
    SECTION("sigma = 1.5: doubling magnitude, diverged flag") {
        auto t = run_toy_example(1.5, {-1.0, 1.0}, 30);
        REQUIRE(t.matched_closed_form);
        REQUIRE(norm2(t.g_seq[1]) == Catch::Approx(2.0 * norm2(t.g_seq[0])).epsilon(1e-12));
        REQUIRE(t.diverged);
    }
    SECTION("u stays exactly zero for any sigma > 1") {
        for (double sigma : {1.2, 1.5, 2.0, 3.0, 7.0}) {
            auto t = run_toy_example(sigma, {-1.0, 1.0}, 25);
            REQUIRE(t.u_all_zero);
            for (const auto& u : t.u_seq) REQUIRE(u[0] == 0.0);
        }
    }
    SECTION("rejects sigma <= 1 and c <= 2") {
        REQUIRE_THROWS_AS(run_toy_example(1.0, {-1.0, 1.0}, 5), std::invalid_argument);
        REQUIRE_THROWS_AS(run_toy_example(3.0, {-1.0, 1.0}, 5, 2.0), std::invalid_argument);
    }
}

TEST_CASE("rate check") {
    SECTION("bounded C_n for the theorem-regime scalar toy") {
        // sigma = 2 omega, tau sigma ||K||^2 = 1, theta = 1
        auto t = run_toy_prop(2.0, 0.5, 100.0, {0.7, 0.1}, 600, 1.0);
        std::vector<Vec> pts;
        for (std::size_t i = 0; i < t.u_seq.size(); ++i) pts.push_back(t.u_seq[i]);
        auto rep = rate_check(pts, Vec{0.0}, 10, 600);
        REQUIRE(rep.finite);
        REQUIRE(rep.bounded);
    }
    SECTION("a trace already at the reference gives all-zero C_n") {
        std::vector<Vec> pts(20, Vec{0.25});
        auto rep = rate_check(pts, Vec{0.25}, 5, 20);
        REQUIRE(rep.c_start == 0.0);
        REQUIRE(rep.c_max == 0.0);
        REQUIRE(rep.bounded);
    }
    SECTION("a divergent trace is flagged unbounded") {
        std::vector<Vec> pts;
        double v = 1.0;
        for (int i = 0; i < 40; ++i) {
            pts.push_back(Vec{v});
            v *= 2.0;
        }
        auto rep = rate_check(pts, Vec{0.0}, 10, 40);
        REQUIRE_FALSE(rep.bounded);
    }
    SECTION("empty window rejected") {
        std::vector<Vec> pts(5, Vec{0.0});
        REQUIRE_THROWS_AS(rate_check(pts, Vec{0.0}, 10, 8), std::invalid_argument);
    }
}
