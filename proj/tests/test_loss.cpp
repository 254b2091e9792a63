#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hdmargin/loss.hpp"
#include "oracles.hpp"

using hdmargin::Loss;

namespace {

std::vector<Loss> all_losses() {
    return {Loss::plr(),       Loss::svm(),         Loss::dwd(1.0),     Loss::dwd(0.1),
            Loss::dwd(2.5),    Loss::lum(1.0, 1.0), Loss::lum(2.0, 0.0), Loss::lum(0.5, 3.0)};
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("evaluate reproduces the family formulas") {
    CHECK(Loss::plr().evaluate(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(Loss::svm().evaluate(2.0) == 0.0);
    CHECK(Loss::svm().evaluate(0.0) == 1.0);
    CHECK(Loss::dwd(1).evaluate(0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(Loss::dwd(1).evaluate(1.0) == doctest::Approx(0.25).epsilon(1e-15));
    // Right branch of DWD(1) at the breakpoint: 1/(4u) at u = 1/2.
    CHECK(1.0 / (4 * 0.5) == doctest::Approx(Loss::dwd(1).evaluate(0.5)));
}

TEST_CASE("piecewise losses are continuous at their breakpoints") {
    for (double q : {0.1, 0.5, 1.0, 3.0}) {
        Loss l = Loss::dwd(q);
        double bp = q / (q + 1);
        CHECK(l.evaluate(bp + 1e-12) == doctest::Approx(l.evaluate(bp)).epsilon(1e-9));
    }
    for (auto [a, c] : std::vector<std::pair<double, double>>{{1, 0}, {1, 1}, {2, 5}, {0.3, 0.2}}) {
        Loss l = Loss::lum(a, c);
        double bp = c / (1 + c);
        CHECK(l.evaluate(bp + 1e-12) == doctest::Approx(l.evaluate(bp)).epsilon(1e-9));
    }
}

TEST_CASE("losses are nonnegative, nonincreasing and convex") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        double prev = l.evaluate(-20.0);
        for (double u = -20.0; u <= 20.0; u += 0.01) {
            double v = l.evaluate(u);
            CHECK(v >= 0.0);
            CHECK(v <= prev + 1e-15);
            prev = v;
            double h = 0.005;
            CHECK(l.evaluate(u - h) + l.evaluate(u + h) - 2 * v >= -1e-12);
        }
    }
}

TEST_CASE("tails behave like -u on the left and vanish on the right") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        CHECK(std::abs(l.evaluate(-50.0) - 51.0) <= 1.0 + 1e-12);
        CHECK(std::abs(l.evaluate(-50.0) - l.evaluate(-60.0) + 10.0) < 1e-9);
        CHECK(l.evaluate(1e300) < 1e-6);
        CHECK(l.evaluate(1e8) <= l.evaluate(1e4));
    }
}

TEST_CASE("derivative matches a central difference away from kinks") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        for (double u = -4.0; u <= 6.0; u += 0.37) {
            double bp = l.breakpoint();
            if (!std::isnan(bp) && std::abs(u - bp) < 1e-3) continue;
            double h = 1e-6;
            double fd = (l.evaluate(u + h) - l.evaluate(u - h)) / (2 * h);
            CHECK(l.derivative(u) == doctest::Approx(fd).epsilon(1e-5).scale(1));
        }
    }
    CHECK(Loss::svm().derivative(1.0) == -1.0);
}

TEST_CASE("parse accepts the spec strings and round-trips") {
    CHECK(Loss::parse("plr") == Loss::plr());
    CHECK(Loss::parse("SVM") == Loss::svm());
    CHECK(Loss::parse("dwd") == Loss::dwd(1.0));
    CHECK(Loss::parse("dwd:q=0.1") == Loss::dwd(0.1));
    CHECK(Loss::parse("lum:a=2,c=0.5") == Loss::lum(2.0, 0.5));
    for (const auto& l : all_losses()) CHECK(Loss::parse(l.to_string()) == l);
    CHECK(Loss::dwd(0.1).label() == "dwd_q0p1");
}

TEST_CASE("invalid parameters are rejected at construction") {
    CHECK_THROWS_AS(Loss::dwd(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Loss::dwd(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(Loss::lum(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Loss::lum(1.0, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(Loss::parse("hinge"), std::invalid_argument);
    CHECK_THROWS_AS(Loss::parse("lum:a=1"), std::invalid_argument);
    CHECK_THROWS_AS(Loss::parse("dwd:q=abc"), std::invalid_argument);
    CHECK_THROWS_AS(Loss::parse("svm:q=1"), std::invalid_argument);
    CHECK_THROWS_AS(Loss::svm().prox(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("svm and dwd closed-form branches") {
    Loss svm = Loss::svm();
    CHECK(svm.prox(2.0, 0.5) == 2.0);
    CHECK(svm.prox(0.8, 0.5) == 1.0);
    CHECK(svm.prox(0.2, 0.5) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(Loss::dwd(1).prox(-1.0, 0.5) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("dwd cubic root against bisection and grid minimization") {
    // Bisection on 4u^3 - 4u^2 - 1 over [1, 2].
    double lo = 1.0, hi = 2.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (4 * mid * mid * (mid - 1) - 1 < 0 ? lo : hi) = mid;
    }
    double u = Loss::dwd(1).prox(1.0, 1.0);
    CHECK(u == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-12));
    CHECK(u == doctest::Approx(1.18).epsilon(0.01));
    // Dense grid of the prox objective.
    Loss l = Loss::dwd(1);
    double best = 0, best_v = 1e300;
    for (double x = 0.5; x <= 2.0; x += 1e-5) {
        double v = l.evaluate(x) + (x - 1.0) * (x - 1.0) / 2.0;
        if (v < best_v) best_v = v, best = x;
    }
    CHECK(std::abs(u - best) <= 2e-5);
}

TEST_CASE("plr prox at a = 0, b = 1 solves its stationarity condition") {
    double u = Loss::plr().prox(0.0, 1.0);
    CHECK(std::abs(-std::exp(-u) / (1 + std::exp(-u)) + u) < 1e-12);
    CHECK(u == doctest::Approx(oracle::prox(Loss::plr(), 0.0, 1.0)).epsilon(1e-8));
}

TEST_CASE("prox satisfies the subgradient inclusion") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        for (double a = -5; a <= 5; a += 0.25)
            for (double b : {0.01, 0.3, 1.0, 4.0}) {
                double u = l.prox(a, b);
                double r = (u - a) / b;  // must lie in -dV(u)
                double left = l.evaluate(u) - l.evaluate(u - 1e-7);
                double right = l.evaluate(u + 1e-7) - l.evaluate(u);
                // -V'(u+) <= r <= -V'(u-) up to the difference quotient error
                CHECK(r >= -right / 1e-7 - 1e-5);
                CHECK(r <= -left / 1e-7 + 1e-5);
            }
    }
}

TEST_CASE("prox never moves left and is monotone and 1-Lipschitz") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        for (double b : {0.01, 0.5, 2.0, 5.0}) {
            double prev_a = -6, prev = l.prox(prev_a, b);
            for (double a = -6 + 0.013; a <= 6; a += 0.013) {
                double u = l.prox(a, b);
                CHECK(u >= a);
                CHECK(u >= prev - 1e-12);
                // Slack covers the 1e-12 root-finding tolerance of both points.
                CHECK(u - prev <= a - prev_a + 1e-10);
                prev = u;
                prev_a = a;
            }
        }
    }
}

TEST_CASE("prox tends to the identity as b vanishes") {
    for (const auto& l : all_losses())
        for (double a = -10; a <= 10; a += 0.5) CHECK(std::abs(l.prox(a, 1e-8) - a) <= 1e-6);
}

TEST_CASE("prox agrees with the golden-section oracle") {
    for (const auto& l : all_losses()) {
        CAPTURE(l.to_string());
        for (double a = -5; a <= 5; a += 0.5)
            for (double b = 0.25; b <= 5; b += 0.25) {
                CAPTURE(a);
                CAPTURE(b);
                CHECK(std::abs(l.prox(a, b) - oracle::prox(l, a, b)) <= 1e-6);
            }
    }
}

TEST_CASE("lum approaches svm as c grows") {
    // At a = 1 the gap is (b / c^2)^(1/3), below 1e-4 for b <= 0.5 at c = 1e6.
    Loss lum = Loss::lum(1.0, 1e6), svm = Loss::svm();
    for (double a = -3; a <= 3; a += 0.1) {
        CHECK(std::abs(lum.evaluate(a) - svm.evaluate(a)) <= 1e-4);
        for (double b : {0.01, 0.05, 0.2, 0.5}) CHECK(std::abs(lum.prox(a, b) - svm.prox(a, b)) <= 1e-4);
    }
}

TEST_CASE("prox kinks are where the residual changes branch") {
    CHECK(Loss::svm().prox_kinks(0.5) == std::vector<double>{0.5, 1.0});
    CHECK(Loss::dwd(1).prox_kinks(0.2) == std::vector<double>{0.5 - 0.2});
    CHECK(Loss::plr().prox_kinks(1.0).empty());
}

}  // TEST_SUITE
