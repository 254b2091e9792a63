#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "hdmargin/gauss.hpp"
#include "oracles.hpp"

using hdmargin::expectations;
using hdmargin::Loss;

namespace {

double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * 3.14159265358979323846); }

}  // namespace

TEST_SUITE("gauss") {

TEST_CASE("normal cdf against an independent series") {
    for (double x = -8; x <= 8; x += 0.173)
        CHECK(hdmargin::normal_cdf(x) == doctest::Approx(oracle::normal_cdf(x)).epsilon(1e-12));
    CHECK(hdmargin::normal_cdf(1.633) == doctest::Approx(0.9487).epsilon(1e-4));
    CHECK(hdmargin::normal_pdf(0.0) == doctest::Approx(pdf(0.0)));
}

TEST_CASE("svm deep in the zero-loss region has vanishing moments") {
    auto e = expectations(Loss::svm(), 10.0, 1.0, 1.0);
    CHECK(std::abs(e.F) < 1e-12);
    CHECK(std::abs(e.G) < 1e-12);
    CHECK(std::abs(e.H) < 1e-12);
}

TEST_CASE("svm at m = 0, s = 1, b = 1 matches the piecewise closed form") {
    // phi = 1 for a < 0, 1 - a on [0, 1), 0 above.
    const double P1 = oracle::normal_cdf(1.0);
    const double F = P1 - pdf(0) + pdf(1);
    const double G = 0.5 - P1;
    const double H = 2 * P1 - 0.5 - 2 * pdf(0) + pdf(1);
    auto e = expectations(Loss::svm(), 0.0, 1.0, 1.0);
    CHECK(std::abs(e.F - F) <= 1e-10);
    CHECK(std::abs(e.G - G) <= 1e-10);
    CHECK(std::abs(e.H - H) <= 1e-10);
}

TEST_CASE("dwd q = 1 at m = 0, s = 1, b = 0.5 against Monte Carlo") {
    auto mc = oracle::monte_carlo_moments(Loss::dwd(1), 0.0, 1.0, 0.5, 10'000'000, 7);
    auto e = expectations(Loss::dwd(1), 0.0, 1.0, 0.5);
    CHECK(std::abs(e.F - mc.F) <= 3 * mc.seF);
    CHECK(std::abs(e.G - mc.G) <= 3 * mc.seG);
    CHECK(std::abs(e.H - mc.H) <= 3 * mc.seH);
}

TEST_CASE("random tuples against Monte Carlo") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> um(-3, 3), us(0.2, 3), ub(0.05, 4);
    const Loss losses[] = {Loss::plr(), Loss::svm(), Loss::dwd(1), Loss::dwd(0.3), Loss::lum(1.5, 0.5)};
    for (int t = 0; t < 5; ++t) {
        const Loss& l = losses[t];
        double m = um(rng), s = us(rng), b = ub(rng);
        CAPTURE(l.to_string());
        auto mc = oracle::monte_carlo_moments(l, m, s, b, 200'000, 100 + t);
        auto e = expectations(l, m, s, b);
        CHECK(std::abs(e.F - mc.F) <= 4 * mc.seF + 1e-10);
        CHECK(std::abs(e.G - mc.G) <= 4 * mc.seG + 1e-10);
        CHECK(std::abs(e.H - mc.H) <= 4 * mc.seH + 1e-10);
    }
}

TEST_CASE("sign properties and Jensen") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> um(-6, 6), us(0.05, 5), ub(0.01, 5);
    const Loss losses[] = {Loss::plr(), Loss::svm(), Loss::dwd(1), Loss::dwd(2), Loss::lum(1, 1)};
    for (int t = 0; t < 100; ++t) {
        const Loss& l = losses[t % 5];
        double m = um(rng), s = us(rng), b = ub(rng);
        auto e = expectations(l, m, s, b);
        CHECK(e.F >= -1e-12);
        CHECK(e.G <= 1e-12);
        CHECK(e.H >= e.F * e.F - 1e-12);
    }
}

TEST_CASE("F is nonincreasing in m") {
    for (const auto& l : {Loss::plr(), Loss::svm(), Loss::dwd(1), Loss::lum(2, 0)}) {
        double prev = expectations(l, -5.0, 1.3, 0.7).F;
        for (double m = -4.9; m <= 5; m += 0.1) {
            double F = expectations(l, m, 1.3, 0.7).F;
            CHECK(F <= prev + 1e-11);
            prev = F;
        }
    }
}

TEST_CASE("moments vanish as b goes to zero") {
    for (const auto& l : {Loss::plr(), Loss::svm(), Loss::dwd(1)}) {
        auto e = expectations(l, 0.3, 1.0, 1e-7);
        CHECK(std::abs(e.F) < 1e-6);
        CHECK(std::abs(e.G) < 1e-6);
        CHECK(std::abs(e.H) < 1e-6);
    }
}

TEST_CASE("invalid arguments are refused") {
    CHECK_THROWS_AS(expectations(Loss::svm(), 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(expectations(Loss::svm(), 0, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(expectations(Loss::svm(), NAN, 1, 1), std::invalid_argument);
    hdmargin::QuadratureOptions tight;
    tight.abs_tol = 1e-30;
    tight.max_intervals = 10;
    CHECK_THROWS_AS(expectations(Loss::plr(), 0, 1, 1, tight), std::runtime_error);
}

}  // TEST_SUITE
