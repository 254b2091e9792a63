#include "hdmargin/gauss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <queue>
#include <tuple>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hdmargin {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

namespace {

using Triple = std::array<double, 3>;

struct Panel {
    double lo, hi;
    Triple value;
    Triple error;
    double max_error() const { return std::max({error[0], error[1], error[2]}); }
    bool operator<(const Panel& o) const { return max_error() < o.max_error(); }
};

// 15-point Kronrod rule with the embedded 7-point Gauss rule, nodes shared
// with Boost.Math. The Gauss nodes are the even-indexed Kronrod abscissae.
template <class Fn>
Panel gk15(const Fn& f, double lo, double hi) {
    using boost::math::quadrature::gauss;
    using boost::math::quadrature::gauss_kronrod;
    static const auto& kx = gauss_kronrod<double, 15>::abscissa();
    static const auto& kw = gauss_kronrod<double, 15>::weights();
    static const auto& gw = gauss<double, 7>::weights();

    const double c = 0.5 * (lo + hi);
    const double h = 0.5 * (hi - lo);
    Triple k{}, g{};
    Triple f0 = f(c);
    for (int j = 0; j < 3; ++j) {
        k[j] = kw[0] * f0[j];
        g[j] = gw[0] * f0[j];
    }
    for (std::size_t i = 1; i < kx.size(); ++i) {
        Triple fl = f(c - h * kx[i]);
        Triple fr = f(c + h * kx[i]);
        for (int j = 0; j < 3; ++j) {
            double s = fl[j] + fr[j];
            k[j] += kw[i] * s;
            if (i % 2 == 0) g[j] += gw[i / 2] * s;
        }
    }
    Panel p{lo, hi, {}, {}};
    for (int j = 0; j < 3; ++j) {
        p.value[j] = h * k[j];
        p.error[j] = std::abs(h * (k[j] - g[j]));
    }
    return p;
}

}  // namespace

Expectations expectations(const Loss& loss, double m, double s, double b, const QuadratureOptions& opts) {
    if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("expectations requires s > 0");
    if (!(b > 0) || !std::isfinite(b)) throw std::invalid_argument("expectations requires b > 0");
    if (!std::isfinite(m)) throw std::invalid_argument("expectations requires finite m");

    auto integrand = [&](double z) -> Triple {
        double a = m + s * z;
        double phi = loss.prox(a, b) - a;
        double w = normal_pdf(z) * phi;
        return {w, w * z, w * phi};
    };

    // Split at the points where phi has a kink so every panel is smooth.
    std::vector<double> cuts{-opts.z_max, opts.z_max};
    for (double kink : loss.prox_kinks(b)) {
        double z = (kink - m) / s;
        if (z > -opts.z_max && z < opts.z_max) cuts.push_back(z);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::priority_queue<Panel> work;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) work.push(gk15(integrand, cuts[i], cuts[i + 1]));

    auto totals = [&]() {
        Triple v{}, e{};
        auto copy = work;
        while (!copy.empty()) {
            const Panel& p = copy.top();
            for (int j = 0; j < 3; ++j) {
                v[j] += p.value[j];
                e[j] += p.error[j];
            }
            copy.pop();
        }
        return std::pair{v, e};
    };

    // Running sums avoid re-walking the heap on every split.
    Triple err{};
    for (auto copy = work; !copy.empty(); copy.pop())
        for (int j = 0; j < 3; ++j) err[j] += copy.top().error[j];

    Triple val = totals().first;
    auto unmet = [&]() {
        for (int j = 0; j < 3; ++j)
            if (err[j] > opts.abs_tol + opts.rel_tol * std::abs(val[j])) return true;
        return false;
    };
    int intervals = static_cast<int>(work.size());
    while (unmet()) {
        if (intervals >= opts.max_intervals)
            throw std::runtime_error("Gaussian quadrature did not converge within the subdivision cap");
        Panel worst = work.top();
        work.pop();
        double mid = 0.5 * (worst.lo + worst.hi);
        Panel left = gk15(integrand, worst.lo, mid);
        Panel right = gk15(integrand, mid, worst.hi);
        for (int j = 0; j < 3; ++j) {
            err[j] += left.error[j] + right.error[j] - worst.error[j];
            val[j] += left.value[j] + right.value[j] - worst.value[j];
        }
        work.push(left);
        work.push(right);
        ++intervals;
        // Guard against drift in the running sum.
        if (intervals % 256 == 0) std::tie(val, err) = totals();
    }

    auto [value, error] = totals();
    (void)error;
    // Clamp rounding noise to the signs the loss guarantees.
    return {std::max(value[0], 0.0), std::min(value[1], 0.0), std::max(value[2], 0.0)};
}

}  // namespace hdmargin
