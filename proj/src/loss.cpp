#include "hdmargin/loss.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hdmargin {

namespace {

constexpr double kProxTol = 1e-12;
constexpr int kProxMaxIter = 400;

// Absolute 1e-12, relaxed only where that is below double resolution.
double prox_tol(double u) {
    return std::max(kProxTol, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(u));
}

double parse_double(std::string_view text, std::string_view what) {
    std::string buf(text);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size() || !std::isfinite(v))
        throw std::invalid_argument("invalid value for " + std::string(what) + ": '" + buf + "'");
    return v;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, e - b + 1));
}

// Shortest representation that parses back to the same double.
std::string fmt_param(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

Loss Loss::plr() { return Loss(Family::PLR, 1.0, 1.0, 0.0); }

Loss Loss::svm() { return Loss(Family::SVM, 1.0, 1.0, 0.0); }

Loss Loss::dwd(double q) {
    if (!(q > 0) || !std::isfinite(q)) throw std::invalid_argument("DWD requires q > 0");
    return Loss(Family::DWD, q, 1.0, 0.0);
}

Loss Loss::lum(double a, double c) {
    if (!(a > 0) || !std::isfinite(a)) throw std::invalid_argument("LUM requires a > 0");
    if (!(c >= 0) || !std::isfinite(c)) throw std::invalid_argument("LUM requires c >= 0");
    return Loss(Family::LUM, 1.0, a, c);
}

Loss Loss::parse(std::string_view spec_in) {
    std::string spec = trim(spec_in);
    for (auto& ch : spec) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    auto colon = spec.find(':');
    std::string name = spec.substr(0, colon);
    std::string params = colon == std::string::npos ? std::string() : spec.substr(colon + 1);

    double q = 1.0, a = std::numeric_limits<double>::quiet_NaN(), c = std::numeric_limits<double>::quiet_NaN();
    std::istringstream ps(params);
    for (std::string kv; std::getline(ps, kv, ',');) {
        kv = trim(kv);
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("malformed loss parameter '" + kv + "'");
        std::string key = trim(kv.substr(0, eq));
        double val = parse_double(trim(kv.substr(eq + 1)), key);
        if (key == "q" && name == "dwd") q = val;
        else if (key == "a" && name == "lum") a = val;
        else if (key == "c" && name == "lum") c = val;
        else throw std::invalid_argument("unknown parameter '" + key + "' for loss '" + name + "'");
    }

    if (name == "plr") {
        if (!params.empty()) throw std::invalid_argument("plr takes no parameters");
        return plr();
    }
    if (name == "svm") {
        if (!params.empty()) throw std::invalid_argument("svm takes no parameters");
        return svm();
    }
    if (name == "dwd") return dwd(q);
    if (name == "lum") {
        if (std::isnan(a) || std::isnan(c)) throw std::invalid_argument("lum requires a=<float>,c=<float>");
        return lum(a, c);
    }
    throw std::invalid_argument("unknown loss '" + name + "'");
}

std::string Loss::to_string() const {
    switch (family_) {
    case Family::PLR: return "plr";
    case Family::SVM: return "svm";
    case Family::DWD: return "dwd:q=" + fmt_param(q_);
    case Family::LUM: return "lum:a=" + fmt_param(a_) + ",c=" + fmt_param(c_);
    }
    return {};
}

std::string Loss::label() const {
    auto clean = [](std::string s) {
        for (auto& ch : s)
            if (ch == '.') ch = 'p';
            else if (ch == '-') ch = 'm';
        return s;
    };
    switch (family_) {
    case Family::PLR: return "plr";
    case Family::SVM: return "svm";
    case Family::DWD: return "dwd_q" + clean(fmt_param(q_));
    case Family::LUM: return "lum_a" + clean(fmt_param(a_)) + "_c" + clean(fmt_param(c_));
    }
    return {};
}

double Loss::breakpoint() const {
    switch (family_) {
    case Family::PLR: return std::numeric_limits<double>::quiet_NaN();
    case Family::SVM: return 1.0;
    case Family::DWD: return q_ / (q_ + 1.0);
    case Family::LUM: return c_ / (1.0 + c_);
    }
    return 0.0;
}

double Loss::evaluate(double u) const {
    switch (family_) {
    case Family::PLR:
        return u > 0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
    case Family::SVM:
        return u < 1.0 ? 1.0 - u : 0.0;
    case Family::DWD: {
        if (u <= breakpoint()) return 1.0 - u;
        double scale = std::exp(q_ * std::log(q_) - (q_ + 1.0) * std::log(q_ + 1.0));
        return scale * std::pow(u, -q_);
    }
    case Family::LUM: {
        if (u <= breakpoint()) return 1.0 - u;
        double t = a_ / ((1.0 + c_) * u - c_ + a_);
        return std::pow(t, a_) / (1.0 + c_);
    }
    }
    return 0.0;
}

double Loss::derivative(double u) const {
    switch (family_) {
    case Family::PLR:
        // -1 / (1 + e^u), written to avoid overflow for large |u|
        return u > 0 ? -std::exp(-u) / (1.0 + std::exp(-u)) : -1.0 / (1.0 + std::exp(u));
    case Family::SVM:
        return u <= 1.0 ? -1.0 : 0.0;
    case Family::DWD: {
        if (u <= breakpoint()) return -1.0;
        // -q C u^-(q+1) == -(q / ((q+1) u))^(q+1)
        return -std::pow(q_ / ((q_ + 1.0) * u), q_ + 1.0);
    }
    case Family::LUM: {
        if (u <= breakpoint()) return -1.0;
        return -std::pow(a_ / ((1.0 + c_) * u - c_ + a_), a_ + 1.0);
    }
    }
    return 0.0;
}

double Loss::second_derivative(double u) const {
    switch (family_) {
    case Family::PLR: {
        double e = std::exp(-std::abs(u));
        return e / ((1.0 + e) * (1.0 + e));
    }
    case Family::SVM:
        return 0.0;
    case Family::DWD: {
        if (u <= breakpoint()) return 0.0;
        return (q_ + 1.0) / u * std::pow(q_ / ((q_ + 1.0) * u), q_ + 1.0);
    }
    case Family::LUM: {
        if (u <= breakpoint()) return 0.0;
        double d = (1.0 + c_) * u - c_ + a_;
        return (a_ + 1.0) * (1.0 + c_) / d * std::pow(a_ / d, a_ + 1.0);
    }
    }
    return 0.0;
}

std::vector<double> Loss::prox_kinks(double b) const {
    switch (family_) {
    case Family::PLR: return {};
    case Family::SVM: return {1.0 - b, 1.0};
    case Family::DWD:
    case Family::LUM: return {breakpoint() - b};
    }
    return {};
}

double Loss::prox(double a, double b) const {
    if (!(b > 0)) throw std::invalid_argument("prox requires b > 0");
    switch (family_) {
    case Family::SVM:
        if (a >= 1.0) return a;
        if (a >= 1.0 - b) return 1.0;
        return a + b;
    case Family::DWD:
        if (q_ == 1.0) return prox_dwd1(a, b);
        return prox_root(a, b);
    case Family::PLR:
    case Family::LUM:
        return prox_root(a, b);
    }
    return a;
}

// Linear branch for a <= 1/2 - b, otherwise the unique root above max(a, 0)
// of 4u^3 - 4a u^2 - b.
double Loss::prox_dwd1(double a, double b) const {
    if (a <= 0.5 - b) return a + b;
    auto cubic = [&](double u) { return 4.0 * u * u * (u - a) - b; };
    double lo = std::max(a, 0.0);
    double hi = lo + 1.0 + b;
    double u = lo + std::cbrt(b / 4.0);
    if (!(u > lo && u < hi)) u = 0.5 * (lo + hi);
    for (int it = 0; it < kProxMaxIter; ++it) {
        double g = cubic(u);
        if (g == 0.0) return u;
        if (g < 0) lo = u;
        else hi = u;
        double dg = 12.0 * u * u - 8.0 * a * u;
        double next = u - g / dg;
        if (!(dg > 0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - u) <= prox_tol(u) || hi - lo <= prox_tol(u)) return next;
        u = next;
    }
    throw std::runtime_error("DWD prox root-finder did not converge (internal error)");
}

// Solves V'(u) + (u - a)/b = 0 by bisection-safeguarded Newton. Because V' <= 0
// and is nondecreasing, the root lies in [a, a + b|V'(a)|].
double Loss::prox_root(double a, double b) const {
    auto g = [&](double u) { return derivative(u) + (u - a) / b; };
    double lo = a;
    double glo = g(lo);
    if (glo >= 0.0) return a;
    double hi = a + b * std::abs(derivative(a));
    double ghi = g(hi);
    if (ghi == 0.0) return hi;
    // The bracket is exact in exact arithmetic; widen by doubling against rounding.
    for (double step = b; ghi < 0.0; step *= 2.0) {
        lo = hi;
        glo = ghi;
        hi += step;
        ghi = g(hi);
        if (!std::isfinite(hi)) throw std::runtime_error("prox bracket expansion failed (internal error)");
    }
    double u = lo + (hi - lo) * (-glo) / (ghi - glo);
    if (!(u > lo && u < hi)) u = 0.5 * (lo + hi);
    for (int it = 0; it < kProxMaxIter; ++it) {
        double gu = g(u);
        if (gu == 0.0) return u;
        if (gu < 0) lo = u;
        else hi = u;
        double dg = second_derivative(u) + 1.0 / b;
        double next = u - gu / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - u) <= prox_tol(u) || hi - lo <= prox_tol(u)) return next;
        u = next;
    }
    throw std::runtime_error("prox root-finder did not converge (internal error)");
}

std::vector<Loss> parse_losses(std::span<const std::string> specs) {
    std::vector<Loss> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(Loss::parse(s));
    return out;
}

}  // namespace hdmargin
