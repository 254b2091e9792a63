#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hdmargin {

// Margin-based loss V(u) of one of the supported large-margin families.
//
//   PLR      log(1 + exp(-u))
//   SVM      (1 - u)_+
//   DWD(q)   1 - u                              for u <= q/(q+1)
//            q^q / (q+1)^(q+1) / u^q            otherwise
//   LUM(a,c) 1 - u                              for u <= c/(1+c)
//            (a / ((1+c)u - c + a))^a / (1+c)   otherwise
//
// Every family is convex, nonincreasing, behaves like -u as u -> -inf and
// decays to 0 as u -> +inf. Values are immutable once constructed.
class Loss {
public:
    enum class Family { PLR, SVM, DWD, LUM };

    static Loss plr();
    static Loss svm();
    static Loss dwd(double q = 1.0);
    static Loss lum(double a, double c);

    // Parses `plr`, `svm`, `dwd`, `dwd:q=<float>`, `lum:a=<float>,c=<float>`.
    // Throws std::invalid_argument on malformed input or invalid parameters.
    static Loss parse(std::string_view spec);

    Family family() const { return family_; }
    double q() const { return q_; }
    double a() const { return a_; }
    double c() const { return c_; }

    // Canonical spec string; parse(to_string()) reproduces the loss.
    std::string to_string() const;
    // Short file-name friendly label, e.g. "dwd_q1".
    std::string label() const;

    double evaluate(double u) const;
    // Right-continuous derivative; at the SVM kink u = 1 returns -1 (left branch).
    double derivative(double u) const;
    // Second derivative where it exists; 0 on linear pieces.
    double second_derivative(double u) const;

    // Point where the linear piece 1 - u ends (SVM: 1, DWD: q/(q+1),
    // LUM: c/(1+c)). PLR has none and returns NaN.
    double breakpoint() const;

    // psi(a, b) = argmin_u V(u) + (u - a)^2 / (2b), b > 0.
    double prox(double a, double b) const;

    // Input values a at which a -> psi(a, b) - a is not differentiable.
    std::vector<double> prox_kinks(double b) const;

    friend bool operator==(const Loss&, const Loss&) = default;

private:
    Loss(Family f, double q, double a, double c) : family_(f), q_(q), a_(a), c_(c) {}

    double prox_dwd1(double a, double b) const;
    double prox_root(double a, double b) const;

    Family family_;
    double q_ = 1.0;
    double a_ = 1.0;
    double c_ = 0.0;
};

std::vector<Loss> parse_losses(std::span<const std::string> specs);

}  // namespace hdmargin
