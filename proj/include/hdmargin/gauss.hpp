#pragma once

#include "hdmargin/loss.hpp"

namespace hdmargin {

// Gaussian moments of the prox residual phi(z) = psi(m + s z, b) - (m + s z),
// z ~ N(0, 1):  F = E[phi],  G = E[phi z],  H = E[phi^2].
//
// Since psi(a, b) >= a and a -> psi(a, b) is 1-Lipschitz, F >= 0, G <= 0 and
// H >= F^2 hold for every loss.
struct Expectations {
    double F = 0.0;
    double G = 0.0;
    double H = 0.0;
};

struct QuadratureOptions {
    double abs_tol = 1e-11;   // per component, whole real line
    double rel_tol = 1e-12;   // added to abs_tol, relative to the component
    double z_max = 10.0;      // truncation of the Gaussian domain
    int max_intervals = 4000; // subdivision cap
};

// Throws std::invalid_argument for s <= 0 or b <= 0 and std::runtime_error
// when the adaptive rule cannot meet the tolerance within the subdivision cap.
Expectations expectations(const Loss& loss, double m, double s, double b,
                          const QuadratureOptions& opts = {});

// Standard normal cdf and density.
double normal_cdf(double x);
double normal_pdf(double x);

}  // namespace hdmargin
