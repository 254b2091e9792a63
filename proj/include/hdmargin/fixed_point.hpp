#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace hdmargin {

// x -> T(x); std::nullopt marks an iterate outside the map's domain.
using FixedPointMap = std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>;

struct FixedPointOptions {
    double tol = 1e-11;              // sup-norm of T(x) - x
    int max_iter = 500;
    int newton_failures_before_picard = 50;
    double relaxation = 0.5;         // Picard: x <- x + relaxation (T(x) - x)
    double fd_step = 1e-7;           // relative forward-difference step
    int max_halvings = 30;
};

struct FixedPointResult {
    Eigen::VectorXd x;
    double residual_norm = 0.0;
    bool converged = false;
    int iterations = 0;
    int newton_failures = 0;
};

// Damped Newton on T(x) - x = 0 with a forward-difference Jacobian and step
// halving; a step that cannot reduce the residual is replaced by a relaxed
// Picard step, and after `newton_failures_before_picard` such failures the
// solver continues with Picard iteration only.
FixedPointResult solve_fixed_point(const FixedPointMap& map, Eigen::VectorXd x0,
                                   const FixedPointOptions& opts = {});

}  // namespace hdmargin
