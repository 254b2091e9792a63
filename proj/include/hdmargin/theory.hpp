#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "hdmargin/fixed_point.hpp"
#include "hdmargin/gauss.hpp"
#include "hdmargin/loss.hpp"
#include "hdmargin/model.hpp"

namespace hdmargin {

// Asymptotic order parameters of the regularized margin classifier
//
//   argmin_{w, w0}  sum_i V(y_i (x_i'w / sqrt(p) + w0)) + lambda/2 |w|^2
//
// in the limit n+-, p -> inf with n+-/p -> alpha+-. The margin of a class-+-
// training point behaves like psi(R mu +- w0 + sqrt(q0+-) z, q+-), and w is
// distributed as
//
//   (xi+ S+ + xi- S- + lambda I)^{-1} (sqrt(xi0+) S+^{1/2} z+ + sqrt(xi0-) S-^{1/2} z- + sqrt(p) R_hat mu_hat).
struct OrderParams {
    double q0_plus = 1.0, q0_minus = 1.0;
    double q_plus = 1.0, q_minus = 1.0;
    double R = 0.0;
    double w0 = 0.0;
    // Conjugate quantities evaluated at (q0, q, R, w0).
    double xi_plus = 0.0, xi_minus = 0.0;
    double xi0_plus = 0.0, xi0_minus = 0.0;
    double R_hat = 0.0;
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
};

struct ConjugateParams {
    double xi_plus = 0.0, xi_minus = 0.0;
    double xi0_plus = 0.0, xi0_minus = 0.0;
    double R_hat = 0.0;
};

struct ResolventMoments {
    double q0_plus = 0.0;
    double q0_minus = 0.0;
    double R = 0.0;
};

// p -> inf limits of (1/p) E w'S+-w and E w'mu_hat / sqrt(p) under the
// Gaussian law of w above, computed in the shared spike eigenbasis.
// Throws std::domain_error if the resolvent is not positive definite.
ResolventMoments resolvent_moments(const PopulationModel& model, const ConjugateParams& c, double lambda);
std::optional<ResolventMoments> try_resolvent_moments(const PopulationModel& model, const ConjugateParams& c,
                                                      double lambda);

struct ClassExpectations {
    Expectations plus;
    Expectations minus;
};

// F+-, G+-, H+- at (q0+-, q+-, R, w0).
ClassExpectations class_expectations(const Loss& loss, const PopulationModel& model, const OrderParams& o,
                                     const QuadratureOptions& quad = {});

// xi+- = -alpha+- G+- / (sqrt(q0+-) q+-), xi0+- = alpha+- H+- / q+-^2,
// R_hat = mu (alpha+ F+ / q+ + alpha- F- / q-).
ConjugateParams conjugate_params(const PopulationModel& model, const OrderParams& o, const ClassExpectations& e);

struct SolverOptions {
    FixedPointOptions fixed_point{};
    QuadratureOptions quadrature{};
};

// Shared-covariance, balanced case: three unknowns (q0, q, R), w0 = 0.
// Throws std::invalid_argument if the model is not homogeneous.
OrderParams solve_homogeneous(const Loss& loss, const PopulationModel& model, double lambda,
                              const std::optional<OrderParams>& warm = std::nullopt,
                              const SolverOptions& opts = {});

// General two-class case: unknowns (q0+, q0-, q+, R, w0), with
// q- = q+ sigma-^2 / sigma+^2.
OrderParams solve_general(const Loss& loss, const PopulationModel& model, double lambda,
                          const std::optional<OrderParams>& warm = std::nullopt, const SolverOptions& opts = {});

enum class SolverKind { Auto, Homogeneous, General };

OrderParams solve(const Loss& loss, const PopulationModel& model, double lambda, SolverKind kind,
                  const std::optional<OrderParams>& warm = std::nullopt, const SolverOptions& opts = {});

// Initial iterate used without a warm start.
OrderParams cold_start(const PopulationModel& model, double lambda);

// Residuals of the fixed-point system evaluated from scratch at `o`:
//   [0,1] relative error of q0+- against the resolvent moments
//   [2]   R minus its resolvent moment
//   [3]   alpha+ F+ / q+ - alpha- F- / q-
//   [4]   q+ lambda / sigma+^2 - (1 + alpha+ G+ / sqrt(q0+) + alpha- G- / sqrt(q0-))
//   [5]   q+ / sigma+^2 - q- / sigma-^2
std::vector<double> fixed_point_residuals(const Loss& loss, const PopulationModel& model, double lambda,
                                          const OrderParams& o, const QuadratureOptions& quad = {});

struct PrecisionPoint {
    double lambda = 0.0;
    double precision_plus = 0.5;
    double precision_minus = 0.5;
    double balanced = 0.5;
    OrderParams order;
};

// precision+- = Phi((R mu +- w0) / sqrt(q0+-)).
PrecisionPoint predict_precision(const OrderParams& order, const PopulationModel& model, double lambda);

// Large-lambda limit of the balanced precision for K = 0 or a single spike
// aligned with mu:  Phi(rho / sqrt(1 + lambda_1 rho^2) * mu / sigma),
// rho^2 = alpha (mu/sigma)^2 / (1 + alpha (mu/sigma)^2), alpha = n/p.
double mean_difference_limit_precision(double alpha_total, double mu, double sigma, double aligned_spike = 0.0);

struct PrecisionCurve {
    Loss loss = Loss::svm();
    std::vector<PrecisionPoint> points;  // ascending lambda
    bool has_best = false;
    double best_lambda = 0.0;
    double best_precision = 0.0;
    bool best_at_edge = false;  // argmax on the first or last grid point
    int unconverged = 0;
};

struct SweepOptions {
    SolverKind solver = SolverKind::Auto;
    bool refine = true;
    double refine_rel_tol = 1e-3;  // relative lambda tolerance of the argmax
    SolverOptions solver_options{};
};

// Solves along the grid from the largest lambda down, warm-starting each
// point from its neighbour, then refines the argmax by golden-section search
// in log lambda between the grid neighbours of the best converged point.
PrecisionCurve sweep_lambda(const Loss& loss, const PopulationModel& model, const std::vector<double>& grid,
                            const SweepOptions& opts = {});

void write_curve_csv(std::ostream& os, const PrecisionCurve& curve);

// The post-integration closed forms for q0+- and R in their printed form,
// evaluated at a solution; kept as a diagnostic next to the resolvent path.
struct ExplicitFormCheck {
    double q0_plus = 0.0;
    double q0_minus = 0.0;
    double R = 0.0;
    double min_denominator = 0.0;  // min_k 1 - sum_+- alpha+- lambda+-_k G+- / sqrt(q0+-)
    bool denominator_collapse = false;
};

ExplicitFormCheck explicit_form_check(const Loss& loss, const PopulationModel& model, const OrderParams& o,
                                      const QuadratureOptions& quad = {});

}  // namespace hdmargin
