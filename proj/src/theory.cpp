#include "hdmargin/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>

#include <boost/math/tools/roots.hpp>

namespace hdmargin {

std::optional<ResolventMoments> try_resolvent_moments(const PopulationModel& model, const ConjugateParams& c,
                                                      double lambda) {
    const double sp2 = model.sigma_plus * model.sigma_plus;
    const double sm2 = model.sigma_minus * model.sigma_minus;
    const double m0 = c.xi_plus * sp2 + c.xi_minus * sm2 + lambda;
    if (!(m0 > 0) || !std::isfinite(m0)) return std::nullopt;

    // Bulk directions carry R_{K+1}^2 of mu_hat; spike k carries R_k^2.
    const double rest = model.residual_projection_sq();
    double trace_plus = rest * sp2 / (m0 * m0);
    double trace_minus = rest * sm2 / (m0 * m0);
    double overlap = rest / m0;
    for (std::size_t k = 0; k < model.K(); ++k) {
        const double lp = model.lambda_plus[k], lm = model.lambda_minus[k];
        const double mk = m0 + c.xi_plus * sp2 * lp + c.xi_minus * sm2 * lm;
        if (!(mk > 0) || !std::isfinite(mk)) return std::nullopt;
        const double r2 = model.R[k] * model.R[k];
        trace_plus += r2 * sp2 * (1.0 + lp) / (mk * mk);
        trace_minus += r2 * sm2 * (1.0 + lm) / (mk * mk);
        overlap += r2 / mk;
    }
    const double noise = (c.xi0_plus * sp2 + c.xi0_minus * sm2) / (m0 * m0);
    const double rh2 = c.R_hat * c.R_hat;
    return ResolventMoments{sp2 * noise + rh2 * trace_plus, sm2 * noise + rh2 * trace_minus, c.R_hat * overlap};
}

ResolventMoments resolvent_moments(const PopulationModel& model, const ConjugateParams& c, double lambda) {
    auto r = try_resolvent_moments(model, c, lambda);
    if (!r) throw std::domain_error("resolvent is not positive definite");
    return *r;
}

ClassExpectations class_expectations(const Loss& loss, const PopulationModel& model, const OrderParams& o,
                                     const QuadratureOptions& quad) {
    const double signal = o.R * model.mu;
    ClassExpectations e;
    e.plus = expectations(loss, signal + o.w0, std::sqrt(o.q0_plus), o.q_plus, quad);
    if (o.w0 == 0.0 && o.q0_plus == o.q0_minus && o.q_plus == o.q_minus)
        e.minus = e.plus;
    else
        e.minus = expectations(loss, signal - o.w0, std::sqrt(o.q0_minus), o.q_minus, quad);
    return e;
}

ConjugateParams conjugate_params(const PopulationModel& model, const OrderParams& o, const ClassExpectations& e) {
    ConjugateParams c;
    c.xi_plus = -model.alpha_plus * e.plus.G / (std::sqrt(o.q0_plus) * o.q_plus);
    c.xi_minus = -model.alpha_minus * e.minus.G / (std::sqrt(o.q0_minus) * o.q_minus);
    c.xi0_plus = model.alpha_plus * e.plus.H / (o.q_plus * o.q_plus);
    c.xi0_minus = model.alpha_minus * e.minus.H / (o.q_minus * o.q_minus);
    c.R_hat = model.mu * (model.alpha_plus * e.plus.F / o.q_plus + model.alpha_minus * e.minus.F / o.q_minus);
    return c;
}

OrderParams cold_start(const PopulationModel& model, double lambda) {
    OrderParams o;
    const double sp2 = model.sigma_plus * model.sigma_plus;
    const double sm2 = model.sigma_minus * model.sigma_minus;
    o.q0_plus = sp2;
    o.q0_minus = sm2;
    // q tracks sigma^2 / lambda at both ends of the path.
    o.q_plus = sp2 / lambda;
    o.q_minus = sm2 / lambda;
    o.R = 0.1;
    o.w0 = 0.0;
    return o;
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda > 0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
}

// Fills the conjugate quantities and bookkeeping of a solved point.
OrderParams finish(const Loss& loss, const PopulationModel& model, OrderParams o, const FixedPointResult& fp,
                   const QuadratureOptions& quad) {
    auto c = conjugate_params(model, o, class_expectations(loss, model, o, quad));
    o.xi_plus = c.xi_plus;
    o.xi_minus = c.xi_minus;
    o.xi0_plus = c.xi0_plus;
    o.xi0_minus = c.xi0_minus;
    o.R_hat = c.R_hat;
    o.converged = fp.converged;
    o.residual_norm = fp.residual_norm;
    o.iterations = fp.iterations;
    return o;
}

// Quadrature or domain failures inside a map mark the point as infeasible.
FixedPointMap guarded(FixedPointMap map) {
    return [map = std::move(map)](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
        try {
            return map(x);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };
}

// Solves from `x0`; without convergence below lambda = 1, walks down from
// lambda = 1 in quarter decades, warm-starting each step.
FixedPointResult solve_with_continuation(const std::function<FixedPointMap(double)>& make_map,
                                         const std::function<Eigen::VectorXd(double)>& cold, double lambda,
                                         const std::optional<Eigen::VectorXd>& warm, const FixedPointOptions& opts) {
    auto fp = solve_fixed_point(make_map(lambda), warm ? *warm : cold(lambda), opts);
    if (fp.converged) return fp;
    if (warm) {
        auto retry = solve_fixed_point(make_map(lambda), cold(lambda), opts);
        if (retry.converged) return retry;
        if (retry.residual_norm < fp.residual_norm) fp = retry;
    }
    if (lambda >= 1.0) return fp;
    const double step = std::pow(10.0, 0.25);
    double lam = 1.0;
    auto path = solve_fixed_point(make_map(lam), cold(lam), opts);
    while (path.converged && lam > lambda) {
        lam = std::max(lam / step, lambda);
        path = solve_fixed_point(make_map(lam), path.x, opts);
    }
    if (path.converged && lam == lambda) return path;
    return fp;
}

bool usable(const OrderParams& o) {
    return o.q0_plus > 0 && o.q0_minus > 0 && o.q_plus > 0 && o.q_minus > 0 && std::isfinite(o.R) &&
           std::isfinite(o.w0);
}

}  // namespace

OrderParams solve_homogeneous(const Loss& loss, const PopulationModel& model, double lambda,
                              const std::optional<OrderParams>& warm, const SolverOptions& opts) {
    check_lambda(lambda);
    model.validate();
    if (!model.is_homogeneous(1e-12)) throw std::invalid_argument("solve_homogeneous needs a homogeneous model");
    const double s2 = model.sigma_plus * model.sigma_plus;

    auto unpack = [](const Eigen::VectorXd& x) {
        OrderParams o;
        o.q0_plus = o.q0_minus = std::exp(x[0]);
        o.q_plus = o.q_minus = std::exp(x[1]);
        o.R = x[2];
        o.w0 = 0.0;
        return o;
    };
    auto pack = [](const OrderParams& o) {
        Eigen::VectorXd x(3);
        x << std::log(o.q0_plus), std::log(o.q_plus), o.R;
        return x;
    };
    auto make_map = [&](double lam) {
        return guarded([&, lam](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
            OrderParams o = unpack(x);
            if (!usable(o)) return std::nullopt;
            auto c = conjugate_params(model, o, class_expectations(loss, model, o, opts.quadrature));
            auto mom = try_resolvent_moments(model, c, lam);
            if (!mom || !(mom->q0_plus > 0)) return std::nullopt;
            const double m0 = c.xi_plus * s2 + c.xi_minus * s2 + lam;
            Eigen::VectorXd t(3);
            t << std::log(mom->q0_plus), std::log(s2 / m0), mom->R;
            return t;
        });
    };
    std::optional<Eigen::VectorXd> start;
    if (warm && usable(*warm)) start = pack(*warm);
    auto fp = solve_with_continuation(
        make_map, [&](double lam) { return pack(cold_start(model, lam)); }, lambda, start, opts.fixed_point);
    return finish(loss, model, unpack(fp.x), fp, opts.quadrature);
}

namespace {

// Relative intercept balance (alpha+ F+ / q+ - alpha- F- / q-) / (sum of
// both terms); nonincreasing in w0.
double intercept_balance(const Loss& loss, const PopulationModel& model, OrderParams o, double w0,
                         const QuadratureOptions& quad) {
    o.w0 = w0;
    auto e = class_expectations(loss, model, o, quad);
    const double a = model.alpha_plus / o.q_plus * e.plus.F, b = model.alpha_minus / o.q_minus * e.minus.F;
    return a + b > 0 ? (a - b) / (a + b) : 0.0;
}

// Root of the balance in w0 with the other order parameters held fixed.
// Losses with a linear piece can make the balance vanish on an interval
// when every margin sits on that piece; we take the interval's midpoint,
// which is w0 = 0 for symmetric classes.
double solve_intercept(const Loss& loss, const PopulationModel& model, const OrderParams& o, double guess,
                       const QuadratureOptions& quad) {
    // On a plateau the balance is exactly zero up to quadrature noise, and at
    // its edges it grows like a Gaussian tail, so a loose threshold pins the
    // edges tightly.
    constexpr double flat_tol = 1e-9;
    auto g = [&](double w) { return intercept_balance(loss, model, o, w, quad); };
    double lo = guess, hi = guess, glo = g(guess), ghi = glo;
    double step = 0.1 * (1.0 + std::abs(guess));
    for (int k = 0; k < 80 && glo <= flat_tol; ++k, step *= 2) lo -= step, glo = g(lo);
    step = 0.1 * (1.0 + std::abs(guess));
    for (int k = 0; k < 80 && ghi >= -flat_tol; ++k, step *= 2) hi += step, ghi = g(hi);
    if (glo <= flat_tol || ghi >= -flat_tol) throw std::domain_error("intercept balance has no sign change");

    std::uintmax_t iters = 200;
    auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, boost::math::tools::eps_tolerance<double>(50),
                                                    iters);
    const double root = 0.5 * (a + b);
    const double probe = 1e-6 * (1.0 + std::abs(root));
    if (std::abs(g(root - probe)) > flat_tol || std::abs(g(root + probe)) > flat_tol) return root;

    // Left edge of {g <= flat_tol} and right edge of {g >= -flat_tol}.
    auto edge = [&](double a, double b, auto inside_right) {
        for (int k = 0; k < 200 && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++k) {
            double mid = 0.5 * (a + b);
            (inside_right(g(mid)) ? b : a) = mid;
        }
        return 0.5 * (a + b);
    };
    const double left = edge(lo, hi, [&](double v) { return v <= flat_tol; });
    const double right = edge(lo, hi, [&](double v) { return v < -flat_tol; });
    return 0.5 * (left + right);
}

}  // namespace

OrderParams solve_general(const Loss& loss, const PopulationModel& model, double lambda,
                          const std::optional<OrderParams>& warm, const SolverOptions& opts) {
    check_lambda(lambda);
    model.validate();
    const double sp2 = model.sigma_plus * model.sigma_plus;
    const double sm2 = model.sigma_minus * model.sigma_minus;

    // Unknowns (log q0+, log q0-, log q+, R); w0 solves its balance exactly
    // inside every evaluation, seeded from the previous one.
    double w0_guess = warm && std::isfinite(warm->w0) ? warm->w0 : 0.0;
    auto unpack = [&](const Eigen::VectorXd& x) {
        OrderParams o;
        o.q0_plus = std::exp(x[0]);
        o.q0_minus = std::exp(x[1]);
        o.q_plus = std::exp(x[2]);
        o.q_minus = o.q_plus * sm2 / sp2;
        o.R = x[3];
        return o;
    };
    auto pack = [](const OrderParams& o) {
        Eigen::VectorXd x(4);
        x << std::log(o.q0_plus), std::log(o.q0_minus), std::log(o.q_plus), o.R;
        return x;
    };
    auto make_map = [&](double lam) {
        return guarded([&, lam](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
            OrderParams o = unpack(x);
            if (!usable(o)) return std::nullopt;
            o.w0 = solve_intercept(loss, model, o, w0_guess, opts.quadrature);
            w0_guess = o.w0;
            auto c = conjugate_params(model, o, class_expectations(loss, model, o, opts.quadrature));
            auto mom = try_resolvent_moments(model, c, lam);
            if (!mom || !(mom->q0_plus > 0) || !(mom->q0_minus > 0)) return std::nullopt;
            const double m0 = c.xi_plus * sp2 + c.xi_minus * sm2 + lam;
            Eigen::VectorXd t(4);
            t << std::log(mom->q0_plus), std::log(mom->q0_minus), std::log(sp2 / m0), mom->R;
            return t;
        });
    };
    std::optional<Eigen::VectorXd> start;
    if (warm && usable(*warm)) start = pack(*warm);
    auto fp = solve_with_continuation(
        make_map, [&](double lam) { return pack(cold_start(model, lam)); }, lambda, start, opts.fixed_point);
    OrderParams o = unpack(fp.x);
    try {
        o.w0 = solve_intercept(loss, model, o, w0_guess, opts.quadrature);
    } catch (const std::exception&) {
        o.w0 = w0_guess;
        fp.converged = false;
    }
    return finish(loss, model, o, fp, opts.quadrature);
}

OrderParams solve(const Loss& loss, const PopulationModel& model, double lambda, SolverKind kind,
                  const std::optional<OrderParams>& warm, const SolverOptions& opts) {
    if (kind == SolverKind::Auto) kind = model.is_homogeneous(1e-12) ? SolverKind::Homogeneous : SolverKind::General;
    if (kind == SolverKind::Homogeneous) return solve_homogeneous(loss, model, lambda, warm, opts);
    return solve_general(loss, model, lambda, warm, opts);
}

std::vector<double> fixed_point_residuals(const Loss& loss, const PopulationModel& model, double lambda,
                                          const OrderParams& o, const QuadratureOptions& quad) {
    auto e = class_expectations(loss, model, o, quad);
    auto c = conjugate_params(model, o, e);
    auto mom = resolvent_moments(model, c, lambda);
    const double sp2 = model.sigma_plus * model.sigma_plus;
    const double sm2 = model.sigma_minus * model.sigma_minus;
    const double slope = 1.0 + model.alpha_plus * e.plus.G / std::sqrt(o.q0_plus) +
                         model.alpha_minus * e.minus.G / std::sqrt(o.q0_minus);
    return {
        mom.q0_plus / o.q0_plus - 1.0,
        mom.q0_minus / o.q0_minus - 1.0,
        mom.R - o.R,
        model.alpha_plus / o.q_plus * e.plus.F - model.alpha_minus / o.q_minus * e.minus.F,
        o.q_plus * lambda / sp2 - slope,
        o.q_plus / sp2 - o.q_minus / sm2,
    };
}

PrecisionPoint predict_precision(const OrderParams& order, const PopulationModel& model, double lambda) {
    if (!(order.q0_plus > 0) || !(order.q0_minus > 0)) throw std::invalid_argument("predict_precision needs q0 > 0");
    PrecisionPoint p;
    p.lambda = lambda;
    p.order = order;
    const double signal = order.R * model.mu;
    p.precision_plus = normal_cdf((signal + order.w0) / std::sqrt(order.q0_plus));
    p.precision_minus = normal_cdf((signal - order.w0) / std::sqrt(order.q0_minus));
    p.balanced = 0.5 * (p.precision_plus + p.precision_minus);
    return p;
}

double mean_difference_limit_precision(double alpha_total, double mu, double sigma, double aligned_spike) {
    const double snr = (mu / sigma) * (mu / sigma);
    const double rho2 = alpha_total * snr / (1.0 + alpha_total * snr);
    return normal_cdf(std::sqrt(rho2 / (1.0 + aligned_spike * rho2)) * mu / sigma);
}

PrecisionCurve sweep_lambda(const Loss& loss, const PopulationModel& model, const std::vector<double>& grid,
                            const SweepOptions& opts) {
    if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!(grid[i] > 0) || (i > 0 && !(grid[i] > grid[i - 1])))
            throw std::invalid_argument("lambda grid must be positive and strictly increasing");

    PrecisionCurve curve;
    curve.loss = loss;
    curve.points.resize(grid.size());
    std::optional<OrderParams> warm;
    for (std::size_t j = grid.size(); j-- > 0;) {
        OrderParams o = solve(loss, model, grid[j], opts.solver, warm, opts.solver_options);
        curve.points[j] = predict_precision(o, model, grid[j]);
        if (o.converged) warm = o;
        else ++curve.unconverged;
    }

    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const auto& pt = curve.points[j];
        if (!pt.order.converged) continue;
        if (!best || pt.balanced > curve.points[*best].balanced) best = j;
    }
    // Plateaus (all margins on a linear piece) resolve to the largest lambda.
    if (best) {
        const double top = curve.points[*best].balanced;
        for (std::size_t j = grid.size(); j-- > *best;)
            if (curve.points[j].order.converged && curve.points[j].balanced >= top - 1e-9) {
                best = j;
                break;
            }
    }
    if (!best) return curve;
    curve.has_best = true;
    curve.best_lambda = grid[*best];
    curve.best_precision = curve.points[*best].balanced;
    curve.best_at_edge = *best == 0 || *best + 1 == grid.size();
    if (!opts.refine || curve.best_at_edge) return curve;

    // Golden-section search in log lambda on the bracket of grid neighbours.
    const auto& lo_pt = curve.points[*best - 1];
    const auto& hi_pt = curve.points[*best + 1];
    if (!lo_pt.order.converged || !hi_pt.order.converged) return curve;
    OrderParams seed = curve.points[*best].order;
    auto eval = [&](double log_lambda) {
        double lam = std::exp(log_lambda);
        OrderParams o = solve(loss, model, lam, opts.solver, seed, opts.solver_options);
        if (!o.converged) return -1.0;
        seed = o;
        double value = predict_precision(o, model, lam).balanced;
        if (value > curve.best_precision) {
            curve.best_precision = value;
            curve.best_lambda = lam;
        }
        return value;
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(lo_pt.lambda), b = std::log(hi_pt.lambda);
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = eval(x1), f2 = eval(x2);
    const double width = std::log1p(opts.refine_rel_tol);
    while (b - a > width) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    return curve;
}

void write_curve_csv(std::ostream& os, const PrecisionCurve& curve) {
    os << "lambda,precision_plus,precision_minus,balanced,q0_plus,q0_minus,q_plus,q_minus,R,w0,converged,residual\n";
    char buf[512];
    for (const auto& p : curve.points) {
        const auto& o = p.order;
        std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%d,%.6g\n", p.lambda,
                      p.precision_plus, p.precision_minus, p.balanced, o.q0_plus, o.q0_minus, o.q_plus, o.q_minus,
                      o.R, o.w0 == 0.0 ? 0.0 : o.w0, o.converged ? 1 : 0, o.residual_norm);
        os << buf;
    }
}

ExplicitFormCheck explicit_form_check(const Loss& loss, const PopulationModel& model, const OrderParams& o,
                                      const QuadratureOptions& quad) {
    auto e = class_expectations(loss, model, o, quad);
    const double ap = model.alpha_plus, am = model.alpha_minus;
    const double sp = model.sigma_plus, sm = model.sigma_minus;
    const double gp = e.plus.G / std::sqrt(o.q0_plus), gm = e.minus.G / std::sqrt(o.q0_minus);

    ExplicitFormCheck out;
    out.min_denominator = 1.0;
    double sum_plus = 0.0, sum_minus = 0.0, sum_r = 0.0;
    auto add = [&](double r2, double lp, double lm) {
        const double d = 1.0 - ap * lp * gp - am * lm * gm;
        out.min_denominator = std::min(out.min_denominator, d);
        sum_plus += (1.0 + lp) * r2 / (d * d);
        sum_minus += (1.0 + lm) * r2 / (d * d);
        sum_r += r2 / (d * d);
    };
    for (std::size_t k = 0; k < model.K(); ++k) add(model.R[k] * model.R[k], model.lambda_plus[k], model.lambda_minus[k]);
    add(model.residual_projection_sq(), 0.0, 0.0);
    out.denominator_collapse = !(out.min_denominator > 0);

    const double noise = ap * e.plus.H + am * e.minus.H;
    const double amp_plus = ap * model.mu / sp * e.plus.F + am * model.mu * sp / (sm * sm) * e.minus.F;
    const double amp_minus = am * model.mu / sm * e.minus.F + ap * model.mu * sm / (sp * sp) * e.plus.F;
    out.q0_plus = noise + amp_plus * amp_plus * sum_plus;
    out.q0_minus = noise + amp_minus * amp_minus * sum_minus;
    out.R = amp_plus * sum_r;
    return out;
}

}  // namespace hdmargin
