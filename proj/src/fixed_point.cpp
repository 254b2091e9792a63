#include "hdmargin/fixed_point.hpp"

#include <cmath>
#include <limits>

namespace hdmargin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<Eigen::VectorXd> residual(const FixedPointMap& map, const Eigen::VectorXd& x) {
    auto tx = map(x);
    if (!tx || !tx->allFinite()) return std::nullopt;
    return Eigen::VectorXd(*tx - x);
}

double sup_norm(const std::optional<Eigen::VectorXd>& r) { return r ? r->cwiseAbs().maxCoeff() : kInf; }

}  // namespace

FixedPointResult solve_fixed_point(const FixedPointMap& map, Eigen::VectorXd x0, const FixedPointOptions& opts) {
    FixedPointResult out;
    out.x = std::move(x0);
    auto r = residual(map, out.x);
    if (!r) {
        out.residual_norm = kInf;
        return out;
    }
    const Eigen::Index n = out.x.size();
    bool picard_only = false;

    for (out.iterations = 0; out.iterations < opts.max_iter; ++out.iterations) {
        out.residual_norm = sup_norm(r);
        if (out.residual_norm <= opts.tol) {
            out.converged = true;
            return out;
        }

        bool stepped = false;
        if (!picard_only) {
            Eigen::MatrixXd J(n, n);
            bool ok = true;
            for (Eigen::Index j = 0; j < n && ok; ++j) {
                Eigen::VectorXd xh = out.x;
                double h = opts.fd_step * std::max(1.0, std::abs(xh[j]));
                xh[j] += h;
                auto rh = residual(map, xh);
                if (!rh) {
                    xh[j] = out.x[j] - h;
                    rh = residual(map, xh);
                    if (!rh) ok = false;
                    else J.col(j) = (*r - *rh) / h;
                } else {
                    J.col(j) = (*rh - *r) / h;
                }
            }
            if (ok) {
                Eigen::VectorXd dx = J.colPivHouseholderQr().solve(-*r);
                if (dx.allFinite()) {
                    double t = 1.0;
                    for (int k = 0; k <= opts.max_halvings; ++k, t *= 0.5) {
                        Eigen::VectorXd xt = out.x + t * dx;
                        auto rt = residual(map, xt);
                        if (sup_norm(rt) < out.residual_norm) {
                            out.x = std::move(xt);
                            r = std::move(rt);
                            stepped = true;
                            break;
                        }
                    }
                }
            }
            if (!stepped && ++out.newton_failures >= opts.newton_failures_before_picard) picard_only = true;
        }

        if (!stepped) {
            // Relaxed Picard step, halved further while it leaves the domain.
            double w = opts.relaxation;
            for (int k = 0; k <= opts.max_halvings; ++k, w *= 0.5) {
                Eigen::VectorXd xt = out.x + w * *r;
                auto rt = residual(map, xt);
                if (rt) {
                    out.x = std::move(xt);
                    r = std::move(rt);
                    stepped = true;
                    break;
                }
            }
            if (!stepped) break;
        }
    }
    out.residual_norm = sup_norm(r);
    out.converged = out.residual_norm <= opts.tol;
    return out;
}

}  // namespace hdmargin
