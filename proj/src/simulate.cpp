#include "hdmargin/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>
#include <thread>

#include "hdmargin/gauss.hpp"

namespace hdmargin {

Noise parse_noise(const std::string& s) {
    if (s == "gaussian") return Noise::Gaussian;
    if (s == "rademacher-scaled" || s == "rademacher") return Noise::RademacherScaled;
    throw std::invalid_argument("unknown noise '" + s + "' (expected gaussian or rademacher-scaled)");
}

std::string to_string(Noise n) { return n == Noise::Gaussian ? "gaussian" : "rademacher-scaled"; }

GeneratorSpec GeneratorSpec::from_model(const PopulationModel& model, int p, std::uint64_t seed, Noise noise) {
    GeneratorSpec s;
    s.model = model;
    s.p = p;
    s.n_plus = static_cast<int>(std::lround(model.alpha_plus * p));
    s.n_minus = static_cast<int>(std::lround(model.alpha_minus * p));
    // Keep the theory side exactly at n+-/p.
    s.model.alpha_plus = static_cast<double>(s.n_plus) / p;
    s.model.alpha_minus = static_cast<double>(s.n_minus) / p;
    s.noise = noise;
    s.seed = seed;
    s.validate();
    return s;
}

void GeneratorSpec::validate() const {
    model.validate();
    if (p <= 0) throw std::invalid_argument("p must be positive");
    if (n_plus <= 0 || n_minus <= 0) throw std::invalid_argument("both classes need at least one sample");
    if (static_cast<int>(model.K()) >= p) throw std::invalid_argument("K must be smaller than p");
}

namespace {

using Rng = std::mt19937_64;

Basis basis_from(const GeneratorSpec& spec, Rng& rng) {
    const int p = spec.p;
    const int K = static_cast<int>(spec.model.K());
    std::normal_distribution<double> normal;
    // Columns 0..K-1 are the spikes, column K the residual direction.
    Eigen::MatrixXd Q(p, K + 1);
    for (int k = 0; k <= K; ++k) {
        Eigen::VectorXd v(p);
        for (int j = 0; j < p; ++j) v[j] = normal(rng);
        // Two Gram-Schmidt passes for numerical orthogonality.
        for (int pass = 0; pass < 2; ++pass)
            for (int i = 0; i < k; ++i) v -= Q.col(i).dot(v) * Q.col(i);
        Q.col(k) = v.normalized();
    }
    Basis b;
    b.V = Q.leftCols(K);
    b.mu_hat = std::sqrt(spec.model.residual_projection_sq()) * Q.col(K);
    for (int k = 0; k < K; ++k) b.mu_hat += spec.model.R[k] * Q.col(k);
    return b;
}

void fill_class(Eigen::MatrixXd& X, int row0, int rows, double sign, double sigma, const std::vector<double>& lambdas,
                const Basis& basis, const GeneratorSpec& spec, Rng& rng) {
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin;
    const Eigen::VectorXd mean = sign * spec.model.mu * basis.mu_hat;
    for (int i = 0; i < rows; ++i) {
        auto x = X.row(row0 + i);
        for (int j = 0; j < spec.p; ++j)
            x[j] = spec.noise == Noise::Gaussian ? sigma * normal(rng) : (coin(rng) ? sigma : -sigma);
        for (std::size_t k = 0; k < lambdas.size(); ++k)
            x += (sigma * std::sqrt(lambdas[k]) * normal(rng)) * basis.V.col(k).transpose();
        x += mean.transpose();
    }
}

}  // namespace

Basis make_basis(const GeneratorSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    return basis_from(spec, rng);
}

int Dataset::count(int label) const {
    int c = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) c += y[i] == label;
    return c;
}

Eigen::MatrixXd Dataset::rows_with(int label) const {
    Eigen::MatrixXd out(count(label), X.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] == label) out.row(r++) = X.row(i);
    return out;
}

void Dataset::validate() const {
    if (X.rows() != y.size()) throw std::invalid_argument("feature rows and labels differ in length");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 1.0 && y[i] != -1.0) throw std::invalid_argument("labels must be +1 or -1");
    if (count(1) == 0 || count(-1) == 0) throw std::invalid_argument("dataset must contain both classes");
    if (!X.allFinite()) throw std::invalid_argument("features must be finite");
}

Dataset generate(const GeneratorSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Basis basis = basis_from(spec, rng);
    Dataset d;
    d.X.resize(spec.n_plus + spec.n_minus, spec.p);
    d.y.resize(spec.n_plus + spec.n_minus);
    d.y.head(spec.n_plus).setOnes();
    d.y.tail(spec.n_minus).setConstant(-1.0);
    fill_class(d.X, 0, spec.n_plus, 1.0, spec.model.sigma_plus, spec.model.lambda_plus, basis, spec, rng);
    fill_class(d.X, spec.n_plus, spec.n_minus, -1.0, spec.model.sigma_minus, spec.model.lambda_minus, basis, spec,
               rng);
    d.provenance = spec;
    return d;
}

double training_objective(const Dataset& data, const Loss& loss, double lambda, const Eigen::VectorXd& w, double w0,
                          bool sqrt_p_scaling) {
    const double scale = sqrt_p_scaling ? 1.0 / std::sqrt(static_cast<double>(data.p())) : 1.0;
    Eigen::VectorXd margins = (data.X * w * scale).array() + w0;
    double total = 0.5 * lambda * w.squaredNorm();
    for (Eigen::Index i = 0; i < margins.size(); ++i) total += loss.evaluate(data.y[i] * margins[i]);
    return total;
}

namespace {

// With w fixed the objective is convex in w0, and flat on an interval when the
// loss has linear pieces. Picks the point of the minimizing interval closest to
// the midpoint between the two class centroids' projections, so a symmetric
// flat problem gets the symmetric intercept. `a` holds y_i x_i'w / sqrt(p).
double center_intercept(const Loss& loss, const Eigen::VectorXd& a, const Eigen::VectorXd& y, double w0) {
    const double tol = 1e-10 * static_cast<double>(a.size());
    auto slope = [&](double t) {
        double h = 0;
        for (Eigen::Index i = 0; i < a.size(); ++i) h += y[i] * loss.derivative(a[i] + y[i] * t);
        return h;
    };
    // Largest t with pred(t) false, given pred is monotone false -> true.
    auto edge = [&](auto pred, double lo, double hi) {
        for (int k = 0; k < 200 && hi - lo > 1e-15 * (1 + std::abs(lo)); ++k) {
            double mid = 0.5 * (lo + hi);
            (pred(mid) ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi);
    };
    auto not_falling = [&](double t) { return slope(t) >= -tol; };
    auto rising = [&](double t) { return slope(t) > tol; };
    double lo = w0 - 1, hi = w0 + 1;
    for (double step = 1; not_falling(lo) && step < 1e12; step *= 2) lo -= step;
    for (double step = 1; !rising(hi) && step < 1e12; step *= 2) hi += step;
    if (not_falling(lo) || !rising(hi)) return w0;
    double sum_plus = 0, sum_minus = 0;
    int n_plus = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (y[i] > 0) {
            sum_plus += a[i];
            ++n_plus;
        } else {
            sum_minus += a[i];
        }
    }
    const int n_minus = static_cast<int>(a.size()) - n_plus;
    if (n_plus == 0 || n_minus == 0) return w0;
    const double centroid = -0.5 * (sum_plus / n_plus - sum_minus / n_minus);
    return std::clamp(centroid, edge(not_falling, lo, hi), edge(rising, lo, hi));
}

}  // namespace

FittedClassifier train(const Dataset& data, const Loss& loss, double lambda, const TrainOptions& opts,
                       const FittedClassifier* warm) {
    if (!(lambda > 0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
    const int n = data.n(), p = data.p();
    if (n == 0 || p == 0) throw std::invalid_argument("empty dataset");
    if (warm && warm->w.size() != p) throw std::invalid_argument("warm start has the wrong dimension");

    // A = diag(y) [X s, 1], theta = (w, w0).
    const double s = opts.sqrt_p_scaling ? 1.0 / std::sqrt(static_cast<double>(p)) : 1.0;
    Eigen::MatrixXd A(n, p + 1);
    A.leftCols(p) = data.y.asDiagonal() * data.X * s;
    A.col(p) = data.y;
    const Eigen::MatrixXd AtA = A.transpose() * A;

    double rho = warm ? warm->rho : opts.rho;
    Eigen::LLT<Eigen::MatrixXd> llt;
    auto factor = [&] {
        Eigen::MatrixXd M = rho * AtA;
        M.diagonal().head(p).array() += lambda;
        llt.compute(M);
        if (llt.info() != Eigen::Success) throw std::runtime_error("ridge system is not positive definite");
    };
    factor();

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
    if (warm) {
        theta.head(p) = warm->w;
        theta[p] = warm->w0;
    }
    Eigen::VectorXd Atheta = A * theta;
    Eigen::VectorXd u = Atheta, d = Eigen::VectorXd::Zero(n);
    if (warm && warm->dual.size() == n) d = warm->dual / rho;
    else if (warm)
        for (int i = 0; i < n; ++i) d[i] = loss.derivative(u[i]) / rho;

    FittedClassifier fit;
    fit.lambda = lambda;
    fit.loss = loss;
    Eigen::VectorXd u_prev(n);
    int it = 0, rho_updates = 0;
    double r_norm = 0, s_norm = 0, eps_pri = 0, eps_dual = 0;
    for (; it < opts.max_iter; ++it) {
        theta = llt.solve(rho * (A.transpose() * (u - d)));
        Atheta.noalias() = A * theta;
        u_prev = u;
        const double bb = 1.0 / rho;
        for (int i = 0; i < n; ++i) u[i] = loss.prox(Atheta[i] + d[i], bb);
        d += Atheta - u;

        r_norm = (Atheta - u).norm();
        s_norm = rho * (A.transpose() * (u - u_prev)).norm();
        eps_pri = opts.tol * (1.0 + std::max(Atheta.norm(), u.norm()));
        eps_dual = opts.tol * (1.0 + rho * (A.transpose() * d).norm());
        if (r_norm <= eps_pri && s_norm <= eps_dual) {
            fit.converged = true;
            ++it;
            break;
        }
        // Balancing stops after a fixed budget so plain ADMM's convergence applies.
        if (rho_updates >= opts.max_rho_updates) continue;
        if (r_norm > opts.balance_ratio * s_norm) {
            ++rho_updates;
            rho *= 2.0;
            d /= 2.0;
            factor();
        } else if (s_norm > opts.balance_ratio * r_norm) {
            ++rho_updates;
            rho /= 2.0;
            d *= 2.0;
            factor();
        }
    }
    fit.w = theta.head(p);
    fit.w0 = center_intercept(loss, A.leftCols(p) * fit.w, data.y, theta[p]);
    fit.rho = rho;
    fit.dual = rho * d;
    fit.iterations = it;
    fit.kkt_residual = std::max(r_norm / (1.0 + std::max(Atheta.norm(), u.norm())),
                                s_norm / (1.0 + rho * (A.transpose() * d).norm()));
    fit.objective = training_objective(data, loss, lambda, fit.w, fit.w0, opts.sqrt_p_scaling);
    return fit;
}

ClassPrecision population_precision(const FittedClassifier& fit, const GeneratorSpec& spec, const Basis& basis,
                                    int test_draws) {
    if (fit.w.size() != spec.p) throw std::invalid_argument("classifier dimension does not match the generator");
    const double wn2 = fit.w.squaredNorm();
    if (!(wn2 > 0)) throw std::invalid_argument("population precision is undefined for w = 0");
    const double sp = std::sqrt(static_cast<double>(spec.p));
    const double signal = spec.model.mu * basis.mu_hat.dot(fit.w) / sp;
    const Eigen::VectorXd proj = basis.V.transpose() * fit.w;

    auto spike_var = [&](const std::vector<double>& lambdas) {
        double v = 0.0;
        for (std::size_t k = 0; k < lambdas.size(); ++k) v += lambdas[k] * proj[k] * proj[k];
        return v;
    };

    ClassPrecision out;
    if (spec.noise == Noise::Gaussian) {
        const double sd_plus = spec.model.sigma_plus * std::sqrt((wn2 + spike_var(spec.model.lambda_plus)) / spec.p);
        const double sd_minus =
            spec.model.sigma_minus * std::sqrt((wn2 + spike_var(spec.model.lambda_minus)) / spec.p);
        out.plus = normal_cdf((signal + fit.w0) / sd_plus);
        out.minus = normal_cdf((signal - fit.w0) / sd_minus);
        return out;
    }

    // Fresh test draws from a stream disjoint from the training data.
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x7e57u};
    Rng rng(seq);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin;
    auto draw = [&](double sign, double sigma, const std::vector<double>& lambdas) {
        int correct = 0;
        for (int t = 0; t < test_draws; ++t) {
            double m = 0.0;
            for (int j = 0; j < spec.p; ++j) m += (coin(rng) ? sigma : -sigma) * fit.w[j];
            for (std::size_t k = 0; k < lambdas.size(); ++k) m += sigma * std::sqrt(lambdas[k]) * normal(rng) * proj[k];
            m = sign * (m / sp + sign * signal + fit.w0);
            correct += m > 0;
        }
        return static_cast<double>(correct) / test_draws;
    };
    out.plus = draw(1.0, spec.model.sigma_plus, spec.model.lambda_plus);
    out.minus = draw(-1.0, spec.model.sigma_minus, spec.model.lambda_minus);
    return out;
}

ClassPrecision population_precision(const FittedClassifier& fit, const GeneratorSpec& spec) {
    return population_precision(fit, spec, make_basis(spec));
}

std::vector<McPoint> monte_carlo_curve(const GeneratorSpec& spec, const Loss& loss, const std::vector<double>& grid,
                                       const McOptions& opts) {
    spec.validate();
    if (opts.reps < 2) throw std::invalid_argument("Monte Carlo needs at least two replicates");
    if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
    const std::size_t G = grid.size();
    const int reps = opts.reps;

    struct Cell {
        ClassPrecision prec;
        bool ok = false;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(reps) * G);

    auto run = [&](int r) {
        GeneratorSpec rs = spec;
        rs.seed = spec.seed + static_cast<std::uint64_t>(r);
        Dataset data = generate(rs);
        Basis basis = make_basis(rs);
        std::optional<FittedClassifier> warm;
        for (std::size_t j = G; j-- > 0;) {
            FittedClassifier fit = train(data, loss, grid[j], opts.train, warm ? &*warm : nullptr);
            Cell& c = cells[static_cast<std::size_t>(r) * G + j];
            c.ok = fit.converged && fit.w.squaredNorm() > 0;
            if (c.ok) c.prec = population_precision(fit, rs, basis);
            warm = fit;
        }
    };

    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, reps);
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (int r; !failed && (r = next++) < reps;) {
            try {
                run(r);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<McPoint> out(G);
    for (std::size_t j = 0; j < G; ++j) {
        McPoint& pt = out[j];
        pt.lambda = grid[j];
        double sum = 0, sp = 0, sm = 0;
        for (int r = 0; r < reps; ++r) {
            const Cell& c = cells[static_cast<std::size_t>(r) * G + j];
            if (!c.ok) continue;
            ++pt.reps_converged;
            const double v = c.prec.balanced();
            sum += v;
            sp += c.prec.plus;
            sm += c.prec.minus;
        }
        const int m = pt.reps_converged;
        if (m == 0) {
            pt.mean = pt.se = pt.mean_plus = pt.mean_minus = std::nan("");
            continue;
        }
        pt.mean = sum / m;
        pt.mean_plus = sp / m;
        pt.mean_minus = sm / m;
        if (m > 1) {
            // Two-pass variance for accuracy.
            double ss = 0;
            for (int r = 0; r < reps; ++r) {
                const Cell& c = cells[static_cast<std::size_t>(r) * G + j];
                if (c.ok) ss += (c.prec.balanced() - pt.mean) * (c.prec.balanced() - pt.mean);
            }
            pt.se = std::sqrt(ss / (m - 1) / m);
        } else {
            pt.se = std::nan("");
        }
    }
    return out;
}

}  // namespace hdmargin
