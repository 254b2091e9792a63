#include "hdmargin/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hdmargin {

namespace {

double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

Eigen::MatrixXd center_rows(const Eigen::MatrixXd& X) {
    return X.rowwise() - X.colwise().mean();
}

}  // namespace

double estimate_sigma(const Eigen::MatrixXd& entries) {
    if (entries.size() == 0) throw std::invalid_argument("cannot estimate sigma from an empty matrix");
    std::vector<double> v(entries.data(), entries.data() + entries.size());
    const double med = median_inplace(v);
    for (double& x : v) x = std::abs(x - med);
    const double mad = median_inplace(v);
    if (!(mad > 0)) throw std::invalid_argument("median absolute deviation is zero; sigma cannot be estimated");
    return mad / kNormalMad;
}

double estimate_mu(double mean_diff_norm, double sigma_plus, double sigma_minus, double alpha_plus,
                   double alpha_minus, std::vector<std::string>* warnings) {
    if (!(alpha_plus > 0) || !(alpha_minus > 0)) throw std::invalid_argument("alpha must be positive");
    const double radicand = mean_diff_norm * mean_diff_norm - sigma_plus * sigma_plus / alpha_plus -
                            sigma_minus * sigma_minus / alpha_minus;
    if (radicand <= 0) {
        if (warnings) warnings->push_back("mean difference is within noise level; mu clamped to 0");
        return 0.0;
    }
    return 0.5 * std::sqrt(radicand);
}

double spike_threshold(double alpha) {
    const double edge = 1.0 + std::sqrt(1.0 / alpha);
    return edge * edge - 1.0;
}

double debias_eigenvalue(double raw, double alpha) {
    const double g = 1.0 / alpha;
    const double disc = (raw - g) * (raw - g) - 4.0 * g;
    // Rounding at the boundary may leave a tiny negative discriminant.
    if (disc < -1e-12 * 4.0 * g || raw < g) return std::numeric_limits<double>::quiet_NaN();
    return 0.5 * (raw - g + std::sqrt(std::max(disc, 0.0)));
}

std::optional<double> eigenvector_cosine(double lambda, double alpha) {
    const double num = 1.0 - 1.0 / (alpha * lambda * lambda);
    const double den = 1.0 + 1.0 / (alpha * lambda);
    if (!(num > 0) || !(den > 0)) return std::nullopt;
    return std::sqrt(num / den);
}

std::vector<SpikeEstimate> estimate_spikes(const Eigen::MatrixXd& standardized, double dof, double alpha,
                                           const Eigen::VectorXd& mean_diff, double signal_norm,
                                           std::vector<std::string>* warnings) {
    const Eigen::Index n = standardized.rows(), p = standardized.cols();
    if (n < 2 || p < 1) throw std::invalid_argument("need at least two rows to estimate spikes");
    if (mean_diff.size() != p) throw std::invalid_argument("mean difference has the wrong dimension");
    if (!(dof > 0)) throw std::invalid_argument("covariance divisor must be positive");
    const double threshold = spike_threshold(alpha);

    // Nonzero spectrum from the smaller of the two Gram matrices.
    Eigen::VectorXd evals;
    Eigen::MatrixXd evecs;  // p x r, unit columns
    if (n < p) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(standardized * standardized.transpose() / dof);
        evals = es.eigenvalues();
        evecs = standardized.transpose() * es.eigenvectors();
        for (Eigen::Index k = 0; k < evecs.cols(); ++k) {
            double nk = evecs.col(k).norm();
            if (nk > 0) evecs.col(k) /= nk;
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(standardized.transpose() * standardized / dof);
        evals = es.eigenvalues();
        evecs = es.eigenvectors();
    }

    std::vector<SpikeEstimate> out;
    for (Eigen::Index k = evals.size(); k-- > 0;) {
        const double raw = evals[k] - 1.0;
        if (!(raw > threshold)) break;
        SpikeEstimate s;
        s.raw = raw;
        s.lambda = debias_eigenvalue(raw, alpha);
        auto cosine = eigenvector_cosine(s.lambda, alpha);
        if (!cosine || !(s.lambda >= 0)) {
            if (warnings)
                warnings->push_back("spike with sample eigenvalue " + std::to_string(raw) +
                                    " is too close to the threshold and was dropped");
            continue;
        }
        double proj = signal_norm > 0 ? std::abs(mean_diff.dot(evecs.col(k))) / signal_norm : 0.0;
        s.R = std::clamp(proj / *cosine, -1.0, 1.0);
        out.push_back(s);
    }
    return out;
}

EstimationReport estimate_model(const Dataset& data, const EstimateOptions& opts) {
    data.validate();
    EstimationReport rep;
    rep.homogeneous = opts.homogeneous;
    const Eigen::MatrixXd Xp = data.rows_with(1), Xm = data.rows_with(-1);
    const double p = data.p();
    const double ap = Xp.rows() / p, am = Xm.rows() / p;
    if (Xp.rows() < 2 || Xm.rows() < 2) throw std::invalid_argument("each class needs at least two rows");

    const Eigen::VectorXd mean_diff = (Xp.colwise().mean() - Xm.colwise().mean()).transpose();
    rep.mean_diff_norm = mean_diff.norm();

    PopulationModel& m = rep.model;
    m.alpha_plus = ap;
    m.alpha_minus = am;

    if (opts.homogeneous) {
        Eigen::MatrixXd both(data.n(), data.p());
        both << Xp, Xm;
        const double sigma = estimate_sigma(both);
        m.sigma_plus = m.sigma_minus = sigma;
        m.mu = estimate_mu(rep.mean_diff_norm, sigma, sigma, ap, am, &rep.warnings);
        Eigen::MatrixXd centered(data.n(), data.p());
        centered << center_rows(Xp), center_rows(Xm);
        centered /= sigma;
        const double alpha = ap + am;
        rep.threshold_plus = rep.threshold_minus = spike_threshold(alpha);
        auto spikes = estimate_spikes(centered, data.n() - 2.0, alpha, mean_diff, 2 * m.mu, &rep.warnings);
        for (const auto& s : spikes) {
            rep.sample_eigs_plus.push_back(s.raw);
            m.lambda_plus.push_back(s.lambda);
            m.R.push_back(s.R);
        }
        rep.sample_eigs_minus = rep.sample_eigs_plus;
        m.lambda_minus = m.lambda_plus;
    } else {
        m.sigma_plus = estimate_sigma(Xp);
        m.sigma_minus = estimate_sigma(Xm);
        m.mu = estimate_mu(rep.mean_diff_norm, m.sigma_plus, m.sigma_minus, ap, am, &rep.warnings);
        rep.threshold_plus = spike_threshold(ap);
        rep.threshold_minus = spike_threshold(am);
        auto sp = estimate_spikes(center_rows(Xp) / m.sigma_plus, Xp.rows() - 1.0, ap, mean_diff, 2 * m.mu, &rep.warnings);
        auto sm = estimate_spikes(center_rows(Xm) / m.sigma_minus, Xm.rows() - 1.0, am, mean_diff, 2 * m.mu, &rep.warnings);
        for (const auto& s : sp) {
            rep.sample_eigs_plus.push_back(s.raw);
            m.lambda_plus.push_back(s.lambda);
            m.lambda_minus.push_back(0.0);
            m.R.push_back(s.R);
        }
        for (const auto& s : sm) {
            rep.sample_eigs_minus.push_back(s.raw);
            m.lambda_plus.push_back(0.0);
            m.lambda_minus.push_back(s.lambda);
            m.R.push_back(s.R);
        }
    }

    double norm2 = 0.0;
    for (double r : m.R) norm2 += r * r;
    if (norm2 > 1.0) {
        const double scale = (1.0 - 1e-6) / std::sqrt(norm2);
        for (double& r : m.R) r *= scale;
        rep.warnings.push_back("estimated projections had sum of squares " + std::to_string(norm2) +
                               " > 1 and were rescaled");
    }
    m.validate();
    return rep;
}

void to_json(nlohmann::json& j, const EstimationReport& r) {
    j = nlohmann::json{{"model", r.model},
                       {"sample_eigs_plus", r.sample_eigs_plus},
                       {"sample_eigs_minus", r.sample_eigs_minus},
                       {"threshold_plus", r.threshold_plus},
                       {"threshold_minus", r.threshold_minus},
                       {"homogeneous", r.homogeneous},
                       {"mean_diff_norm", r.mean_diff_norm},
                       {"warnings", r.warnings}};
}

}  // namespace hdmargin
