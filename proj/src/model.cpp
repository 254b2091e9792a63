#include "hdmargin/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace hdmargin {

PopulationModel PopulationModel::balanced(double mu, double sigma, double alpha_total,
                                          std::vector<double> lambdas, std::vector<double> R) {
    PopulationModel m;
    m.mu = mu;
    m.sigma_plus = m.sigma_minus = sigma;
    m.alpha_plus = m.alpha_minus = 0.5 * alpha_total;
    m.lambda_plus = lambdas;
    m.lambda_minus = std::move(lambdas);
    m.R = std::move(R);
    m.validate();
    return m;
}

double PopulationModel::residual_projection_sq() const {
    double s = std::inner_product(R.begin(), R.end(), R.begin(), 0.0);
    return std::max(0.0, 1.0 - s);
}

bool PopulationModel::is_homogeneous(double tol) const {
    auto close = [tol](double x, double y) { return std::abs(x - y) <= tol * std::max(1.0, std::abs(x)); };
    if (!close(sigma_plus, sigma_minus) || !close(alpha_plus, alpha_minus)) return false;
    for (std::size_t k = 0; k < K(); ++k)
        if (!close(lambda_plus[k], lambda_minus[k])) return false;
    return true;
}

PopulationModel PopulationModel::swapped() const {
    PopulationModel s = *this;
    std::swap(s.sigma_plus, s.sigma_minus);
    std::swap(s.alpha_plus, s.alpha_minus);
    std::swap(s.lambda_plus, s.lambda_minus);
    return s;
}

void PopulationModel::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    if (!(mu >= 0) || !std::isfinite(mu)) throw std::invalid_argument("mu must be nonnegative");
    positive(sigma_plus, "sigma_plus");
    positive(sigma_minus, "sigma_minus");
    positive(alpha_plus, "alpha_plus");
    positive(alpha_minus, "alpha_minus");
    if (lambda_plus.size() != R.size() || lambda_minus.size() != R.size())
        throw std::invalid_argument("lambda_plus, lambda_minus and R must all have K entries");
    for (std::size_t k = 0; k < R.size(); ++k) {
        if (!(lambda_plus[k] >= 0) || !(lambda_minus[k] >= 0) || !std::isfinite(lambda_plus[k]) ||
            !std::isfinite(lambda_minus[k]))
            throw std::invalid_argument("spike strengths must be nonnegative");
        if (!(std::abs(R[k]) <= 1.0)) throw std::invalid_argument("R entries must lie in [-1, 1]");
    }
    double s = std::inner_product(R.begin(), R.end(), R.begin(), 0.0);
    if (s > 1.0 + 1e-12) throw std::invalid_argument("sum of R_k^2 exceeds 1");
}

void to_json(nlohmann::json& j, const PopulationModel& m) {
    j = nlohmann::json{{"mu", m.mu},
                       {"sigma_plus", m.sigma_plus},
                       {"sigma_minus", m.sigma_minus},
                       {"alpha_plus", m.alpha_plus},
                       {"alpha_minus", m.alpha_minus},
                       {"K", m.K()},
                       {"lambda_plus", m.lambda_plus},
                       {"lambda_minus", m.lambda_minus},
                       {"R", m.R}};
}

void from_json(const nlohmann::json& j, PopulationModel& m) {
    j.at("mu").get_to(m.mu);
    j.at("sigma_plus").get_to(m.sigma_plus);
    j.at("sigma_minus").get_to(m.sigma_minus);
    j.at("alpha_plus").get_to(m.alpha_plus);
    j.at("alpha_minus").get_to(m.alpha_minus);
    m.lambda_plus = j.value("lambda_plus", std::vector<double>{});
    m.lambda_minus = j.value("lambda_minus", std::vector<double>{});
    m.R = j.value("R", std::vector<double>{});
    if (j.contains("K") && j.at("K").get<std::size_t>() != m.R.size())
        throw std::invalid_argument("K does not match the length of R");
    m.validate();
}

PopulationModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed model file " + path.string() + ": " + e.what());
    }
    try {
        return j.get<PopulationModel>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid model file " + path.string() + ": " + e.what());
    }
}

void save_model(const PopulationModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json(m).dump(2) << '\n';
}

}  // namespace hdmargin
