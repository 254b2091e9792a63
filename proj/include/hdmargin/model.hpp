#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace hdmargin {

// Parameters of the two-class spiked population model
//
//   x+ =  mu mu_hat + sum_k sigma+ sqrt(lambda+_k) v_k z_k + eps+
//   x- = -mu mu_hat + sum_k sigma- sqrt(lambda-_k) v_k z_k + eps-
//
// with orthonormal v_k, R_k = v_k' mu_hat and alpha+- = n+- / p. The residual
// projection R_{K+1} = sqrt(1 - sum R_k^2) is always derived, never stored.
struct PopulationModel {
    double mu = 0.0;
    double sigma_plus = 1.0;
    double sigma_minus = 1.0;
    double alpha_plus = 0.5;
    double alpha_minus = 0.5;
    std::vector<double> lambda_plus;
    std::vector<double> lambda_minus;
    std::vector<double> R;

    // Shared-covariance, balanced-class model. `alpha_total` is n/p; each
    // class gets half of it.
    static PopulationModel balanced(double mu, double sigma, double alpha_total,
                                    std::vector<double> lambdas = {}, std::vector<double> R = {});

    std::size_t K() const { return R.size(); }
    double alpha_total() const { return alpha_plus + alpha_minus; }
    // R_{K+1}^2 = 1 - sum_k R_k^2, clamped at zero against rounding.
    double residual_projection_sq() const;

    // sigma+ = sigma-, alpha+ = alpha-, lambda+_k = lambda-_k.
    bool is_homogeneous(double tol = 0.0) const;

    // Exchanges the roles of the two classes.
    PopulationModel swapped() const;

    // Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

void to_json(nlohmann::json& j, const PopulationModel& m);
void from_json(const nlohmann::json& j, PopulationModel& m);

PopulationModel load_model(const std::filesystem::path& path);
void save_model(const PopulationModel& m, const std::filesystem::path& path);

}  // namespace hdmargin
