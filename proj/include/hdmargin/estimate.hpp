#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hdmargin/model.hpp"
#include "hdmargin/simulate.hpp"

namespace hdmargin {

// MAD of N(0, 1), Phi^{-1}(3/4).
inline constexpr double kNormalMad = 0.6744897501960817;

// MAD over every entry of the matrix divided by kNormalMad.
// Throws std::invalid_argument on an empty matrix or zero MAD.
double estimate_sigma(const Eigen::MatrixXd& entries);

// 1/2 sqrt(|mu_c|^2 - sigma+^2/alpha+ - sigma-^2/alpha-), radicand clamped at
// zero with a warning appended to `warnings` when given.
double estimate_mu(double mean_diff_norm, double sigma_plus, double sigma_minus, double alpha_plus,
                   double alpha_minus, std::vector<std::string>* warnings = nullptr);

// Detection threshold (1 + sqrt(1/alpha))^2 - 1 on the centered spectrum.
double spike_threshold(double alpha);

// Spike strength whose sample eigenvalue (minus one) is `raw`:
// 1/2 (raw - 1/alpha + sqrt((raw - 1/alpha)^2 - 4/alpha)). NaN below the
// threshold.
double debias_eigenvalue(double raw, double alpha);

// Limiting |cos| between a sample eigenvector and its population spike,
// sqrt((1 - 1/(alpha l^2)) / (1 + 1/(alpha l))). Empty when not positive.
std::optional<double> eigenvector_cosine(double lambda, double alpha);

struct SpikeEstimate {
    double raw = 0.0;     // retained sample eigenvalue minus one
    double lambda = 0.0;  // debiased strength
    double R = 0.0;       // debiased projection on the mean difference
};

// `standardized` holds class-mean-centered rows already divided by sigma_hat;
// `dof` is the covariance divisor. R_k = |mean_diff' v_k| / (signal_norm P),
// where signal_norm estimates the noise-free |mean_diff| = 2 mu; the noise
// in mean_diff is nearly orthogonal to every sample eigenvector.
std::vector<SpikeEstimate> estimate_spikes(const Eigen::MatrixXd& standardized, double dof, double alpha,
                                           const Eigen::VectorXd& mean_diff, double signal_norm,
                                           std::vector<std::string>* warnings = nullptr);

struct EstimateOptions {
    bool homogeneous = false;  // pool the two centered classes
};

struct EstimationReport {
    PopulationModel model;
    std::vector<double> sample_eigs_plus;
    std::vector<double> sample_eigs_minus;
    double threshold_plus = 0.0;
    double threshold_minus = 0.0;
    bool homogeneous = false;
    double mean_diff_norm = 0.0;
    std::vector<std::string> warnings;
};

// Full pipeline on a labeled matrix. In homogeneous mode the spikes come
// from the pooled spectrum (both eigenvalue lists hold the same values);
// otherwise class + spikes get lambda- = 0 and vice versa.
EstimationReport estimate_model(const Dataset& data, const EstimateOptions& opts = {});

void to_json(nlohmann::json& j, const EstimationReport& r);

}  // namespace hdmargin
