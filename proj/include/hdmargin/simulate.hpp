#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hdmargin/loss.hpp"
#include "hdmargin/model.hpp"

namespace hdmargin {

enum class Noise { Gaussian, RademacherScaled };

Noise parse_noise(const std::string& s);
std::string to_string(Noise n);

struct GeneratorSpec {
    PopulationModel model;
    int p = 0;
    int n_plus = 0;
    int n_minus = 0;
    Noise noise = Noise::Gaussian;
    std::uint64_t seed = 0;

    // n+- = round(alpha+- p).
    static GeneratorSpec from_model(const PopulationModel& model, int p, std::uint64_t seed,
                                    Noise noise = Noise::Gaussian);
    // Throws std::invalid_argument on K >= p, sum R_k^2 > 1 or empty classes.
    void validate() const;
};

// Orthonormal spike directions (columns of V) and the unit signal direction
// mu_hat = sum_k R_k v_k + R_{K+1} u, all drawn from the spec's seed.
struct Basis {
    Eigen::MatrixXd V;
    Eigen::VectorXd mu_hat;
};

Basis make_basis(const GeneratorSpec& spec);

struct Dataset {
    Eigen::MatrixXd X;  // n x p
    Eigen::VectorXd y;  // +1 / -1
    std::optional<GeneratorSpec> provenance;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    int count(int label) const;
    // Rows with the given label, in order.
    Eigen::MatrixXd rows_with(int label) const;
    // Throws unless labels are +-1, both classes occur and sizes agree.
    void validate() const;
};

// Class + rows first, then class - rows. Bit-identical for a given spec.
Dataset generate(const GeneratorSpec& spec);

struct TrainOptions {
    double tol = 1e-8;        // primal and dual residuals <= tol (1 + scale)
    int max_iter = 100000;
    double rho = 1.0;
    double balance_ratio = 10.0;
    int max_rho_updates = 50;
    bool sqrt_p_scaling = true;  // margins x'w / sqrt(p) + w0
};

struct FittedClassifier {
    Eigen::VectorXd w;
    double w0 = 0.0;
    double lambda = 0.0;
    Loss loss = Loss::svm();
    double kkt_residual = 0.0;
    double objective = 0.0;
    // Final penalty and unscaled multipliers of u = A theta, reused by warm starts.
    double rho = 1.0;
    Eigen::VectorXd dual;
    bool converged = false;
    int iterations = 0;
};

// sum_i V(y_i (x_i'w / sqrt(p) + w0)) + lambda/2 |w|^2.
double training_objective(const Dataset& data, const Loss& loss, double lambda, const Eigen::VectorXd& w, double w0,
                          bool sqrt_p_scaling = true);

// Consensus ADMM: u = A theta with A = diag(y) [X / sqrt(p), 1]; the u-step
// is the loss prox with parameter 1/rho, the theta-step a ridge solve with a
// cached Cholesky factor. Residual balancing rescales rho by 2.
FittedClassifier train(const Dataset& data, const Loss& loss, double lambda, const TrainOptions& opts = {},
                       const FittedClassifier* warm = nullptr);

struct ClassPrecision {
    double plus = 0.5;
    double minus = 0.5;
    double balanced() const { return 0.5 * (plus + minus); }
};

// Exact class-conditional accuracy of the rule sign(x'w / sqrt(p) + w0)
// under the generating population; a 1e5-draw test set per class for
// non-Gaussian noise. Throws on w = 0.
ClassPrecision population_precision(const FittedClassifier& fit, const GeneratorSpec& spec, const Basis& basis,
                                    int test_draws = 100000);
ClassPrecision population_precision(const FittedClassifier& fit, const GeneratorSpec& spec);

struct McPoint {
    double lambda = 0.0;
    double mean = 0.0;      // balanced precision
    double se = 0.0;
    double mean_plus = 0.0;
    double mean_minus = 0.0;
    int reps_converged = 0;
};

struct McOptions {
    int reps = 100;
    int threads = 0;  // 0: hardware concurrency
    TrainOptions train{};
};

// Replicate r draws its data from seed + r and trains along the grid from
// the largest lambda down with warm starts. Means and standard errors are
// taken over replicates whose fit converged.
std::vector<McPoint> monte_carlo_curve(const GeneratorSpec& spec, const Loss& loss, const std::vector<double>& grid,
                                       const McOptions& opts = {});

}  // namespace hdmargin
