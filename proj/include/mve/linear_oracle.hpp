#pragma once
// Closed-form linear-model results used as ground truth: OLS versus GLS under
// heteroscedastic noise, ridge regression and its optimal constant for a mean
// model and for a log-variance model, and the digamma-corrected log-squared-
// residual transform.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mve/rng.hpp"

namespace mve::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kEulerGamma = 0.57721566490153286061;

// Y = X beta + U, U ~ N(0, Sigma).
struct LinearProblem {
    MatrixXd X;
    VectorXd beta;
    MatrixXd Sigma;

    // Throws ConfigError on inconsistent shapes.
    void validate() const;
};

// y_i = mu_i + e_i with e_i ~ N(0, exp(x_i' beta_tilde)).
struct LogVarProblem {
    MatrixXd X;
    VectorXd beta_tilde;
    VectorXd mu;
};

// Least squares by column-pivoted QR. Throws ConfigError when X is rank
// deficient or shapes disagree.
VectorXd ols_estimate(const MatrixXd& X, const VectorXd& Y);

// Whitens with the Cholesky factor B (B B' = Sigma) and solves least squares.
// Throws ConfigError when Sigma is not symmetric positive definite.
VectorXd gls_estimate(const MatrixXd& X, const VectorXd& Y, const MatrixXd& Sigma);

// Weighted least squares with weights w_i, solved through the normal equations.
VectorXd wls_estimate(const MatrixXd& X, const VectorXd& Y, const VectorXd& weights);

// (X'X + lambda I)^-1 X'Y. Throws ConfigError for lambda < 0.
VectorXd ridge_estimate(const MatrixXd& X, const VectorXd& Y, double lambda);

// E|beta - beta_hat(lambda)|^2 for orthonormal X (X'X = I) and iid noise of
// variance sigma2: (|beta|^2 lambda^2 + p sigma2) / (1 + lambda)^2.
double ridge_mse(const VectorXd& beta, double sigma2, double lambda);

// p sigma2 / |beta|^2. Throws ConfigError when beta = 0.
double optimal_lambda_mean(std::size_t p, double sigma2, const VectorXd& beta);

// p Var(eps_tilde) / |beta_tilde|^2. Throws ConfigError when beta_tilde = 0.
double optimal_lambda_logvar(std::size_t p, double var_eps_tilde, const VectorXd& beta_tilde);

// Recurrence up to x >= 10, then the asymptotic series. x > 0.
double digamma(double x);
double trigamma(double x);

// psi(1/2) + log 2 = -gamma - log 2, the mean of log chi^2_1.
double logvar_constant();
// Var(log chi^2_1) = trigamma(1/2) = pi^2 / 2.
double logvar_noise_variance();

// z_i = log((y_i - mu_i)^2) - C, the squared residual clamped at 1e-300.
VectorXd logvar_targets(const VectorXd& y, const VectorXd& mu);

// n x p matrix with orthonormal columns, from the QR of a Gaussian matrix.
MatrixXd random_orthonormal(std::size_t n, std::size_t p, Rng& rng);

// Draws U ~ N(0, Sigma) through the Cholesky factor of Sigma.
VectorXd sample_noise(const MatrixXd& sigma_factor, Rng& rng);

struct MonteCarloEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Empirical covariances of the OLS and GLS estimates over repeated noise
// draws on a fixed design.
struct GaussMarkovCheck {
    MatrixXd cov_ols;
    MatrixXd cov_gls;
    VectorXd mean_ols;
    VectorXd mean_gls;
    double min_eigenvalue = 0.0;  // of cov_ols - cov_gls
    double max_eigenvalue = 0.0;
};

GaussMarkovCheck gauss_markov_check(const LinearProblem& problem, std::size_t draws, std::uint64_t seed);

// Expected difference in squared prediction error between OLS and GLS for a
// fresh point (a design row chosen uniformly, with its own noise variance).
struct ErrorGap {
    MonteCarloEstimate direct;  // mean of (y - x'b_ols)^2 - (y - x'b_gls)^2
    // x'(M_ols - M_gls)x averaged over the same fresh rows, with M the
    // empirical second moment of the estimation error.
    double via_covariance = 0.0;
};

// Throws ConfigError when draws < 1000.
ErrorGap quadratic_error_gap(const LinearProblem& problem, std::size_t draws, std::uint64_t seed);

// Monte Carlo E|beta - ridge(lambda)|^2 at every grid value, with common
// random numbers across the grid.
std::vector<double> ridge_mse_monte_carlo(const MatrixXd& X, const VectorXd& beta, double sigma2,
                                          const std::vector<double>& lambdas, std::size_t draws, std::uint64_t seed);

// Same for the ridge regression of logvar_targets on X.
std::vector<double> logvar_ridge_mse_monte_carlo(const LogVarProblem& problem, const std::vector<double>& lambdas,
                                                 std::size_t draws, std::uint64_t seed);

// Samples y ~ N(mu, sigma2) and summarizes eps = z - log(sigma2).
struct LogVarResidualCheck {
    MonteCarloEstimate residual_mean;
    double residual_variance = 0.0;
};

LogVarResidualCheck logvar_residual_check(double mu, double sigma2, std::size_t draws, std::uint64_t seed);

// One line of the verification table printed by the oracle command.
struct OracleCheck {
    std::string name;
    double estimate = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

struct OracleSuiteOptions {
    std::uint64_t seed = 20240601;
    std::size_t gauss_markov_draws = 2000;
    std::size_t gap_draws = 4000;
    std::size_t ridge_draws = 5000;
    std::size_t logvar_draws = 1000000;
    double grid_step = 0.05;
};

// Gauss-Markov dominance and the error gap on three heteroscedastic designs,
// the mean-ridge optimum on three orthonormal problems, the log-variance
// target moments, the log-variance ridge optimum, and the digamma constants.
std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& options = {});

}  // namespace mve::oracle
