#include "mve/linear_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "mve/errors.hpp"

namespace mve::oracle {

void LinearProblem::validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw ConfigError("empty design matrix");
    if (beta.size() != X.cols()) throw ConfigError("beta length does not match X");
    if (Sigma.rows() != X.rows() || Sigma.cols() != X.rows()) throw ConfigError("Sigma must be n x n");
}

VectorXd ols_estimate(const MatrixXd& X, const VectorXd& Y) {
    if (X.rows() != Y.size()) throw ConfigError("X and Y differ in row count");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw ConfigError("design matrix is rank deficient");
    return qr.solve(Y);
}

namespace {

Eigen::LLT<MatrixXd> cholesky(const MatrixXd& Sigma) {
    if (Sigma.rows() != Sigma.cols()) throw ConfigError("Sigma must be square");
    if (!Sigma.isApprox(Sigma.transpose(), 1e-12)) throw ConfigError("Sigma is not symmetric");
    Eigen::LLT<MatrixXd> llt(Sigma);
    if (llt.info() != Eigen::Success) throw ConfigError("Sigma is not positive definite");
    return llt;
}

double normal_draw(Rng& rng) {
    // A fresh distribution per draw keeps results independent of call history.
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

MonteCarloEstimate summarize(double sum, double sum_sq, std::size_t n) {
    const double k = static_cast<double>(n);
    const double mean = sum / k;
    const double var = std::max(0.0, (sum_sq - k * mean * mean) / (k - 1.0));
    return {mean, std::sqrt(var / k)};
}

}  // namespace

VectorXd gls_estimate(const MatrixXd& X, const VectorXd& Y, const MatrixXd& Sigma) {
    if (X.rows() != Y.size() || Sigma.rows() != X.rows()) throw ConfigError("GLS shapes disagree");
    const Eigen::LLT<MatrixXd> llt = cholesky(Sigma);
    const MatrixXd Xw = llt.matrixL().solve(X);
    const VectorXd Yw = llt.matrixL().solve(Y);
    return ols_estimate(Xw, Yw);
}

VectorXd wls_estimate(const MatrixXd& X, const VectorXd& Y, const VectorXd& weights) {
    if (X.rows() != Y.size() || weights.size() != Y.size()) throw ConfigError("WLS shapes disagree");
    const MatrixXd XtW = X.transpose() * weights.asDiagonal();
    return (XtW * X).ldlt().solve(XtW * Y);
}

VectorXd ridge_estimate(const MatrixXd& X, const VectorXd& Y, double lambda) {
    if (lambda < 0.0) throw ConfigError("ridge constant must be nonnegative");
    if (X.rows() != Y.size()) throw ConfigError("X and Y differ in row count");
    if (lambda == 0.0) return ols_estimate(X, Y);
    const MatrixXd A = X.transpose() * X + lambda * MatrixXd::Identity(X.cols(), X.cols());
    return A.ldlt().solve(X.transpose() * Y);
}

double ridge_mse(const VectorXd& beta, double sigma2, double lambda) {
    if (lambda < 0.0) throw ConfigError("ridge constant must be nonnegative");
    const double p = static_cast<double>(beta.size());
    const double d = (1.0 + lambda) * (1.0 + lambda);
    return (beta.squaredNorm() * lambda * lambda + p * sigma2) / d;
}

double optimal_lambda_mean(std::size_t p, double sigma2, const VectorXd& beta) {
    const double b2 = beta.squaredNorm();
    if (b2 == 0.0) throw ConfigError("optimal ridge constant is undefined for beta = 0");
    return static_cast<double>(p) * sigma2 / b2;
}

double optimal_lambda_logvar(std::size_t p, double var_eps_tilde, const VectorXd& beta_tilde) {
    const double b2 = beta_tilde.squaredNorm();
    if (b2 == 0.0) throw ConfigError("optimal ridge constant is undefined for beta_tilde = 0");
    return static_cast<double>(p) * var_eps_tilde / b2;
}

double digamma(double x) {
    if (!(x > 0.0)) throw ConfigError("digamma implemented for x > 0 only");
    double r = 0.0;
    while (x < 10.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    const double series =
        f * (-1.0 / 12 + f * (1.0 / 120 + f * (-1.0 / 252 + f * (1.0 / 240 + f * (-1.0 / 132 + f * (691.0 / 32760 + f * (-1.0 / 12)))))));
    return r + std::log(x) - 0.5 / x + series;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw ConfigError("trigamma implemented for x > 0 only");
    double r = 0.0;
    while (x < 10.0) {
        r += 1.0 / (x * x);
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    const double series =
        1.0 / x + f / 2.0 +
        f / x * (1.0 / 6 + f * (-1.0 / 30 + f * (1.0 / 42 + f * (-1.0 / 30 + f * (5.0 / 66 + f * (-691.0 / 2730 + f * (7.0 / 6)))))));
    return r + series;
}

double logvar_constant() { return digamma(0.5) + std::numbers::ln2; }

double logvar_noise_variance() { return trigamma(0.5); }

VectorXd logvar_targets(const VectorXd& y, const VectorXd& mu) {
    if (y.size() != mu.size()) throw ConfigError("y and mu differ in length");
    const double C = logvar_constant();
    VectorXd z(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double r = y[i] - mu[i];
        z[i] = std::log(std::max(r * r, 1e-300)) - C;
    }
    return z;
}

MatrixXd random_orthonormal(std::size_t n, std::size_t p, Rng& rng) {
    if (p > n) throw ConfigError("cannot build more orthonormal columns than rows");
    MatrixXd G(n, p);
    for (Eigen::Index c = 0; c < G.cols(); ++c) {
        for (Eigen::Index r = 0; r < G.rows(); ++r) G(r, c) = normal_draw(rng);
    }
    Eigen::HouseholderQR<MatrixXd> qr(G);
    return qr.householderQ() * MatrixXd::Identity(n, p);
}

VectorXd sample_noise(const MatrixXd& sigma_factor, Rng& rng) {
    VectorXd z(sigma_factor.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal_draw(rng);
    return sigma_factor.triangularView<Eigen::Lower>() * z;
}

namespace {

// Repeated noise draws on a fixed design with both estimators.
struct EstimatorDraws {
    MatrixXd ols;  // p x draws, estimation errors b - beta
    MatrixXd gls;
};

EstimatorDraws draw_estimates(const LinearProblem& problem, std::size_t draws, Rng& rng) {
    problem.validate();
    const Eigen::LLT<MatrixXd> llt = cholesky(problem.Sigma);
    const MatrixXd L = llt.matrixL();
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(problem.X);
    const MatrixXd Xw = llt.matrixL().solve(problem.X);
    const Eigen::ColPivHouseholderQR<MatrixXd> qrw(Xw);
    if (qr.rank() < problem.X.cols()) throw ConfigError("design matrix is rank deficient");
    const VectorXd mean = problem.X * problem.beta;
    EstimatorDraws out{MatrixXd(problem.beta.size(), draws), MatrixXd(problem.beta.size(), draws)};
    for (std::size_t d = 0; d < draws; ++d) {
        const VectorXd Y = mean + sample_noise(L, rng);
        out.ols.col(d) = qr.solve(Y) - problem.beta;
        out.gls.col(d) = qrw.solve(VectorXd(llt.matrixL().solve(Y))) - problem.beta;
    }
    return out;
}

MatrixXd sample_covariance(const MatrixXd& cols) {
    const VectorXd m = cols.rowwise().mean();
    const MatrixXd c = cols.colwise() - m;
    return c * c.transpose() / static_cast<double>(cols.cols() - 1);
}

}  // namespace

GaussMarkovCheck gauss_markov_check(const LinearProblem& problem, std::size_t draws, std::uint64_t seed) {
    if (draws < 2) throw ConfigError("need at least 2 draws");
    Rng rng(seed);
    const EstimatorDraws e = draw_estimates(problem, draws, rng);
    GaussMarkovCheck g;
    g.cov_ols = sample_covariance(e.ols);
    g.cov_gls = sample_covariance(e.gls);
    g.mean_ols = e.ols.rowwise().mean() + problem.beta;
    g.mean_gls = e.gls.rowwise().mean() + problem.beta;
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g.cov_ols - g.cov_gls);
    g.min_eigenvalue = eig.eigenvalues().minCoeff();
    g.max_eigenvalue = eig.eigenvalues().maxCoeff();
    return g;
}

ErrorGap quadratic_error_gap(const LinearProblem& problem, std::size_t draws, std::uint64_t seed) {
    if (draws < 1000) throw ConfigError("quadratic_error_gap needs at least 1000 draws");
    Rng rng(seed);
    const EstimatorDraws e = draw_estimates(problem, draws, rng);
    std::uniform_int_distribution<Eigen::Index> pick(0, problem.X.rows() - 1);
    std::vector<Eigen::Index> rows(draws);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        const Eigen::Index r = pick(rng);
        rows[d] = r;
        const double noise = std::sqrt(problem.Sigma(r, r)) * normal_draw(rng);
        const double a = noise - problem.X.row(r).dot(e.ols.col(d));
        const double b = noise - problem.X.row(r).dot(e.gls.col(d));
        const double gap = a * a - b * b;
        sum += gap;
        sum_sq += gap * gap;
    }
    const double k = static_cast<double>(draws);
    const MatrixXd M = (e.ols * e.ols.transpose() - e.gls * e.gls.transpose()) / k;
    double via = 0.0;
    for (Eigen::Index r : rows) via += problem.X.row(r) * M * problem.X.row(r).transpose();
    return {summarize(sum, sum_sq, draws), via / k};
}

namespace {

std::vector<double> ridge_mc(const MatrixXd& X, const VectorXd& truth, const std::vector<double>& lambdas,
                             std::size_t draws, const std::function<VectorXd()>& draw_targets) {
    const MatrixXd XtX = X.transpose() * X;
    std::vector<Eigen::LDLT<MatrixXd>> solvers;
    for (double l : lambdas) {
        if (l < 0.0) throw ConfigError("ridge constant must be nonnegative");
        solvers.emplace_back(XtX + l * MatrixXd::Identity(X.cols(), X.cols()));
    }
    std::vector<double> mse(lambdas.size(), 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
        const VectorXd XtY = X.transpose() * draw_targets();
        for (std::size_t i = 0; i < lambdas.size(); ++i) mse[i] += (solvers[i].solve(XtY) - truth).squaredNorm();
    }
    for (double& m : mse) m /= static_cast<double>(draws);
    return mse;
}

}  // namespace

std::vector<double> ridge_mse_monte_carlo(const MatrixXd& X, const VectorXd& beta, double sigma2,
                                          const std::vector<double>& lambdas, std::size_t draws, std::uint64_t seed) {
    Rng rng(seed);
    const VectorXd mean = X * beta;
    const double sd = std::sqrt(sigma2);
    return ridge_mc(X, beta, lambdas, draws, [&] {
        VectorXd y = mean;
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * normal_draw(rng);
        return y;
    });
}

std::vector<double> logvar_ridge_mse_monte_carlo(const LogVarProblem& problem, const std::vector<double>& lambdas,
                                                 std::size_t draws, std::uint64_t seed) {
    if (problem.mu.size() != problem.X.rows() || problem.beta_tilde.size() != problem.X.cols()) {
        throw ConfigError("log-variance problem shapes disagree");
    }
    Rng rng(seed);
    const VectorXd sd = (0.5 * (problem.X * problem.beta_tilde).array()).exp().matrix();
    return ridge_mc(problem.X, problem.beta_tilde, lambdas, draws, [&] {
        VectorXd y = problem.mu;
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd[i] * normal_draw(rng);
        return logvar_targets(y, problem.mu);
    });
}

LogVarResidualCheck logvar_residual_check(double mu, double sigma2, std::size_t draws, std::uint64_t seed) {
    if (draws < 2) throw ConfigError("need at least 2 draws");
    Rng rng(seed);
    const double sd = std::sqrt(sigma2);
    const double C = logvar_constant();
    const double log_var = std::log(sigma2);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        const double y = mu + sd * normal_draw(rng);
        const double r = y - mu;
        const double eps = std::log(std::max(r * r, 1e-300)) - C - log_var;
        sum += eps;
        sum_sq += eps * eps;
    }
    LogVarResidualCheck out;
    out.residual_mean = summarize(sum, sum_sq, draws);
    const double k = static_cast<double>(draws);
    out.residual_variance = (sum_sq - k * out.residual_mean.mean * out.residual_mean.mean) / (k - 1.0);
    return out;
}

// ---------------------------------------------------------------- suite

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Intercept plus one covariate on [-1, 1] with noise stddev sd(x).
LinearProblem hetero_design(std::size_t n, const std::function<double(double)>& sd, Rng& rng) {
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    LinearProblem p;
    p.X = MatrixXd(n, 2);
    p.Sigma = MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        p.X(i, 0) = 1.0;
        p.X(i, 1) = x;
        p.Sigma(i, i) = sd(x) * sd(x);
    }
    p.beta = VectorXd(2);
    p.beta << 0.5, -1.0;
    return p;
}

std::vector<double> grid_to(double hi, double step) {
    std::vector<double> g;
    for (std::size_t i = 0; static_cast<double>(i) * step <= hi + 1e-12; ++i) g.push_back(static_cast<double>(i) * step);
    return g;
}

double argmin_on(const std::vector<double>& grid, const std::vector<double>& values) {
    return grid[static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin())];
}

}  // namespace

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& o) {
    std::vector<OracleCheck> checks;
    Rng rng(o.seed);

    // Digamma constants.
    {
        const double C = logvar_constant();
        const double target = -kEulerGamma - std::numbers::ln2;
        checks.push_back({"digamma constant C = psi(1/2) + log 2", C, target, 1e-12, std::abs(C - target) <= 1e-12, ""});
        const double v = logvar_noise_variance();
        const double vt = std::numbers::pi * std::numbers::pi / 2.0;
        checks.push_back({"trigamma(1/2) = pi^2/2", v, vt, 1e-12, std::abs(v - vt) <= 1e-12, ""});
    }

    // Appendix A: GLS dominates OLS on three heteroscedastic designs.
    const std::vector<std::pair<std::string, std::function<double(double)>>> designs = {
        {"sd = 0.1 + 2x^2", [](double x) { return 0.1 + 2.0 * x * x; }},
        {"sd = exp(1.5x)", [](double x) { return std::exp(1.5 * x); }},
        {"sd from 0.1 to 1 (variance ratio 100)", [](double x) { return 0.1 * std::pow(10.0, (x + 1.0) / 2.0); }},
    };
    for (std::size_t d = 0; d < designs.size(); ++d) {
        const LinearProblem p = hetero_design(100, designs[d].second, rng);
        const GaussMarkovCheck g = gauss_markov_check(p, o.gauss_markov_draws, derive_seed(o.seed, {0xA1u, d}));
        const double bound = -0.02 * g.max_eigenvalue;
        checks.push_back({"Gauss-Markov dominance, " + designs[d].first, g.min_eigenvalue, bound, 0.0,
                          g.min_eigenvalue >= bound,
                          "min eig of Cov(OLS)-Cov(GLS) >= -2% of max eig " + fmt(g.max_eigenvalue)});
        const ErrorGap gap = quadratic_error_gap(p, o.gap_draws, derive_seed(o.seed, {0xA2u, d}));
        const double lower = -2.0 * gap.direct.standard_error;
        checks.push_back({"quadratic error gap >= 0, " + designs[d].first, gap.direct.mean, 0.0,
                          2.0 * gap.direct.standard_error, gap.direct.mean >= lower,
                          "SE " + fmt(gap.direct.standard_error) + ", via covariance " + fmt(gap.via_covariance)});
    }

    // Appendix B: ridge optimum for the mean model.
    const std::size_t ps[] = {3, 5, 8};
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t p = ps[k];
        const MatrixXd X = random_orthonormal(50, p, rng);
        VectorXd beta(p);
        for (Eigen::Index i = 0; i < beta.size(); ++i) beta[i] = normal_draw(rng);
        std::uniform_real_distribution<double> target(0.3, 1.5);
        const double sigma2 = target(rng) * beta.squaredNorm() / static_cast<double>(p);
        const double lstar = optimal_lambda_mean(p, sigma2, beta);
        const std::vector<double> grid = grid_to(3.0, o.grid_step);
        const std::vector<double> mse =
            ridge_mse_monte_carlo(X, beta, sigma2, grid, o.ridge_draws, derive_seed(o.seed, {0xB1u, k}));
        const double best = argmin_on(grid, mse);
        checks.push_back({"ridge argmin = p sigma^2/|beta|^2, p=" + std::to_string(p), best, lstar, o.grid_step,
                          std::abs(best - lstar) <= o.grid_step + 1e-12, "Monte Carlo over " +
                                                                              std::to_string(o.ridge_draws) + " draws"});
    }

    // Appendix B: log-variance targets.
    {
        const LogVarResidualCheck r = logvar_residual_check(1.5, 4.0, o.logvar_draws, derive_seed(o.seed, {0xB2u}));
        const double se3 = 3.0 * r.residual_mean.standard_error;
        checks.push_back({"log-variance residual mean = 0", r.residual_mean.mean, 0.0, se3,
                          std::abs(r.residual_mean.mean) <= se3, "y ~ N(1.5, 4)"});
        const double vt = std::numbers::pi * std::numbers::pi / 2.0;
        checks.push_back({"log-variance residual variance = pi^2/2", r.residual_variance, vt, 0.02 * vt,
                          std::abs(r.residual_variance - vt) <= 0.02 * vt, "relative tolerance 2%"});
    }

    // Appendix B: ridge optimum for the log-variance model.
    {
        const std::size_t p = 3;
        LogVarProblem lp;
        lp.X = random_orthonormal(200, p, rng);
        lp.mu = VectorXd(200);
        for (Eigen::Index i = 0; i < lp.mu.size(); ++i) lp.mu[i] = normal_draw(rng);
        lp.beta_tilde = VectorXd(p);
        for (Eigen::Index i = 0; i < lp.beta_tilde.size(); ++i) lp.beta_tilde[i] = normal_draw(rng);
        // Scale beta_tilde so the optimum lands inside the grid.
        const double var_eps = logvar_noise_variance();
        lp.beta_tilde *= std::sqrt(static_cast<double>(p) * var_eps / 1.2) / lp.beta_tilde.norm();
        const double lstar = optimal_lambda_logvar(p, var_eps, lp.beta_tilde);
        const std::vector<double> grid = grid_to(3.0, o.grid_step);
        const std::vector<double> mse =
            logvar_ridge_mse_monte_carlo(lp, grid, 4 * o.ridge_draws, derive_seed(o.seed, {0xB3u}));
        const double best = argmin_on(grid, mse);
        checks.push_back({"log-variance ridge argmin = p Var(eps~)/|beta~|^2", best, lstar, o.grid_step,
                          std::abs(best - lstar) <= o.grid_step + 1e-12, ""});
    }
    return checks;
}

}  // namespace mve::oracle
