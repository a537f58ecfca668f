#pragma once
// Synthetic data sets, the three small demonstrations (sine fit, quadratic
// regularization sweep, two-cluster likelihood landscape) and the nested
// cross-validation harness.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mve/evaluation.hpp"
#include "mve/training.hpp"

namespace mve {

// ---------------------------------------------------------------- generators

enum class SyntheticKind { Sine, QuadraticHetero, TwoCluster };

std::string_view synthetic_kind_name(SyntheticKind k);
SyntheticKind parse_synthetic_kind(std::string_view name);

// For TwoCluster, n is the size of each cluster.
struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::Sine;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
};

// Default sizes: Sine 1000, QuadraticHetero 1000, TwoCluster 100 per cluster.
std::size_t default_synthetic_size(SyntheticKind kind);

// Sine:            x ~ U(0, 10),  y ~ N(0.4 sin(2 pi x), 0.01^2)
// QuadraticHetero: x ~ U(-1, 1),  y ~ N(x^2, (0.1 + 0.2 x^2)^2)
// TwoCluster:      n points from N(2, 0.5^2) followed by n from N(5, 0.1^2),
//                  with a single constant covariate.
// Throws ConfigError when n == 0.
Dataset generate(const SyntheticSpec& spec);

double sine_mean(double x);
double sine_stddev(double x);
double quadratic_mean(double x);
double quadratic_stddev(double x);

// Cluster index (0 or 1) of each row of a TwoCluster data set.
std::vector<std::size_t> two_cluster_labels(const Dataset& d);

// ---------------------------------------------------------------- landscape

struct LocalMinimum {
    std::size_t index = 0;
    double mu = 0.0;
    double nll = 0.0;
};

struct LandscapeProfile {
    std::vector<double> mu_grid;
    std::vector<double> nll_values;
    std::vector<LocalMinimum> local_minima;
};

// Negative log-likelihood of a shared mean mu when every cluster takes its own
// maximum-likelihood variance mean_k((y - mu)^2):
//   sum_k (n_k / 2) (log sigma_k^2 + 1)
// The 0.5 log(2 pi) constant is omitted. Throws ConfigError on an empty grid.
LandscapeProfile nll_profile(std::span<const double> y, std::span<const std::size_t> cluster,
                             std::span<const double> mu_grid);
LandscapeProfile nll_profile(const Dataset& two_cluster, std::span<const double> mu_grid);

// Point-by-point evaluation of the same quantity, sum_i 0.5 log s_k(i) +
// 0.5 (y_i - mu)^2 / s_k(i), used to cross-check the closed form.
double brute_force_profile_nll(std::span<const double> y, std::span<const std::size_t> cluster, double mu);

// Grid points strictly below both neighbours (end points never qualify).
std::vector<LocalMinimum> find_local_minima(std::span<const double> grid, std::span<const double> values);

std::vector<double> linspace(double lo, double hi, std::size_t count);

// ---------------------------------------------------------------- curve fits

// A fitted model tabulated on a grid in original units, next to the truth.
struct CurveFit {
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> true_mean;
    std::vector<double> true_stddev;
    double mean_rmse = 0.0;  // RMSE of the fitted mean against the true mean on the grid

    // max / min of the fitted variance over the grid
    double variance_ratio() const;
    // Fitted stddev at the grid point nearest to x.
    double stddev_at(double x) const;
};

// Evaluates `net` (trained on data standardized by `s`) along `grid`, a set of
// values for the single covariate.
CurveFit tabulate_fit(const MveNetwork& net, const Standardization& s, std::span<const double> grid,
                      const std::function<double(double)>& true_mean,
                      const std::function<double(double)>& true_stddev);

// ---------------------------------------------------------------- sine demo

enum class SineArm { Warmup, NoWarmupEqual, NoWarmupSeparate };

std::string_view sine_arm_name(SineArm a);

inline constexpr SineArm kAllSineArms[] = {SineArm::Warmup, SineArm::NoWarmupEqual, SineArm::NoWarmupSeparate};

struct SineDemoSettings {
    std::size_t n = 1000;
    // Base configuration shared by every arm. The sine data need more capacity
    // than the 40-20 default, and L2 is summed rather than averaged over the
    // mini-batch (see README).
    TrainConfig base = [] {
        TrainConfig c;
        c.arch.hidden = {64, 64, 64, 64};
        c.reduction = BatchReduction::Sum;
        return c;
    }();
    double lambda = 1e-4;          // Warmup arm and the mean head of the Separate arm
    double separate_ratio = 10.0;  // lambda_var / lambda_mean in the Separate arm
    // NoWarmup+Equal picks lambda from this grid by validation log-likelihood
    // on a held-out fraction of the data.
    std::vector<double> lambda_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
    double selection_holdout = 0.2;
    std::size_t grid_points = 2000;
};

struct SineArmResult {
    SineArm arm = SineArm::Warmup;
    TrainConfig config;
    std::vector<std::pair<double, double>> selection_scores;  // (lambda, validation loglik), NoWarmupEqual only
    CurveFit fit;
    bool diverged = false;
};

// Trains one arm on `raw` (a Sine data set in original units) and tabulates
// the fit on a dense grid over [0, 10].
SineArmResult run_sine_arm(const Dataset& raw, SineArm arm, std::uint64_t seed, const SineDemoSettings& settings);

// ---------------------------------------------------------------- quadratic sweep

struct SweepSettings {
    double lambda_mean = 0.1;
    std::vector<double> lambda_vars = {0.1, 0.04, 0.01, 0.0};
    TrainConfig base = [] {
        TrainConfig c;
        c.strategy = Strategy::NoWarmup;
        c.reg_mode = RegMode::Separate;
        return c;
    }();
    std::size_t grid_points = 401;
};

struct SweepPanel {
    double lambda_var = 0.0;
    TrainConfig config;
    CurveFit fit;
    bool diverged = false;
};

// One network per lambda_var on the same data and initialization.
std::vector<SweepPanel> regularization_sweep(const Dataset& raw, std::uint64_t seed, const SweepSettings& settings);

// ---------------------------------------------------------------- nested CV

inline const std::vector<double> kDefaultLambdaGrid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
inline constexpr std::size_t kLargeDatasetRows = 5000;

struct CvPlan {
    std::size_t outer_folds = 10;
    std::size_t inner_folds = 10;
    std::vector<double> lambda_grid = kDefaultLambdaGrid;
    std::uint64_t seed = 0;
    std::vector<std::size_t> outer_assignment;  // fold id of every row

    std::vector<std::size_t> validation_rows(std::size_t fold) const;
    std::vector<std::size_t> training_rows(std::size_t fold) const;
    // Inner fold id of every row of training_rows(fold), in that order.
    std::vector<std::size_t> inner_assignment(std::size_t fold) const;
    // Throws ConfigError when fold counts exceed what the data supports.
    void validate() const;
};

// Seeded uniform shuffle, then contiguous blocks whose sizes differ by at most
// one. Returns the fold id of every index. Throws ConfigError unless
// 2 <= k <= n.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed);

// 10 outer folds, or 5 above kLargeDatasetRows rows, unless given.
CvPlan make_cv_plan(std::size_t n, std::uint64_t seed, std::optional<std::size_t> outer_folds = std::nullopt,
                    std::size_t inner_folds = 10, std::vector<double> lambda_grid = kDefaultLambdaGrid);

struct LambdaPair {
    double lambda_mean = 0.0;
    double lambda_var = 0.0;
    bool operator==(const LambdaPair&) const = default;
};

// Equal: (l, l) for every grid value. Separate: the full grid x grid product.
std::vector<LambdaPair> candidate_lambdas(RegMode mode, std::span<const double> grid);

// Index of the highest score. Ties go to the larger lambda (Equal) or the
// lexicographically larger (lambda_var, lambda_mean) (Separate). Throws
// ConfigError on empty or mismatched input.
std::size_t select_candidate(std::span<const LambdaPair> candidates, std::span<const double> scores);

struct FoldRecord {
    std::size_t fold = 0;
    Strategy strategy = Strategy::NoWarmup;
    RegMode mode = RegMode::Equal;
    LambdaPair selected;
    std::vector<LambdaPair> candidates;
    std::vector<double> candidate_scores;  // mean inner validation loglik; -inf when any inner run diverged
    std::size_t inner_divergences = 0;
    bool diverged = false;  // the final model diverged; metrics are then NaN
    Metrics metrics;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    // Means of the standardized targets: ~0 on the training split, generally
    // not 0 on the validation split because the scaler never sees it.
    double train_target_mean = 0.0;
    double validation_target_mean = 0.0;
};

struct ArmSummary {
    Strategy strategy = Strategy::NoWarmup;
    RegMode mode = RegMode::Equal;
    std::vector<Metrics> folds;  // one per outer fold, fold order
    std::size_t diverged_folds = 0;
    std::optional<MetricsAggregate> aggregate;  // over non-diverged folds, when at least 2
};

struct ModeComparison {
    Strategy strategy = Strategy::NoWarmup;
    // a = Equal, b = Separate, over folds where neither diverged.
    std::optional<PairedTestResult> loglik;
    std::optional<PairedTestResult> rmse;
};

struct RunSummary {
    std::string dataset_label;
    CvPlan plan;
    TrainConfig base;
    MetricScale scale = MetricScale::Original;
    std::vector<Strategy> strategies;
    std::vector<RegMode> modes;
    std::vector<FoldRecord> folds;  // fold-major, then strategy, then mode
    std::vector<ArmSummary> arms;
    std::vector<ModeComparison> comparisons;  // per strategy, when both modes ran

    const ArmSummary* arm(Strategy s, RegMode m) const;
};

struct NestedCvOptions {
    std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
    std::vector<RegMode> modes{std::begin(kAllRegModes), std::end(kAllRegModes)};
    // Strategy, mode, lambdas and seed are filled in per job.
    TrainConfig base;
    MetricScale scale = MetricScale::Original;
    std::size_t threads = 0;  // 0 = hardware concurrency
    double confidence = 0.9;
    std::function<void(const std::string&)> progress;
};

// Algorithm: for every outer fold, select lambdas per (strategy, mode) by the
// mean inner-CV validation log-likelihood, retrain on the outer training split
// and evaluate on the outer validation fold. Scalers are fitted on each
// training split only. All arms share the fold assignments and, for a given
// split, the initial network, so runs that coincide (e.g. the warm-up stage of
// Warmup and WarmupFixedMean) are computed once.
RunSummary nested_cv(const Dataset& raw, const CvPlan& plan, const NestedCvOptions& options);

struct SelectedLambdaRow {
    std::size_t fold = 0;
    Strategy strategy = Strategy::NoWarmup;
    RegMode mode = RegMode::Equal;
    LambdaPair lambdas;
};

std::vector<SelectedLambdaRow> selected_lambda_report(const RunSummary& summary);

}  // namespace mve
