#pragma once
// Standardization, predictive metrics, fold aggregation and the paired t-test.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mve/matrix.hpp"
#include "mve/mve_model.hpp"

namespace mve {

inline constexpr double kStdevFloor = 1e-12;

struct Standardization {
    std::vector<double> x_mean;
    std::vector<double> x_std;
    double y_mean = 0.0;
    double y_std = 1.0;

    static Standardization identity(std::size_t p);
};

struct Dataset {
    Matrix X;
    std::vector<double> y;
    std::string label;
    // Set when X and y are expressed in standardized units.
    std::optional<Standardization> standardization;

    std::size_t size() const { return y.size(); }
    std::size_t features() const { return X.cols; }
    BatchView view() const { return {X, y}; }
};

Dataset subset(const Dataset& d, std::span<const std::size_t> rows);

// Per-column sample (n-1) mean/stdev of the training split. Stdevs below
// kStdevFloor are floored. Throws DataError on an empty split.
Standardization standardize_fit(const Dataset& train);
Dataset standardize_apply(const Standardization& s, const Dataset& split);
std::vector<double> destandardize_targets(const Standardization& s, std::span<const double> y_std);

enum class MetricScale { Original, Standardized };

struct Metrics {
    double loglik = 0.0;  // mean per-point Gaussian log density
    double rmse = 0.0;
};

double gaussian_log_density(double y, double mean, double variance);

// `raw_split` is in original units. Predictions are made on the standardized
// inputs and mapped back: mean*s_y + m_y, variance*s_y^2.
Metrics metrics_on_original_scale(const MveNetwork& net, const Standardization& s, const Dataset& raw_split);

// Metrics in standardized target units; equals the original-scale loglik plus
// log(s_y) and the original-scale RMSE divided by s_y.
Metrics metrics_on_standardized_scale(const MveNetwork& net, const Standardization& s, const Dataset& raw_split);

Metrics evaluate(const MveNetwork& net, const Standardization& s, const Dataset& raw_split, MetricScale scale);

struct Aggregate {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Sample stdev / sqrt(k). Throws DataError with fewer than 2 values.
Aggregate aggregate(std::span<const double> values);

struct MetricsAggregate {
    Aggregate loglik;
    Aggregate rmse;
};

MetricsAggregate aggregate_folds(std::span<const Metrics> folds);

struct PairedTestResult {
    double mean_difference = 0.0;
    double standard_error = 0.0;
    double t_statistic = 0.0;
    std::size_t degrees_of_freedom = 0;
    double critical_value = 0.0;
    double confidence = 0.9;
    bool significant = false;
};

// Two-tailed paired t-test on a[i] - b[i]. Zero spread in the differences is
// significant iff their mean is nonzero.
PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double confidence = 0.90);

// I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
// Inverse of student_t_cdf for p in (0, 1).
double student_t_quantile(double p, double df);

}  // namespace mve
