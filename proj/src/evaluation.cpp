#include "mve/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mve/errors.hpp"

namespace mve {

Standardization Standardization::identity(std::size_t p) {
    Standardization s;
    s.x_mean.assign(p, 0.0);
    s.x_std.assign(p, 1.0);
    return s;
}

Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
    Dataset out;
    out.label = d.label;
    out.standardization = d.standardization;
    out.X = Matrix(rows.size(), d.X.cols);
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = d.X.row(rows[i]);
        std::copy(src.begin(), src.end(), out.X.row(i).begin());
        out.y[i] = d.y[rows[i]];
    }
    return out;
}

namespace {

struct MeanStd {
    double mean;
    double stdev;
};

template <class Get>
MeanStd sample_moments(std::size_t n, Get get) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += get(i);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = get(i) - mean;
        ss += d * d;
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::max(std::sqrt(var), kStdevFloor)};
}

}  // namespace

Standardization standardize_fit(const Dataset& train) {
    const std::size_t n = train.size();
    if (n == 0) throw DataError("cannot fit standardization on an empty split");
    Standardization s;
    s.x_mean.resize(train.X.cols);
    s.x_std.resize(train.X.cols);
    for (std::size_t c = 0; c < train.X.cols; ++c) {
        const auto m = sample_moments(n, [&](std::size_t i) { return train.X(i, c); });
        s.x_mean[c] = m.mean;
        s.x_std[c] = m.stdev;
    }
    const auto my = sample_moments(n, [&](std::size_t i) { return train.y[i]; });
    s.y_mean = my.mean;
    s.y_std = my.stdev;
    return s;
}

Dataset standardize_apply(const Standardization& s, const Dataset& split) {
    if (s.x_mean.size() != split.X.cols) throw ConfigError("standardization width does not match data");
    Dataset out = split;
    for (std::size_t i = 0; i < out.X.rows; ++i) {
        for (std::size_t c = 0; c < out.X.cols; ++c) out.X(i, c) = (out.X(i, c) - s.x_mean[c]) / s.x_std[c];
        out.y[i] = (out.y[i] - s.y_mean) / s.y_std;
    }
    out.standardization = s;
    return out;
}

std::vector<double> destandardize_targets(const Standardization& s, std::span<const double> y_std) {
    std::vector<double> out(y_std.size());
    for (std::size_t i = 0; i < y_std.size(); ++i) out[i] = y_std[i] * s.y_std + s.y_mean;
    return out;
}

double gaussian_log_density(double y, double mean, double variance) {
    const double r = y - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * r * r / variance;
}

namespace {

Metrics compute_metrics(const MveNetwork& net, const Standardization& s, const Dataset& raw, bool original) {
    if (raw.size() == 0) throw DataError("metrics requested on an empty split");
    const std::size_t p = raw.X.cols;
    std::vector<double> x(p);
    MveWorkspace ws;
    double ll = 0.0;
    double se = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (std::size_t c = 0; c < p; ++c) x[c] = (raw.X(i, c) - s.x_mean[c]) / s.x_std[c];
        const Prediction pr = predict(net, x, ws);
        double y = raw.y[i];
        double mu = pr.mean;
        double var = pr.variance;
        if (original) {
            mu = pr.mean * s.y_std + s.y_mean;
            var = pr.variance * s.y_std * s.y_std;
        } else {
            y = (y - s.y_mean) / s.y_std;
        }
        ll += gaussian_log_density(y, mu, var);
        se += (y - mu) * (y - mu);
    }
    const double n = static_cast<double>(raw.size());
    return {ll / n, std::sqrt(se / n)};
}

}  // namespace

Metrics metrics_on_original_scale(const MveNetwork& net, const Standardization& s, const Dataset& raw_split) {
    return compute_metrics(net, s, raw_split, true);
}

Metrics metrics_on_standardized_scale(const MveNetwork& net, const Standardization& s, const Dataset& raw_split) {
    return compute_metrics(net, s, raw_split, false);
}

Metrics evaluate(const MveNetwork& net, const Standardization& s, const Dataset& raw_split, MetricScale scale) {
    return compute_metrics(net, s, raw_split, scale == MetricScale::Original);
}

Aggregate aggregate(std::span<const double> values) {
    const std::size_t k = values.size();
    if (k < 2) throw DataError("need at least 2 folds to aggregate, got " + std::to_string(k));
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(k - 1));
    return {mean, sd / std::sqrt(static_cast<double>(k))};
}

MetricsAggregate aggregate_folds(std::span<const Metrics> folds) {
    std::vector<double> ll;
    std::vector<double> rmse;
    for (const auto& m : folds) {
        ll.push_back(m.loglik);
        rmse.push_back(m.rmse);
    }
    return {aggregate(ll), aggregate(rmse)};
}

// Lentz's method for the continued fraction of I_x(a, b).
namespace {

double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("incomplete beta needs positive shape parameters");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw ConfigError("degrees of freedom must be positive");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile probability must lie in (0, 1)");
    if (p == 0.5) return 0.0;
    double lo = -1.0;
    double hi = 1.0;
    while (student_t_cdf(lo, df) > p) lo *= 2.0;
    while (student_t_cdf(hi, df) < p) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, std::fabs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, df) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double confidence) {
    if (a.size() != b.size()) throw DataError("paired t-test needs equal-length samples");
    if (a.size() < 2) throw DataError("paired t-test needs at least 2 pairs");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
    const std::size_t k = a.size();
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = a[i] - b[i];
    const Aggregate agg = aggregate(d);

    PairedTestResult r;
    r.mean_difference = agg.mean;
    r.standard_error = agg.standard_error;
    r.degrees_of_freedom = k - 1;
    r.confidence = confidence;
    r.critical_value = student_t_quantile(1.0 - 0.5 * (1.0 - confidence), static_cast<double>(k - 1));
    if (agg.standard_error == 0.0) {
        if (agg.mean == 0.0) {
            r.t_statistic = 0.0;
            r.significant = false;
        } else {
            r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), agg.mean);
            r.significant = true;
        }
        return r;
    }
    r.t_statistic = agg.mean / agg.standard_error;
    r.significant = std::fabs(r.t_statistic) > r.critical_value;
    return r;
}

}  // namespace mve
