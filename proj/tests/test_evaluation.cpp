#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mve/errors.hpp"
#include "mve/evaluation.hpp"

using namespace mve;

namespace {

// Linear mean head x -> w x + b and a constant log-variance.
MveNetwork hand_network(double w, double b, double log_var) {
    MveNetwork net;
    net.mean_net.layers.push_back(DenseLayer{1, 1, {w}, {b}, Activation::Linear});
    net.logvar_net.layers.push_back(DenseLayer{1, 1, {0.0}, {log_var}, Activation::Exp});
    return net;
}

Dataset one_column(std::vector<double> x, std::vector<double> y) {
    Dataset d;
    d.X = Matrix(x.size(), 1);
    d.X.data = std::move(x);
    d.y = std::move(y);
    return d;
}

// Independent density: written out from the Gaussian formula, no shared code.
double oracle_log_density(double y, double m, double v) {
    const double z = (y - m) / std::sqrt(v);
    return std::log(1.0 / std::sqrt(2.0 * std::numbers::pi * v)) - 0.5 * z * z;
}

// Student-t density integrated by composite Simpson's rule.
double t_cdf_simpson(double t, double df) {
    const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
    auto f = [&](double u) { return c * std::pow(1 + u * u / df, -(df + 1) / 2); };
    const int n = 20000;
    const double h = t / n;
    double s = f(0) + f(t);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
    return 0.5 + s * h / 3;
}

}  // namespace

TEST_CASE("standardization") {
    SUBCASE("constant column is floored and maps to zeros") {
        const Dataset d = one_column({3.0, 3.0, 3.0}, {1.0, 2.0, 4.0});
        const Standardization s = standardize_fit(d);
        CHECK(s.x_std[0] == kStdevFloor);
        for (double v : standardize_apply(s, d).X.data) CHECK(v == 0.0);
    }
    SUBCASE("y = (0, 2): sample convention and round trip") {
        const Dataset d = one_column({0.0, 1.0}, {0.0, 2.0});
        const Standardization s = standardize_fit(d);
        CHECK(s.y_mean == 1.0);
        CHECK(s.y_std == doctest::Approx(std::sqrt(2.0)));
        const Dataset z = standardize_apply(s, d);
        CHECK(z.y[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
        const auto back = destandardize_targets(s, z.y);
        CHECK(back[0] == doctest::Approx(0.0));
        CHECK(back[1] == doctest::Approx(2.0));
        CHECK(z.standardization.has_value());
    }
    SUBCASE("empty split") {
        CHECK_THROWS_AS(standardize_fit(one_column({}, {})), DataError);
    }
}

TEST_CASE("metrics") {
    SUBCASE("perfect mean, unit variance") {
        const Dataset raw = one_column({1.0, 2.0, 4.0, 7.0}, {1.0, 2.0, 4.0, 7.0});
        const Standardization s = standardize_fit(raw);
        // In standardized units y_s = x_s when x and y coincide; sigma_orig^2 = 1
        // means sigma_std^2 = 1 / s_y^2.
        const MveNetwork net = hand_network(1.0, 0.0, -2.0 * std::log(s.y_std));
        const Metrics m = metrics_on_original_scale(net, s, raw);
        CHECK(m.rmse == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(m.loglik == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-12));
        CHECK(m.loglik == doctest::Approx(-0.9189).epsilon(1e-4));
    }
    SUBCASE("identity standardization: both scales agree") {
        const Dataset raw = one_column({0.5, -1.0, 2.0}, {0.3, -0.8, 1.5});
        const Standardization id = Standardization::identity(1);
        const MveNetwork net = hand_network(0.9, 0.1, -1.0);
        const Metrics a = metrics_on_original_scale(net, id, raw);
        const Metrics b = metrics_on_standardized_scale(net, id, raw);
        CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-15));
        CHECK(a.rmse == doctest::Approx(b.rmse).epsilon(1e-15));
    }
    SUBCASE("hand network on 3 points against an independent density") {
        const Dataset raw = one_column({0.0, 1.0, 3.0}, {1.0, 2.5, 2.0});
        const Standardization s = standardize_fit(raw);
        const MveNetwork net = hand_network(0.4, -0.2, 0.3);
        double ll = 0.0, se = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double xs = (raw.X(i, 0) - s.x_mean[0]) / s.x_std[0];
            const double m = (0.4 * xs - 0.2) * s.y_std + s.y_mean;
            const double v = std::exp(0.3) * s.y_std * s.y_std;
            ll += oracle_log_density(raw.y[i], m, v);
            se += (raw.y[i] - m) * (raw.y[i] - m);
        }
        const Metrics got = metrics_on_original_scale(net, s, raw);
        CHECK(std::abs(got.loglik - ll / 3) <= 1e-12);
        CHECK(std::abs(got.rmse - std::sqrt(se / 3)) <= 1e-12);
        const Metrics st = metrics_on_standardized_scale(net, s, raw);
        CHECK(st.loglik == doctest::Approx(got.loglik + std::log(s.y_std)).epsilon(1e-13));
        CHECK(st.rmse == doctest::Approx(got.rmse / s.y_std).epsilon(1e-13));
        CHECK(evaluate(net, s, raw, MetricScale::Standardized).loglik == st.loglik);
    }
    CHECK(gaussian_log_density(0.3, -0.1, 2.0) == doctest::Approx(oracle_log_density(0.3, -0.1, 2.0)).epsilon(1e-15));
}

TEST_CASE("aggregation") {
    const std::vector<double> ones = {1, 1, 1};
    CHECK(aggregate(ones).mean == 1.0);
    CHECK(aggregate(ones).standard_error == 0.0);
    const std::vector<double> two = {0, 2};
    CHECK(aggregate(two).mean == 1.0);
    CHECK(aggregate(two).standard_error == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> single = {1};
    CHECK_THROWS_AS(aggregate(single), DataError);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(3, 2);
    std::vector<double> v(10);
    for (double& x : v) x = nd(rng);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= 10;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const Aggregate a = aggregate(v);
    CHECK(a.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(a.standard_error == doctest::Approx(std::sqrt(ss / 9) / std::sqrt(10.0)).epsilon(1e-13));

    // Duplicating every value (k -> 2k) scales SE by sqrt((k - 1) / (2k - 1)).
    std::vector<double> dup = v;
    dup.insert(dup.end(), v.begin(), v.end());
    const double ratio = aggregate(dup).standard_error / a.standard_error;
    CHECK(ratio == doctest::Approx(std::sqrt(9.0 / 19.0)).epsilon(1e-12));

    const std::vector<Metrics> folds = {{-1.0, 0.5}, {-2.0, 0.7}};
    const MetricsAggregate ma = aggregate_folds(folds);
    CHECK(ma.loglik.mean == -1.5);
    CHECK(ma.rmse.mean == doctest::Approx(0.6));
}

TEST_CASE("t distribution") {
    CHECK(std::abs(student_t_quantile(0.95, 9) - 1.833) <= 0.001);
    CHECK(student_t_quantile(0.95, 9) == doctest::Approx(1.8331129326536335).epsilon(1e-9));
    for (double df : {1.0, 3.0, 9.0, 30.0}) {
        for (double t : {0.2, 1.0, 1.833, 4.0}) {
            CHECK(student_t_cdf(t, df) == doctest::Approx(t_cdf_simpson(t, df)).epsilon(1e-10));
            CHECK(student_t_cdf(-t, df) == doctest::Approx(1.0 - student_t_cdf(t, df)).epsilon(1e-12));
        }
        for (double p : {0.6, 0.9, 0.975})
            CHECK(student_t_cdf(student_t_quantile(p, df), df) == doctest::Approx(p).epsilon(1e-10));
    }
    CHECK(student_t_quantile(0.975, 1) == doctest::Approx(12.706204736174707).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(2, 3, 0.4) == doctest::Approx(0.5248).epsilon(1e-12));
    CHECK_THROWS_AS(student_t_quantile(1.0, 5), ConfigError);
}

TEST_CASE("paired t-test") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> a(10), b(10);
    for (std::size_t i = 0; i < 10; ++i) a[i] = nd(rng), b[i] = a[i] + 0.8 + 0.3 * nd(rng);
    const PairedTestResult ab = paired_t_test(a, b);
    const PairedTestResult ba = paired_t_test(b, a);
    CHECK(ab.t_statistic == doctest::Approx(-ba.t_statistic).epsilon(1e-15));
    CHECK(ab.significant == ba.significant);
    CHECK(ab.significant);
    CHECK(ab.degrees_of_freedom == 9);
    CHECK(ab.critical_value == doctest::Approx(1.833).epsilon(1e-3));

    const std::vector<double> zero(10, 0.0), one(10, 1.0);
    const PairedTestResult same = paired_t_test(zero, zero);
    CHECK_FALSE(same.significant);
    CHECK(same.t_statistic == 0.0);
    const PairedTestResult shifted = paired_t_test(one, zero);
    CHECK(shifted.significant);
    CHECK(shifted.mean_difference == 1.0);

    const std::vector<double> three = {1, 2, 3};
    CHECK_THROWS_AS(paired_t_test(three, one), DataError);
}
