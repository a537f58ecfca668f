#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gradient_check.hpp"
#include "mve/errors.hpp"
#include "mve/mve_model.hpp"

using namespace mve;

namespace {

// Mean head: single linear layer with weights `w`, bias `b`. Variance head:
// single Exp layer with zero weights and bias `log_var`.
MveNetwork hand_network(std::vector<double> w, double b, double log_var) {
    const std::size_t p = w.size();
    MveNetwork net;
    net.mean_net.layers.push_back(DenseLayer{p, 1, std::move(w), {b}, Activation::Linear});
    net.logvar_net.layers.push_back(DenseLayer{p, 1, std::vector<double>(p, 0.0), {log_var}, Activation::Exp});
    net.validate();
    return net;
}

Matrix column(std::vector<double> v) {
    Matrix X(v.size(), 1);
    X.data = std::move(v);
    return X;
}

}  // namespace

TEST_CASE("predict: constant variance e from a zero-weight variance head") {
    MveNetwork net = make_mve_network(3, 1);
    for (DenseLayer& l : net.logvar_net.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0, 5);
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> x = {nd(rng), nd(rng), nd(rng)};
        CHECK(predict(net, x).variance == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    }
}

TEST_CASE("predict: variance floor and identity mean") {
    const MveNetwork net = hand_network({1.0, 0.0}, 0.0, -20.0);
    const std::vector<double> x = {3.5, -1.0};
    const Prediction p = predict(net, x);
    CHECK(p.variance == 1e-6);
    CHECK(p.mean == 3.5);
    // Adversarial pre-activations never go below the floor.
    for (double z : {-50.0, -700.0, -1e6}) {
        const MveNetwork n2 = hand_network({1.0, 0.0}, 0.0, z);
        CHECK(predict(n2, x).variance == 1e-6);
    }
}

TEST_CASE("nll_loss: single-point examples") {
    const Matrix X = column({0.0});
    SUBCASE("mu = y, var = 1") {
        const std::vector<double> y = {0.7};
        CHECK(nll_loss(hand_network({0.0}, 0.7, 0.0), BatchView{X, y}) == doctest::Approx(0.0));
    }
    SUBCASE("mu = y - 2, var = 1") {
        const std::vector<double> y = {2.7};
        CHECK(nll_loss(hand_network({0.0}, 0.7, 0.0), BatchView{X, y}) == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("mu = y, var = e^2") {
        const std::vector<double> y = {0.7};
        CHECK(nll_loss(hand_network({0.0}, 0.7, 2.0), BatchView{X, y}) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("empty batch") {
        const Matrix E(0, 1);
        const std::vector<double> y;
        CHECK_THROWS_AS(nll_loss(hand_network({0.0}, 0.0, 0.0), BatchView{E, y}), DataError);
    }
}

TEST_CASE("nll_loss in sigma^2 is minimized at the squared residual") {
    const Matrix X = column({0.0});
    for (double resid : {0.3, 1.0, 2.5}) {
        const std::vector<double> y = {resid};
        double best = 1e300, best_var = 0.0;
        for (int i = 0; i <= 4000; ++i) {
            const double log_var = -6.0 + 8.0 * i / 4000.0;
            const double l = nll_loss(hand_network({0.0}, 0.0, log_var), BatchView{X, y});
            if (l < best) best = l, best_var = std::exp(log_var);
        }
        CHECK(best_var == doctest::Approx(resid * resid).epsilon(0.003));
    }
}

TEST_CASE("fixed_variance_loss") {
    MveNetwork net = make_mve_network(2, 5);
    Matrix X(6, 2);
    std::vector<double> y(6);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (double& v : X.data) v = nd(rng);
    for (double& v : y) v = nd(rng);
    const BatchView batch{X, y};
    MveWorkspace ws;

    SUBCASE("gradients of the variance head are exactly zero") {
        const LossGradients g = loss_and_gradients(net, batch, LossKind::FixedVariance, {}, ws);
        CHECK(g.var.squared_norm() == 0.0);
        CHECK(g.mean.squared_norm() > 0.0);
    }
    SUBCASE("value is MSE / (2e) + 1/2 for a frozen variance e") {
        for (DenseLayer& l : net.logvar_net.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
        double mse = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double r = y[i] - predict(net, X.row(i)).mean;
            mse += r * r;
        }
        mse /= y.size();
        const double expected = mse / (2 * std::exp(1.0)) + 0.5;
        CHECK(fixed_variance_loss(net, batch) == doctest::Approx(expected).epsilon(1e-13));
        CHECK(fixed_variance_loss(net, batch) == nll_loss(net, batch));
    }
    SUBCASE("argmin over a one-parameter mean equals the MSE argmin") {
        const Matrix Z = column({-1.0, 0.0, 0.5, 2.0});
        const std::vector<double> t = {0.3, 1.1, -0.4, 2.2};
        std::size_t best_nll = 0, best_mse = 0;
        double v_nll = 1e300, v_mse = 1e300;
        for (std::size_t i = 0; i <= 2000; ++i) {
            const double b = -2.0 + 4.0 * i / 2000.0;
            const MveNetwork m = hand_network({0.0}, b, 1.0);
            const double l = fixed_variance_loss(m, BatchView{Z, t});
            double s = 0.0;
            for (double v : t) s += (v - b) * (v - b);
            if (l < v_nll) v_nll = l, best_nll = i;
            if (s < v_mse) v_mse = s, best_mse = i;
        }
        CHECK(best_nll == best_mse);
    }
}

TEST_CASE("NLL + L2 gradients match finite differences on random networks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CAPTURE(seed);
        testing::RandomProblem prob = testing::random_problem(seed);
        const BatchView batch{prob.X, prob.y};
        CHECK(testing::check_gradients(prob.net, batch).max_relative_error <= 1e-5);
        CHECK(testing::check_gradients(prob.net, batch, BatchReduction::Sum).max_relative_error <= 1e-5);
    }
}

TEST_CASE("Sum reduction scales the data term by the batch size") {
    testing::RandomProblem prob = testing::random_problem(77);
    const BatchView batch{prob.X, prob.y};
    MveWorkspace ws;
    const LossGradients m = loss_and_gradients(prob.net, batch, LossKind::Nll, {}, ws, BatchReduction::Mean);
    const LossGradients s = loss_and_gradients(prob.net, batch, LossKind::Nll, {}, ws, BatchReduction::Sum);
    CHECK(s.data_loss == doctest::Approx(m.data_loss * batch.size()).epsilon(1e-13));
    CHECK(s.penalty == doctest::Approx(m.penalty).epsilon(1e-15));
}

TEST_CASE("frozen heads get zero gradients and no penalty") {
    testing::RandomProblem prob = testing::random_problem(5);
    prob.net.mean_net.l2_constant = 0.1;
    prob.net.logvar_net.l2_constant = 0.2;
    const BatchView batch{prob.X, prob.y};
    MveWorkspace ws;
    const LossGradients g = loss_and_gradients(prob.net, batch, LossKind::Nll, {true, false}, ws);
    CHECK(g.mean.squared_norm() == 0.0);
    CHECK(g.penalty == doctest::Approx(l2_penalty(prob.net.logvar_net)));
    const LossGradients h = loss_and_gradients(prob.net, batch, LossKind::Nll, {false, true}, ws);
    CHECK(h.var.squared_norm() == 0.0);
    CHECK(h.penalty == doctest::Approx(l2_penalty(prob.net.mean_net)));
}

TEST_CASE("no parameter is shared between the heads") {
    MveNetwork net = make_mve_network(3, 9);
    const std::vector<double> x = {0.2, -0.7, 1.3};
    const Prediction base = predict(net, x);
    for (DenseLayer& l : net.mean_net.layers) {
        for (double& w : l.weights) w += 0.5;
        for (double& b : l.biases) b -= 0.25;
    }
    const Prediction moved_mean = predict(net, x);
    CHECK(moved_mean.variance == base.variance);
    CHECK(moved_mean.mean != base.mean);
    for (DenseLayer& l : net.logvar_net.layers)
        for (double& w : l.weights) w *= -1.5;
    const Prediction moved_var = predict(net, x);
    CHECK(moved_var.mean == moved_mean.mean);
    CHECK(moved_var.variance != moved_mean.variance);
}

TEST_CASE("default architecture and initialization") {
    const MveNetwork net = make_mve_network(5, 1, {}, 0.01, 0.1);
    REQUIRE(net.mean_net.layers.size() == 3);
    CHECK(net.mean_net.layers[0].out == 40);
    CHECK(net.mean_net.layers[1].out == 20);
    CHECK(net.mean_net.layers[0].activation == Activation::Elu);
    CHECK(net.mean_net.layers[2].activation == Activation::Linear);
    CHECK(net.logvar_net.layers[2].activation == Activation::Exp);
    CHECK(net.logvar_net.layers[2].biases[0] == 1.0);
    CHECK(net.mean_net.l2_constant == 0.01);
    CHECK(net.logvar_net.l2_constant == 0.1);
    CHECK(net.variance_floor == 1e-6);
}

TEST_CASE("serialization round-trips bit-exactly") {
    const MveNetwork net = make_mve_network(4, 21, MveArchitecture{{7, 3}}, 0.001, 0.01);
    const MveNetwork back = deserialize_network(serialize_network(net));
    for (int h = 0; h < 2; ++h) {
        const Mlp& a = h ? net.logvar_net : net.mean_net;
        const Mlp& b = h ? back.logvar_net : back.mean_net;
        REQUIRE(a.layers.size() == b.layers.size());
        CHECK(a.l2_constant == b.l2_constant);
        for (std::size_t k = 0; k < a.layers.size(); ++k) {
            CHECK(a.layers[k].weights == b.layers[k].weights);
            CHECK(a.layers[k].biases == b.layers[k].biases);
            CHECK(a.layers[k].activation == b.layers[k].activation);
        }
    }
    CHECK(back.variance_floor == net.variance_floor);
    CHECK_THROWS_AS(deserialize_network("{\"format\": \"other\"}"), DataError);
    CHECK_THROWS_AS(deserialize_network("not json"), DataError);
}
