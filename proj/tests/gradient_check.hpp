#pragma once
// Central finite-difference check of the MVE loss gradients.

#include <algorithm>
#include <cmath>
#include <random>

#include "mve/mve_model.hpp"
#include "mve/rng.hpp"

namespace mve::testing {

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t parameters = 0;
};

// Objective: reduced NLL of the batch plus the L2 terms of both heads.
inline double full_objective(const MveNetwork& net, const BatchView& batch, BatchReduction reduction) {
    double loss = nll_loss(net, batch);
    if (reduction == BatchReduction::Sum) loss *= static_cast<double>(batch.size());
    return loss + l2_penalty(net.mean_net) + l2_penalty(net.logvar_net);
}

// Relative error |a - n| / max(|a|, |n|). Components where both are below
// 1e-7 are compared absolutely instead (|a - n| <= 1e-9), since a relative
// measure is meaningless at round-off scale.
inline GradientCheckResult check_gradients(MveNetwork net, const BatchView& batch,
                                           BatchReduction reduction = BatchReduction::Mean, double step = 1e-5) {
    MveWorkspace ws;
    const LossGradients g = loss_and_gradients(net, batch, LossKind::Nll, {}, ws, reduction);
    GradientCheckResult r;
    auto visit = [&](double& p, double analytic) {
        const double orig = p;
        p = orig + step;
        const double up = full_objective(net, batch, reduction);
        p = orig - step;
        const double down = full_objective(net, batch, reduction);
        p = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max(std::abs(numeric), std::abs(analytic));
        const double diff = std::abs(numeric - analytic);
        double rel = 0.0;
        if (scale < 1e-7) {
            rel = diff <= 1e-9 ? 0.0 : 1.0;
        } else {
            rel = diff / scale;
        }
        r.max_relative_error = std::max(r.max_relative_error, rel);
        ++r.parameters;
    };
    for (int head = 0; head < 2; ++head) {
        Mlp& m = head == 0 ? net.mean_net : net.logvar_net;
        const GradientSet& gs = head == 0 ? g.mean : g.var;
        for (std::size_t k = 0; k < m.layers.size(); ++k) {
            for (std::size_t j = 0; j < m.layers[k].weights.size(); ++j) visit(m.layers[k].weights[j], gs.layers[k].weights[j]);
            for (std::size_t j = 0; j < m.layers[k].biases.size(); ++j) visit(m.layers[k].biases[j], gs.layers[k].biases[j]);
        }
    }
    return r;
}

// A random small MVE network (1-3 hidden layers of at most 10 units) with a
// random batch; the variance floor is kept out of play.
struct RandomProblem {
    MveNetwork net;
    Matrix X;
    std::vector<double> y;
};

inline RandomProblem random_problem(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> layers(1, 3), width(1, 10), inputs(1, 4), batch(1, 12);
    std::uniform_real_distribution<double> lam(0.0, 0.1);
    std::normal_distribution<double> nd(0.0, 1.0);
    MveArchitecture arch;
    arch.hidden.clear();
    const std::size_t depth = layers(rng);
    for (std::size_t i = 0; i < depth; ++i) arch.hidden.push_back(width(rng));
    const std::size_t p = inputs(rng);
    RandomProblem prob{make_mve_network(p, rng(), arch, lam(rng), lam(rng)), Matrix(batch(rng), p), {}};
    // Nonzero biases so that ELU units sit on both sides of the kink.
    for (Mlp* m : {&prob.net.mean_net, &prob.net.logvar_net}) {
        for (DenseLayer& l : m->layers) {
            for (double& b : l.biases) b += 0.3 * nd(rng);
        }
    }
    for (double& v : prob.X.data) v = nd(rng);
    prob.y.resize(prob.X.rows);
    for (double& v : prob.y) v = nd(rng);
    return prob;
}

}  // namespace mve::testing
