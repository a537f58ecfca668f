#pragma once
// Split mean-variance network: a mean sub-network with a linear output and a
// variance sub-network whose output layer exponentiates a log-variance. The
// two share nothing but the input.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mve/matrix.hpp"
#include "mve/nn_core.hpp"

namespace mve {

inline constexpr double kDefaultVarianceFloor = 1e-6;

struct MveNetwork {
    Mlp mean_net;    // Linear output
    Mlp logvar_net;  // Exp output
    double variance_floor = kDefaultVarianceFloor;

    std::size_t input_size() const { return mean_net.input_size(); }
    void validate() const;
};

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

struct MveArchitecture {
    std::vector<std::size_t> hidden = {40, 20};
    double variance_bias_init = 1.0;
    double variance_floor = kDefaultVarianceFloor;
};

MveNetwork make_mve_network(std::size_t input_dim, std::uint64_t seed, const MveArchitecture& arch = {},
                            double lambda_mean = 0.0, double lambda_var = 0.0);

// Scratch buffers for repeated evaluation of one network.
struct MveWorkspace {
    ForwardCache mean_cache;
    ForwardCache var_cache;
    BatchCache mean_batch;
    BatchCache var_batch;
    std::vector<double> mean_upstream;
    std::vector<double> var_upstream;
};

Prediction predict(const MveNetwork& net, std::span<const double> x);
Prediction predict(const MveNetwork& net, std::span<const double> x, MveWorkspace& ws);

// Rows of X selected by `rows` (all rows when empty) paired with targets y.
struct BatchView {
    const Matrix& X;
    std::span<const double> y;
    std::span<const std::size_t> rows = {};

    std::size_t size() const { return rows.empty() ? X.rows : rows.size(); }
    std::size_t index(std::size_t i) const { return rows.empty() ? i : rows[i]; }
};

// Mean over the batch of 0.5*log(var) + 0.5*(y - mean)^2 / var. The
// 0.5*log(2*pi) constant is omitted. Throws DataError on an empty batch.
double nll_loss(const MveNetwork& net, const BatchView& batch);

// Same value as nll_loss; differs only in that its gradient treats the
// variance head as a constant.
double fixed_variance_loss(const MveNetwork& net, const BatchView& batch);

enum class LossKind { Nll, FixedVariance };

// How per-point losses combine within a mini-batch. The L2 penalty is added
// once per batch either way, so Sum weakens it relative to Mean by the batch
// size.
enum class BatchReduction { Mean, Sum };

struct HeadMask {
    bool mean_frozen = false;
    bool var_frozen = false;
};

struct LossGradients {
    double data_loss = 0.0;  // reduced batch loss without penalties
    double penalty = 0.0;    // L2 terms of the trainable heads
    GradientSet mean;
    GradientSet var;
};

// Loss and gradients for the trainable heads. Gradients of a frozen head are
// left at zero and its penalty is not counted. A FixedVariance loss always
// freezes the variance head.
LossGradients loss_and_gradients(const MveNetwork& net, const BatchView& batch, LossKind kind, HeadMask mask,
                                 MveWorkspace& ws, BatchReduction reduction = BatchReduction::Mean);

// In-place variant that reuses the gradient buffers held by `out`.
void loss_and_gradients(const MveNetwork& net, const BatchView& batch, LossKind kind, HeadMask mask,
                        MveWorkspace& ws, LossGradients& out, BatchReduction reduction = BatchReduction::Mean);

// Flat text serialization: layer sizes, activations, row-major parameter
// arrays and the variance floor. Parameters round-trip bit-exactly.
std::string serialize_network(const MveNetwork& net);
MveNetwork deserialize_network(const std::string& text);

}  // namespace mve
