#pragma once
// Training driver for the three schedules (no warm-up, warm-up, warm-up with
// a fixed mean) under equal or separate L2 regularization of the two heads.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mve/evaluation.hpp"
#include "mve/mve_model.hpp"
#include "mve/nn_core.hpp"

namespace mve {

enum class Strategy { NoWarmup, Warmup, WarmupFixedMean };
enum class RegMode { Equal, Separate };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
std::string_view reg_mode_name(RegMode m);
RegMode parse_reg_mode(std::string_view name);

inline constexpr Strategy kAllStrategies[] = {Strategy::NoWarmup, Strategy::Warmup, Strategy::WarmupFixedMean};
inline constexpr RegMode kAllRegModes[] = {RegMode::Equal, RegMode::Separate};

struct TrainConfig {
    Strategy strategy = Strategy::Warmup;
    RegMode reg_mode = RegMode::Equal;
    double lambda_mean = 0.0;
    double lambda_var = 0.0;
    std::size_t epochs_per_stage = 1000;
    std::size_t batch_size = 32;
    double clip_threshold = 5.0;
    BatchReduction reduction = BatchReduction::Mean;
    std::uint64_t seed = 0;
    AdamSettings adam;
    MveArchitecture arch;

    // Throws ConfigError; Equal mode requires lambda_mean == lambda_var.
    void validate() const;
    std::size_t stage_count() const { return strategy == Strategy::NoWarmup ? 1 : 2; }
    std::size_t total_epochs() const { return stage_count() * epochs_per_stage; }
};

// "key = value" lines; '#' starts a comment. Round-trips every field.
std::string config_to_text(const TrainConfig& cfg);
TrainConfig config_from_text(std::string_view text);

enum class ParamGroup { MeanHead, VarianceHead };

struct FreezeMask {
    bool mean_head = false;
    bool variance_head = false;

    bool empty() const { return !mean_head && !variance_head; }
    bool contains(ParamGroup g) const { return g == ParamGroup::MeanHead ? mean_head : variance_head; }
    bool operator==(const FreezeMask&) const = default;
};

// Stages are numbered from 1. Throws ConfigError for a stage the strategy
// does not have.
FreezeMask freeze_mask(Strategy strategy, std::size_t stage);
LossKind stage_loss(Strategy strategy, std::size_t stage);

struct TrainTrace {
    std::vector<double> train_loss;       // epoch mean of (batch loss + L2 penalty)
    std::vector<double> validation_loss;  // nll_loss on the validation split, when one is given
    std::vector<std::size_t> stage_boundaries;  // first epoch index of each stage
};

struct TrainResult {
    MveNetwork net;
    TrainTrace trace;
};

// `data` (and `validation`) must already be standardized. The network's L2
// constants are overwritten from the config. Throws DivergenceError on a
// non-finite loss and DataError on an empty dataset.
TrainResult train(MveNetwork net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* validation = nullptr);

// Runs one stage in place and appends to `trace`. Each stage shuffles with its
// own stream derived from (cfg.seed, stage), so a stage's outcome depends only
// on the network it starts from; train() is equivalent to calling this for
// every stage in order.
void train_stage(MveNetwork& net, const Dataset& data, const TrainConfig& cfg, std::size_t stage, TrainTrace& trace,
                 const Dataset* validation = nullptr);

// Initial network for a config; independent of strategy and L2 constants so
// that arms trained from the same seed start from identical parameters.
MveNetwork initial_network(std::size_t input_dim, const TrainConfig& cfg);

// Fresh network from cfg.arch and cfg.seed, then train.
TrainResult train_new(const Dataset& data, const TrainConfig& cfg, const Dataset* validation = nullptr);

}  // namespace mve
