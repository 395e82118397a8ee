#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "magdc/autodiff.hpp"
#include "magdc/data.hpp"
#include "magdc/keyvalue.hpp"
#include "magdc/model.hpp"

namespace magdc {

struct TrainConfig {
    double learning_rate = 2e-4;
    int epochs = 35;
    std::size_t batch_size = 2;
    int n_iterations = 1;  // 0 trains the ResNet alone, without data consistency
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t n_filters = 64;
    std::size_t n_blocks = 5;
    std::string init = "kaiming";  // or "zero"
    std::filesystem::path checkpoint_dir;  // empty: keep everything in memory
    bool save_every_epoch = true;
    bool evaluate_initial = false;

    void validate() const;
    KeyValues to_kv() const;
    // Missing keys keep their defaults.
    static TrainConfig from_kv(const KeyValues& kv);
};

struct AdamHyper {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One bias-corrected Adam update of a flat array; t is the 1-based step index.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& h);

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelParams& p);
};

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state, const AdamHyper& h);

// ---- Checkpoints -------------------------------------------------------------
//
// "MDCK" | u32 version | u32 config length | config key=value text (UTF-8)
//        | u32 block count | blocks: u32 name length, name, u32 rank, u32 dims..., f64 data (LE)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams params;
    AdamState adam;
    int epoch = 0;  // completed epochs
    KeyValues config;

    int n_iterations() const;
    double factor() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- Training ----------------------------------------------------------------

// Mean absolute error against a fixed target; sign(0) = 0.
Var mae_loss(Var pred, const RealImage& target);

// Forward pass for a model variant; n_iterations == 0 is the ResNet alone.
Var predict_node(const ModelVars& vars, int n_iterations, Var x_lr, const KSpaceGrid& s0, const SamplingMask& mask);
RealImage predict(const ModelParams& params, int n_iterations, const RealImage& x_lr, const KSpaceGrid& s0,
                  const SamplingMask& mask);

struct EpochLog {
    int epoch = 0;  // 1-based
    double train_mae = 0.0;
    double val_mae = 0.0;
    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

std::string loss_log_csv(std::span<const EpochLog> log);  // header epoch,train_mae,val_mae
std::vector<EpochLog> parse_loss_log_csv(const std::string& text);

struct TrainResult {
    Checkpoint final_checkpoint;
    Checkpoint best_checkpoint;  // lowest validation MAE
    std::vector<EpochLog> log;  // includes epochs read back from loss.csv when resuming into the same directory
    std::optional<double> initial_train_mae;
    std::optional<double> initial_val_mae;
};

using ProgressFn = std::function<void(const EpochLog&)>;

ModelParams initial_params(const TrainConfig& cfg);

// Mean per-sample MAE of the model over a split.
double evaluate_mae(const ModelParams& params, int n_iterations, std::span<const Sample> samples,
                    const SamplingMask& mask);

// Throws std::invalid_argument for an empty training split, std::runtime_error naming the
// epoch and batch when a loss turns non-finite.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::optional<Checkpoint>& resume = std::nullopt,
                  const ProgressFn& progress = {});

}  // namespace magdc
