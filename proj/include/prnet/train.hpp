#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prnet/data.hpp"
#include "prnet/model.hpp"
#include "prnet/ops.hpp"

// Objective, Adam optimization, early stopping, and checkpointing. The loop
// takes windows in original units plus a scaling spec; inputs and targets
// are scaled for the optimizer while the validation metric is computed in
// original units after inverse scaling.

namespace prnet::train {

struct TrainConfig {
    double learning_rate = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t batch_size = 16;
    std::int64_t max_epochs = 50;
    std::int64_t patience = 10;
    ops::Reduction loss_reduction = ops::Reduction::sum;
    std::uint64_t seed = 0;

    // learning_rate 0 is accepted (freezes the parameters, useful for
    // exercising the early-stop mechanics); negatives are not.
    void validate() const;
};

struct AdamState {
    struct Slot {
        std::string name;
        Tensor m;  // first moment, parameter shape
        Tensor v;  // second moment, parameter shape
    };
    std::vector<Slot> slots;  // parameter iteration order
    std::int64_t step = 0;

    static AdamState init(model::PRNetParams& params);
};

// L1 between predicted and target deviation stacks (both [P,H,W,2,T_pred]);
// sum mode adds over every axis, mean divides by the element count.
Tensor compute_loss(Graph& g, const Tensor& delta_hat, const Tensor& dy, ops::Reduction reduction);

// In-place bias-corrected Adam update from the gradients currently held by
// the parameters; a non-finite gradient aborts with the parameter's name.
void adam_step(model::PRNetParams& params, AdamState& state, const TrainConfig& cfg);

struct EpochStats {
    std::int64_t epoch = 0;     // 1-based
    double train_loss = 0.0;    // mean per-sample loss, scaled units
    double val_mae = 0.0;       // original units
};

struct TrainResult {
    model::PRNetParams best_params;   // parameters of the best validation epoch
    std::vector<EpochStats> history;
    std::vector<double> step_losses;  // per-optimizer-step batch loss, scaled units
    double best_val_mae = 0.0;
    std::int64_t best_epoch = 0;      // 1-based; 0 if nothing completed
    std::int64_t epochs_run = 0;
    bool diverged = false;
    std::string divergence_message;
};

// Seeded shuffling each epoch, batches of cfg.batch_size, gradients averaged
// over the actual batch size. Stops after `patience` epochs without a strict
// validation improvement or at max_epochs. On divergence (non-finite values
// anywhere in the step) the best snapshot so far is returned with the
// diverged flag set instead of propagating the error.
TrainResult train(model::PRNet& net, const std::vector<data::SampleWindow>& train_set,
                  const std::vector<data::SampleWindow>& val_set, const TrainConfig& cfg,
                  const data::ScalingSpec& scaling);

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Directory layout: <dir>/manifest.json (config, dtype, parameter names and
// shapes) plus <dir>/weights/<name>.prnf per buffer. Weights are stored at
// f32 (the tensor file payload precision), so f32 models round-trip
// bit-exactly.
void save_checkpoint(const std::string& dir, model::PRNetParams& params);
model::PRNetParams load_checkpoint(const std::string& dir);

// CSV "epoch,train_loss,val_mae" with %.17g values: rewriting the same
// history yields byte-identical files.
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace prnet::train
