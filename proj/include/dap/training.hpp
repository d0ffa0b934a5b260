#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dap/example.hpp"
#include "dap/network.hpp"

namespace dap {

struct TrainingConfig {
    double learning_rate = 1e-2;
    double decay_factor = 0.1;
    std::size_t decay_every = 100; // epochs
    std::size_t max_epochs = 1000;
    double clip_value = 10.0;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::size_t threads = 1; // per-batch example parallelism; 0 = hardware

    void validate() const;
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const ParamSet& shape);
};

struct EpochReport {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
};

// -log(probs[label]) with a 1e-12 probability floor.
double cross_entropy_loss(const Matrix& probs, std::size_t label);

struct BatchGradients {
    ParamSet grads;
    double mean_loss = 0.0;
};

// Mean loss over the batch and gradients of that mean w.r.t. every
// parameter, unrolled over all three cells. Per-example gradients may be
// computed in parallel; they are reduced in example order so the result is
// independent of thread count.
BatchGradients bptt_gradients(const ModelParameters& m, std::span<const Example> batch,
                              std::size_t threads = 1);

// Element-wise clamp to [-clip_value, +clip_value].
void clip_gradients(ParamSet& grads, double clip_value);

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr);

// learning_rate * decay_factor^floor(epoch / decay_every), computed by
// iterated multiplication.
double lr_schedule(const TrainingConfig& config, std::size_t epoch);

struct TrainResult {
    ModelParameters model; // parameters achieving the best validation loss
    std::vector<EpochReport> reports;
};

// Epoch loop: deterministic shuffling from the config seed, clipping before
// each Adam step, checkpoint-best on validation loss. If val_set is empty
// the training loss is used for checkpointing and reported as val_loss.
TrainResult train(ModelParameters model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainingConfig& config,
                  const std::function<void(const EpochReport&)>& progress = {});

} // namespace dap
