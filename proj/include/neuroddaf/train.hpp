#pragma once
// Loss assembly (forecast MAE + physics residual + evidential term), Adam
// with global-norm clipping, learning-rate step decay and early stopping.

#include "neuroddaf/dataio.hpp"
#include "neuroddaf/model.hpp"
#include "neuroddaf/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace neuroddaf::train {

struct TrainConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 32;
    double lr_decay = 0.5;   // multiplier applied every lr_decay_epochs
    int lr_decay_epochs = 20;
    double grad_clip_norm = 5.0;
    int max_epochs = 50;
    int patience = 10;
    double lambda_phys = 1e-2;
    double lambda_unc = 1e-3;
    double lambda_reg = 1e-2; // evidence regularizer inside the NIG loss
    int window_stride = 1;    // training windows sampled every stride-th start
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_mae = 0.0;
};

// Discrete physics residual P_h[Y]_t = (Y_{t+1} - Y_t)/dt + D L Y_t - M Y_t,
// mean of squared entries over t = 0..tau-2. Y rows are horizon steps,
// columns stations; the operators act on station vectors. Throws for tau < 2.
ad::Var pde_residual_loss(ad::Tape& tape, ad::Var y, const Tensor& laplacian,
                          const Tensor& advection, ad::Var diffusion, double dt);

// Non-tape evaluation used by oracles and the theory suite.
double pde_residual_value(const Tensor& y, const Tensor& laplacian,
                          const Tensor& advection, double diffusion, double dt);

struct LossParts {
    ad::Var total;
    double forecast = 0.0;
    double pde = 0.0;
    double evidential = 0.0;
};

// L = MAE(y_mean, y_true) + lambda_phys * pde + lambda_unc * evidential.
LossParts total_loss(ad::Tape& tape, const model::ForwardResult& fwd, const Tensor& y_true,
                     const model::GraphContext& gc, const model::ModelConfig& mcfg,
                     const TrainConfig& cfg);

struct AdamState {
    int step = 0;
};

// Global-norm clip (to cfg.grad_clip_norm) before moments, then standard
// bias-corrected Adam. Throws on non-finite gradients, naming the parameter.
void adam_step(model::ParamStore& params, AdamState& state, const TrainConfig& cfg, double lr);

struct FitResult {
    TrainHistory history;
};

// Full training loop over the windowed splits; restores best-val parameters.
FitResult fit(model::Model& m, const dataio::SplitResult& data,
              const model::GraphContext& gc, const TrainConfig& cfg);

// Wind-aware variant: rebuilds the advection operator and wind features at
// each window's forecast origin from the segment's own wind series instead of
// freezing one context for the whole run.
FitResult fit(model::Model& m, const dataio::SplitResult& data,
              const graphnet::DynamicGraph& topology, const TrainConfig& cfg);

// Forecast windows of a dataset with the trained model; returns de-normalized
// per-window ensemble statistics against de-normalized targets.
struct EvalResult {
    double mae = 0.0;
    double rmse = 0.0;
    double coverage90 = 0.0;
    int points = 0;
};

EvalResult evaluate(const model::Model& m, const dataio::WindowedDataset& ds,
                    const model::GraphContext& gc, std::uint64_t seed, int stride = 1);

// Wind-aware variant using per-origin contexts from the segment wind series.
EvalResult evaluate(const model::Model& m, const dataio::WindowedDataset& ds,
                    const graphnet::DynamicGraph& topology, std::uint64_t seed,
                    int stride = 1);

// Baselines for the synthetic benchmark gate.
double persistence_mae(const dataio::WindowedDataset& ds, int stride = 1);
double linear_baseline_mae(const dataio::WindowedDataset& train,
                           const dataio::WindowedDataset& test, int stride = 1);

void write_history_csv(const std::string& path, const TrainHistory& h);

} // namespace neuroddaf::train
