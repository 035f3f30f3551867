#pragma once
// Full forecasting model: parameter registry, the encode -> sample -> ODE ->
// spectral fusion -> decode pipeline, ensemble aggregation and checkpoint IO.

#include "neuroddaf/dataio.hpp"
#include "neuroddaf/encoder.hpp"
#include "neuroddaf/fusion.hpp"
#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/odecore.hpp"
#include "neuroddaf/rng.hpp"
#include "neuroddaf/spectral.hpp"
#include "neuroddaf/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace neuroddaf::model {

struct ModelConfig {
    int T = 24;
    int tau = 24;
    int d_l = 4;
    int gru_hidden = 64;
    int gat_out = 8;
    int K = 2;
    int S = 3;
    int m_modes = 8;
    int gate_hidden = 16;   // fusion gate MLP
    int phi_hidden = 16;    // residual field MLP
    int cond_dim = 8;       // encoder conditioning projected into the field
    int wind_proj = 4;      // transport-gate wind projection
    int spectral_hidden = 8;
    double rtol = 1e-5;
    double atol = 1e-5;
    double dt = 1.0;        // latent time units per 3-hour step
    double dropout = 0.1;
    double sigma_floor = 1e-4;
    bool spectral_in_field = true;
    bool spectral_residual = true;
    bool heteroscedastic = true;
    bool evidential = true;
    std::string filter_type = "diff_adv"; // diff | adv | diff_adv
};

// Named trainable tensors with gradient and Adam moment slots.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor adam_m;
        Tensor adam_v;
    };

    int add(const std::string& name, Tensor init);
    int count() const { return static_cast<int>(entries_.size()); }
    Entry& at(int i) { return entries_[i]; }
    const Entry& at(int i) const { return entries_[i]; }
    Entry& find(const std::string& name);
    const Entry& find(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grads();
    double grad_global_norm() const;

private:
    std::vector<Entry> entries_;
};

// Static per-dataset graph quantities evaluated at a forecast origin.
struct GraphContext {
    Tensor laplacian;   // N x N
    Tensor advection;   // N x N, learned mode
    Tensor adj_mask;    // N x N
    Tensor wind_feat;   // N x 3
    double mean_wind_speed = 0.0;
};

GraphContext make_graph_context(const graphnet::DynamicGraph& g, int t);

// Wind-aware context lookup for one dataset segment: shares the static graph
// topology, takes the wind from the segment's own series and rebuilds the
// advection operator / wind features at each requested step. Contexts are
// cached per step; the Laplacian and adjacency mask are shared.
class GraphContextSeries {
public:
    GraphContextSeries(const graphnet::DynamicGraph& topology,
                       const dataio::SeriesTable& series);
    // t indexes into the segment timeline (typically a forecast origin).
    const GraphContext& at(int t) const;
    int steps() const { return static_cast<int>(cache_.size()); }

private:
    graphnet::DynamicGraph graph_;
    mutable std::vector<GraphContext> cache_;
    mutable std::vector<char> ready_;
};

// All parameters bound as tape leaves for one forward/backward pass.
struct BoundParams {
    std::vector<ad::Var> vars; // aligned with ParamStore entries
    encoder::EncoderParams enc;
    ad::Var w_cond, b_cond;
    std::vector<ad::Var> theta_d, theta_a;
    graphnet::GateParams transport;
    spectral::SpectralParams spec_field; // station-axis step inside the field
    spectral::SpectralParams spec_temp;  // temporal step on trajectories
    odecore::PhiParams phi;
    fusion::GateNetParams fusion_gate;
    fusion::DecoderParams decoder;
    fusion::NigParams nig;
    ad::Var diffusion_raw; // 1x1; D = softplus(raw) + 1e-6
};

struct ForwardResult {
    std::vector<ad::Var> y_samples;  // S tensors, tau x N
    ad::Var y_mean;                  // tau x N
    std::vector<ad::Var> aleatoric;  // tau x N per sample (heteroscedastic)
    bool has_nig = false;
    fusion::NigOutput nig;           // on mean fused latent, tau x N each
    ad::Var diffusion;               // 1x1 positive scalar
    BoundParams bound;
};

class Model {
public:
    Model(const ModelConfig& cfg, int n_stations, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    int n_stations() const { return n_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    BoundParams bind(ad::Tape& tape) const;

    // One window: inputs[t] is N x 1 (normalized target channel), t = 0..T-1.
    // training enables MC dropout; rng drives z0 sampling, dropout and the
    // fusion gate noise.
    ForwardResult forward(ad::Tape& tape, const std::vector<Tensor>& inputs,
                          const GraphContext& gc, Rng& rng, bool training) const;

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    ModelConfig cfg_;
    int n_ = 0;
    ParamStore params_;
};

std::string filter_type_names(); // "diff, adv, diff_adv"
odecore::FieldMode parse_filter_type(const std::string& s);

} // namespace neuroddaf::model
