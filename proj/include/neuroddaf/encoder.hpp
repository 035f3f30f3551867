#pragma once
// GRU temporal encoder + wind-aware GAT spatial encoder, variational z0 head.
// Convention: h' = (1-u).*n + u.*h with update gate u and candidate n.

#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/rng.hpp"
#include "neuroddaf/tape.hpp"

#include <vector>

namespace neuroddaf::encoder {

struct GruParams {
    // Gate order within the stacked matrices: [reset | update | candidate].
    ad::Var wx; // in x 3h
    ad::Var wh; // h x 3h
    ad::Var b;  // 1 x 3h
    int hidden = 64;
};

ad::Var gru_cell(ad::Tape& tape, ad::Var x, ad::Var h, const GruParams& p);

struct GatParams {
    ad::Var w;       // in x out projection
    ad::Var a_self;  // out x 1 attention vector, self part
    ad::Var a_neigh; // out x 1 attention vector, neighbor part
    ad::Var a_wind;  // d_w x 1 attention vector on neighbor wind features
    double leaky_slope = 0.2;
};

// z_i = tanh(sum_{j in N(i) u {i}} alpha_ij W h_j); softmax over the masked
// neighborhood including self-loops.
ad::Var gat_layer(ad::Tape& tape, ad::Var h, const Tensor& adj_mask,
                  ad::Var wind_feat, const GatParams& p);

struct HeadParams {
    ad::Var w_mu;    // d_e x d_l
    ad::Var b_mu;    // 1 x d_l
    ad::Var w_sigma; // d_e x d_l
    ad::Var b_sigma; // 1 x d_l
    double sigma_floor = 1e-4;
};

struct EncoderParams {
    GruParams gru;
    GatParams gat;
    HeadParams head;
};

struct EncoderOutput {
    ad::Var e_t;      // N x (hidden + gat_out)
    ad::Var mu_z0;    // N x d_l
    ad::Var sigma_z0; // N x d_l, softplus + floor
};

// Runs the GRU over the target channel (inputs[t] is N x 1), applies the GAT
// to the final hidden state, concatenates, maps to (mu, sigma).
EncoderOutput encode_sequence(ad::Tape& tape, const std::vector<Tensor>& inputs,
                              const Tensor& adj_mask, const Tensor& wind_feat,
                              const EncoderParams& p);

// Reparameterized z0 samples: mu + sigma .* eps, eps ~ N(0, I) from rng.
std::vector<ad::Var> sample_z0(ad::Tape& tape, const EncoderOutput& out,
                               int samples, Rng& rng);

} // namespace neuroddaf::encoder
