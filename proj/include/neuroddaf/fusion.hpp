#pragma once
// Evidential gate fusing the spectral and ODE branches, decoding, ensemble
// statistics, Normal-Inverse-Gamma regression head and prediction intervals.

#include "neuroddaf/tape.hpp"
#include "neuroddaf/tensor.hpp"

#include <utility>
#include <vector>

namespace neuroddaf::fusion {

struct GateNetParams {
    ad::Var w1; // 3*d x hidden
    ad::Var b1;
    ad::Var w2; // hidden x d
    ad::Var b2;
};

// gate = sigmoid(MLP([Z_spec || Z || gamma])), gamma ~ U[0,1) same shape.
ad::Var evidential_gate(ad::Tape& tape, ad::Var z_spec, ad::Var z,
                        const Tensor& gamma, const GateNetParams& p);

// Z_final = -gate .* tanh(Z_spec) - (1-gate) .* tanh(Z)
ad::Var fuse(ad::Tape& tape, ad::Var z_spec, ad::Var z, ad::Var gate);

struct DecoderParams {
    ad::Var w; // d_l x d'
    ad::Var b; // 1 x d'
    bool heteroscedastic = false;
    ad::Var w_logvar; // d_l x d'
    ad::Var b_logvar;
};

ad::Var decode(ad::Tape& tape, ad::Var z_final, const DecoderParams& p);
// Aleatoric variance exp(logvar); only valid when heteroscedastic.
ad::Var decode_variance(ad::Tape& tape, ad::Var z_final, const DecoderParams& p);

struct EnsembleStats {
    std::vector<Tensor> members;
    Tensor mean;
    Tensor var_epistemic; // population (1/S) normalization
    Tensor var_aleatoric; // zero when no aleatoric inputs given
    Tensor var_total;
};

EnsembleStats ensemble_stats(const std::vector<Tensor>& members,
                             const std::vector<Tensor>* aleatoric = nullptr);

// Ybar +/- q * sqrt(V_tot) with q the standard-normal quantile at (1+level)/2.
std::pair<Tensor, Tensor> prediction_interval(const EnsembleStats& ens, double level);

// Inverse standard-normal CDF (rational approximation, ~1e-9 accuracy).
double normal_quantile(double p);

struct NigParams {
    ad::Var w; // feat x 4 (mu, lambda_raw, alpha_raw, beta_raw)
    ad::Var b; // 1 x 4
};

struct NigOutput {
    ad::Var mu;
    ad::Var lambda; // softplus + 1e-6
    ad::Var alpha;  // 1 + softplus + 1e-6
    ad::Var beta;   // softplus + 1e-6
};

NigOutput nig_head(ad::Tape& tape, ad::Var features, const NigParams& p);

// Paper-quoted NIG variance beta/(lambda*(alpha-1)).
Tensor nig_variance(ad::Tape& tape, const NigOutput& out);
// Posterior-predictive Student-t scale^2 = beta*(1+lambda)/(lambda*alpha).
Tensor nig_predictive_scale_sq(ad::Tape& tape, const NigOutput& out);

// Mean NIG negative log-likelihood plus lambda_reg * |y-mu| * (2 lambda + alpha).
ad::Var evidential_loss(ad::Tape& tape, const NigOutput& out, const Tensor& y,
                        double lambda_reg);

} // namespace neuroddaf::fusion
