#include "neuroddaf/encoder.hpp"

#include <stdexcept>

namespace neuroddaf::encoder {

ad::Var gru_cell(ad::Tape& tape, ad::Var x, ad::Var h, const GruParams& p) {
    int hid = p.hidden;
    ad::Var px = tape.linear(x, p.wx, p.b); // N x 3h
    ad::Var ph = tape.matmul(h, p.wh);      // N x 3h
    ad::Var r = tape.sigmoid_(tape.add(tape.slice_cols(px, 0, hid),
                                       tape.slice_cols(ph, 0, hid)));
    ad::Var u = tape.sigmoid_(tape.add(tape.slice_cols(px, hid, 2 * hid),
                                       tape.slice_cols(ph, hid, 2 * hid)));
    ad::Var n = tape.tanh_(tape.add(tape.slice_cols(px, 2 * hid, 3 * hid),
                                    tape.mul(r, tape.slice_cols(ph, 2 * hid, 3 * hid))));
    // (1-u).*n + u.*h
    return tape.add(n, tape.mul(u, tape.sub(h, n)));
}

ad::Var gat_layer(ad::Tape& tape, ad::Var h, const Tensor& adj_mask,
                  ad::Var wind_feat, const GatParams& p) {
    ad::Var wh = tape.matmul(h, p.w);
    ad::Var e_self = tape.matmul(wh, p.a_self);
    ad::Var e_neigh = tape.add(tape.matmul(wh, p.a_neigh),
                               tape.matmul(wind_feat, p.a_wind));
    ad::Var logits = tape.leaky_relu(tape.outer_add(e_self, e_neigh), p.leaky_slope);
    ad::Var alpha = tape.row_softmax_masked(logits, adj_mask);
    return tape.tanh_(tape.matmul(alpha, wh));
}

EncoderOutput encode_sequence(ad::Tape& tape, const std::vector<Tensor>& inputs,
                              const Tensor& adj_mask, const Tensor& wind_feat,
                              const EncoderParams& p) {
    if (inputs.empty()) throw std::invalid_argument("encode_sequence: empty input window");
    int n = inputs[0].rows();
    ad::Var h = tape.leaf(Tensor(n, p.gru.hidden));
    for (const Tensor& x : inputs)
        h = gru_cell(tape, tape.leaf(x), h, p.gru);
    ad::Var wind = tape.leaf(wind_feat);
    ad::Var z = gat_layer(tape, h, adj_mask, wind, p.gat);
    ad::Var e_t = tape.concat_cols({h, z});
    ad::Var mu = tape.linear(e_t, p.head.w_mu, p.head.b_mu);
    ad::Var sigma = tape.add_scalar(
        tape.softplus_(tape.linear(e_t, p.head.w_sigma, p.head.b_sigma)),
        p.head.sigma_floor);
    return {e_t, mu, sigma};
}

std::vector<ad::Var> sample_z0(ad::Tape& tape, const EncoderOutput& out,
                               int samples, Rng& rng) {
    if (samples < 1) throw std::invalid_argument("sample_z0: S must be >= 1");
    const Tensor& mu = tape.val(out.mu_z0);
    std::vector<ad::Var> zs;
    zs.reserve(samples);
    for (int s = 0; s < samples; ++s) {
        Tensor eps(mu.rows(), mu.cols());
        for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
        zs.push_back(tape.add(out.mu_z0, tape.mul_const(out.sigma_z0, eps)));
    }
    return zs;
}

} // namespace neuroddaf::encoder
