#include "neuroddaf/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace neuroddaf::fusion {

ad::Var evidential_gate(ad::Tape& tape, ad::Var z_spec, ad::Var z,
                        const Tensor& gamma, const GateNetParams& p) {
    const Tensor& vs = tape.val(z_spec);
    if (!vs.same_shape(tape.val(z)) || !vs.same_shape(gamma))
        throw std::invalid_argument("evidential_gate: shape mismatch");
    ad::Var input = tape.concat_cols({z_spec, z, tape.leaf(gamma)});
    ad::Var hidden = tape.tanh_(tape.linear(input, p.w1, p.b1));
    return tape.sigmoid_(tape.linear(hidden, p.w2, p.b2));
}

ad::Var fuse(ad::Tape& tape, ad::Var z_spec, ad::Var z, ad::Var gate) {
    const Tensor& vg = tape.val(gate);
    if (!vg.same_shape(tape.val(z_spec)) || !vg.same_shape(tape.val(z)))
        throw std::invalid_argument("fuse: shape mismatch");
    for (std::size_t i = 0; i < vg.size(); ++i)
        if (vg[i] < 0.0 || vg[i] > 1.0)
            throw std::invalid_argument("fuse: gate outside [0,1]");
    ad::Var a = tape.mul(gate, tape.tanh_(z_spec));
    ad::Var one_minus = tape.add_scalar(tape.neg(gate), 1.0);
    ad::Var b = tape.mul(one_minus, tape.tanh_(z));
    return tape.neg(tape.add(a, b));
}

ad::Var decode(ad::Tape& tape, ad::Var z_final, const DecoderParams& p) {
    return tape.linear(z_final, p.w, p.b);
}

ad::Var decode_variance(ad::Tape& tape, ad::Var z_final, const DecoderParams& p) {
    if (!p.heteroscedastic)
        throw std::logic_error("decode_variance: heteroscedastic head disabled");
    return tape.exp_(tape.linear(z_final, p.w_logvar, p.b_logvar));
}

EnsembleStats ensemble_stats(const std::vector<Tensor>& members,
                             const std::vector<Tensor>* aleatoric) {
    if (members.empty()) throw std::invalid_argument("ensemble_stats: S must be >= 1");
    const int s = static_cast<int>(members.size());
    for (const Tensor& m : members)
        if (!m.same_shape(members[0]))
            throw std::invalid_argument("ensemble_stats: member shape mismatch");
    EnsembleStats out;
    out.members = members;
    out.mean.resize(members[0].rows(), members[0].cols());
    for (const Tensor& m : members)
        kernels::add(out.mean.data(), m.data(), out.mean.data(), m.size());
    kernels::scale(out.mean.data(), 1.0 / s, out.mean.data(), out.mean.size());

    out.var_epistemic.resize(out.mean.rows(), out.mean.cols());
    for (const Tensor& m : members)
        for (std::size_t i = 0; i < m.size(); ++i) {
            double d = m[i] - out.mean[i];
            out.var_epistemic[i] += d * d;
        }
    kernels::scale(out.var_epistemic.data(), 1.0 / s, out.var_epistemic.data(),
                   out.var_epistemic.size());

    out.var_aleatoric.resize(out.mean.rows(), out.mean.cols());
    if (aleatoric) {
        if (static_cast<int>(aleatoric->size()) != s)
            throw std::invalid_argument("ensemble_stats: aleatoric count mismatch");
        for (const Tensor& a : *aleatoric)
            kernels::add(out.var_aleatoric.data(), a.data(), out.var_aleatoric.data(), a.size());
        kernels::scale(out.var_aleatoric.data(), 1.0 / s, out.var_aleatoric.data(),
                       out.var_aleatoric.size());
    }
    out.var_total = out.var_epistemic + out.var_aleatoric;
    return out;
}

std::pair<Tensor, Tensor> prediction_interval(const EnsembleStats& ens, double level) {
    if (level <= 0.0 || level >= 1.0)
        throw std::invalid_argument("prediction_interval: level must be in (0,1)");
    double q = normal_quantile(0.5 * (1.0 + level));
    Tensor lo = ens.mean, hi = ens.mean;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        double hw = q * std::sqrt(ens.var_total[i]);
        lo[i] -= hw;
        hi[i] += hw;
    }
    return {lo, hi};
}

double normal_quantile(double p) {
    // Acklam's rational approximation with one Halley refinement step.
    if (p <= 0.0 || p >= 1.0)
        throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    // Halley step against the complementary error function.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2 * 3.14159265358979323846) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

NigOutput nig_head(ad::Tape& tape, ad::Var features, const NigParams& p) {
    ad::Var raw = tape.linear(features, p.w, p.b);
    int cols = tape.val(raw).cols() / 4;
    NigOutput out;
    out.mu = tape.slice_cols(raw, 0, cols);
    out.lambda = tape.add_scalar(tape.softplus_(tape.slice_cols(raw, cols, 2 * cols)), 1e-6);
    out.alpha = tape.add_scalar(tape.softplus_(tape.slice_cols(raw, 2 * cols, 3 * cols)), 1.0 + 1e-6);
    out.beta = tape.add_scalar(tape.softplus_(tape.slice_cols(raw, 3 * cols, 4 * cols)), 1e-6);
    return out;
}

Tensor nig_variance(ad::Tape& tape, const NigOutput& out) {
    const Tensor& l = tape.val(out.lambda);
    const Tensor& a = tape.val(out.alpha);
    const Tensor& b = tape.val(out.beta);
    Tensor v(l.rows(), l.cols());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = b[i] / (l[i] * (a[i] - 1.0));
    return v;
}

Tensor nig_predictive_scale_sq(ad::Tape& tape, const NigOutput& out) {
    const Tensor& l = tape.val(out.lambda);
    const Tensor& a = tape.val(out.alpha);
    const Tensor& b = tape.val(out.beta);
    Tensor v(l.rows(), l.cols());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = b[i] * (1.0 + l[i]) / (l[i] * a[i]);
    return v;
}

ad::Var evidential_loss(ad::Tape& tape, const NigOutput& out, const Tensor& y,
                        double lambda_reg) {
    if (lambda_reg < 0.0)
        throw std::invalid_argument("evidential_loss: lambda_reg must be >= 0");
    // NIG marginal (Student-t) negative log-likelihood:
    //   0.5 log(pi/lambda) - alpha log(Omega)
    //   + (alpha + 0.5) log(lambda (y-mu)^2 + Omega)
    //   + lgamma(alpha) - lgamma(alpha + 0.5),  Omega = 2 beta (1 + lambda)
    ad::Var resid = tape.sub(tape.leaf(y), out.mu);
    ad::Var r2 = tape.square_(resid);
    ad::Var omega = tape.scale(tape.mul(out.beta, tape.add_scalar(out.lambda, 1.0)), 2.0);
    const double log_pi = std::log(3.14159265358979323846);
    ad::Var nll = tape.scale(tape.add_scalar(tape.neg(tape.log_(out.lambda)), log_pi), 0.5);
    nll = tape.sub(nll, tape.mul(out.alpha, tape.log_(omega)));
    nll = tape.add(nll, tape.mul(tape.add_scalar(out.alpha, 0.5),
                                 tape.log_(tape.add(tape.mul(out.lambda, r2), omega))));
    nll = tape.add(nll, tape.sub(tape.lgamma_(out.alpha),
                                 tape.lgamma_(tape.add_scalar(out.alpha, 0.5))));
    ad::Var loss = tape.mean(nll);
    if (lambda_reg > 0.0) {
        ad::Var evidence = tape.add(tape.scale(out.lambda, 2.0), out.alpha);
        ad::Var reg = tape.mean(tape.mul(tape.abs_(resid), evidence));
        loss = tape.axpy(lambda_reg, reg, loss);
    }
    return loss;
}

} // namespace neuroddaf::fusion
