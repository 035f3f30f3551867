#include "neuroddaf/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace neuroddaf::spectral {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

SpectralCoefs dft_forward(const Tensor& signal) {
    int t_len = signal.rows();
    int ch = signal.cols();
    if (t_len < 1) throw std::invalid_argument("dft_forward: empty signal");
    if (!signal.finite()) throw std::invalid_argument("dft_forward: non-finite input");
    int bins = bin_count(t_len);
    SpectralCoefs out;
    out.length = t_len;
    out.re.resize(bins, ch);
    out.im.resize(bins, ch);
    for (int b = 0; b < bins; ++b)
        for (int t = 0; t < t_len; ++t) {
            double ang = kTwoPi * b * t / t_len;
            double c = std::cos(ang), s = -std::sin(ang);
            for (int k = 0; k < ch; ++k) {
                out.re(b, k) += c * signal(t, k);
                out.im(b, k) += s * signal(t, k);
            }
        }
    return out;
}

Tensor dft_inverse(const SpectralCoefs& coefs) {
    int t_len = coefs.length;
    int bins = coefs.re.rows();
    if (bins != bin_count(t_len) || !coefs.re.same_shape(coefs.im))
        throw std::invalid_argument("dft_inverse: inconsistent stored length");
    int ch = coefs.re.cols();
    Tensor out(t_len, ch);
    for (int t = 0; t < t_len; ++t)
        for (int b = 0; b < bins; ++b) {
            double cb = (b == 0 || (t_len % 2 == 0 && b == t_len / 2)) ? 1.0 : 2.0;
            double ang = kTwoPi * b * t / t_len;
            double c = cb * std::cos(ang) / t_len;
            double s = -cb * std::sin(ang) / t_len;
            for (int k = 0; k < ch; ++k)
                out(t, k) += c * coefs.re(b, k) + s * coefs.im(b, k);
        }
    return out;
}

std::complex<double> multiplier(double k_norm_sq, double vk, double diffusion, double dt) {
    if (diffusion < 0.0 || dt < 0.0)
        throw std::invalid_argument("spectral multiplier: D and dt must be nonnegative");
    double mag = std::exp(-diffusion * k_norm_sq * dt);
    double phase = -vk * dt;
    return {mag * std::cos(phase), mag * std::sin(phase)};
}

double bin_frequency(int bin, int length, double dt) {
    int bins = bin_count(length);
    if (bins <= 1) return 0.0;
    return 3.14159265358979323846 * bin / ((bins - 1) * dt);
}

const DftMatrices& dft_matrices(int length) {
    static std::map<int, DftMatrices> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(length);
    if (it != cache.end()) return it->second;
    DftMatrices m;
    int bins = bin_count(length);
    m.fwd_re.resize(bins, length);
    m.fwd_im.resize(bins, length);
    m.inv_re.resize(length, bins);
    m.inv_im.resize(length, bins);
    for (int b = 0; b < bins; ++b)
        for (int t = 0; t < length; ++t) {
            double ang = kTwoPi * b * t / length;
            m.fwd_re(b, t) = std::cos(ang);
            m.fwd_im(b, t) = -std::sin(ang);
            double cb = (b == 0 || (length % 2 == 0 && b == length / 2)) ? 1.0 : 2.0;
            m.inv_re(t, b) = cb * std::cos(ang) / length;
            m.inv_im(t, b) = -cb * std::sin(ang) / length;
        }
    return cache.emplace(length, std::move(m)).first->second;
}

ad::Var fourier_pde_step(ad::Tape& tape, ad::Var seq, const SpectralParams& p,
                         double diffusion, double advection_speed, double dt,
                         double time_coord) {
    const Tensor& x = tape.val(seq);
    int t_len = x.rows();
    int d = x.cols();
    int bins = bin_count(t_len);
    int m = p.m;
    if (m < 1 || m > bins)
        throw std::invalid_argument("fourier_pde_step: mode count out of range");

    const DftMatrices& dft = dft_matrices(t_len);
    ad::Var re = tape.matmul_cl(dft.fwd_re, seq);
    ad::Var im = tape.matmul_cl(dft.fwd_im, seq);

    // Physics multiplier per bin, broadcast over channels. Bins >= m are
    // zeroed by the padded learned weights below.
    Tensor h_re(bins, d), h_im(bins, d);
    for (int b = 0; b < m; ++b) {
        double k = bin_frequency(b, t_len, dt);
        std::complex<double> h = multiplier(k * k, advection_speed * k, diffusion, dt);
        for (int j = 0; j < d; ++j) {
            h_re(b, j) = h.real();
            h_im(b, j) = h.imag();
        }
    }
    ad::Var re_h = tape.sub(tape.mul_const(re, h_re), tape.mul_const(im, h_im));
    ad::Var im_h = tape.add(tape.mul_const(re, h_im), tape.mul_const(im, h_re));

    // Pad the m x d learned weights to bins x d (zeros above mode m).
    Tensor pad(bins, m);
    for (int b = 0; b < m; ++b) pad(b, b) = 1.0;
    ad::Var w_re = tape.matmul_cl(pad, p.w_re);
    ad::Var w_im = tape.matmul_cl(pad, p.w_im);

    ad::Var out_re = tape.sub(tape.mul(w_re, re_h), tape.mul(w_im, im_h));
    ad::Var out_im = tape.add(tape.mul(w_re, im_h), tape.mul(w_im, re_h));

    if (p.residual_enabled) {
        // Residual network on (Re, Im, |k|, t) per retained (bin, channel).
        Tensor take = pad.transposed(); // m x bins
        ad::Var rre = tape.reshape(tape.matmul_cl(take, out_re), m * d, 1);
        ad::Var rim = tape.reshape(tape.matmul_cl(take, out_im), m * d, 1);
        Tensor kcol(m * d, 1), tcol(m * d, 1, time_coord);
        for (int b = 0; b < m; ++b) {
            double k = std::fabs(bin_frequency(b, t_len, dt));
            for (int j = 0; j < d; ++j) kcol(b * d + j, 0) = k;
        }
        ad::Var input = tape.concat_cols({rre, rim, tape.leaf(std::move(kcol)), tape.leaf(std::move(tcol))});
        ad::Var hidden = tape.tanh_(tape.linear(input, p.r_w1, p.r_b1));
        ad::Var delta = tape.linear(hidden, p.r_w2, p.r_b2);
        ad::Var d_re = tape.reshape(tape.slice_cols(delta, 0, 1), m, d);
        ad::Var d_im = tape.reshape(tape.slice_cols(delta, 1, 2), m, d);
        out_re = tape.add(out_re, tape.matmul_cl(pad, d_re));
        out_im = tape.add(out_im, tape.matmul_cl(pad, d_im));
    }

    return tape.add(tape.matmul_cl(dft.inv_re, out_re), tape.matmul_cl(dft.inv_im, out_im));
}

} // namespace neuroddaf::spectral
