#pragma once
// Fourier-domain advection-diffusion step: real-input DFT of arbitrary
// length, physics multiplier exp(-D k^2 dt) exp(-i vk dt), learnable
// low-mode complex weights and a small spectral residual network.

#include "neuroddaf/tape.hpp"
#include "neuroddaf/tensor.hpp"

#include <complex>

namespace neuroddaf::spectral {

// Half-spectrum coefficients of a real multi-channel signal; rows are
// frequency bins 0..floor(T/2), columns are channels.
struct SpectralCoefs {
    Tensor re;
    Tensor im;
    int length = 0; // original T, needed for exact inversion
};

inline int bin_count(int length) { return length / 2 + 1; }

// Direct O(T^2) real-input DFT along rows of a T x C signal.
SpectralCoefs dft_forward(const Tensor& signal);
Tensor dft_inverse(const SpectralCoefs& coefs);

// H(k) = exp(-D k^2 dt) * exp(-i vk dt); |H| <= 1 for D, dt >= 0.
std::complex<double> multiplier(double k_norm_sq, double vk, double diffusion, double dt);

// Angular frequency assigned to bin j of a length-T sequence sampled at
// spacing dt: k_j = pi * j / ((bins-1) * dt), so k spans [0, pi/dt].
double bin_frequency(int bin, int length, double dt);

// Constant DFT/IDFT matrices for a given length (cached).
struct DftMatrices {
    Tensor fwd_re;  // bins x T
    Tensor fwd_im;  // bins x T
    Tensor inv_re;  // T x bins
    Tensor inv_im;  // T x bins
};
const DftMatrices& dft_matrices(int length);

struct SpectralParams {
    ad::Var w_re;  // m x d (learned complex mode weights)
    ad::Var w_im;  // m x d
    ad::Var r_w1;  // 4 x hidden (residual net on (Re, Im, |k|, t))
    ad::Var r_b1;  // 1 x hidden
    ad::Var r_w2;  // hidden x 2
    ad::Var r_b2;  // 1 x 2
    int m = 8;
    bool residual_enabled = true;
};

// One spectral transport step on a T x d sequence: DFT, modulate the lowest
// m bins by (learned weight * H), add the spectral residual, zero bins >= m,
// inverse DFT. Throws if m exceeds the bin count.
ad::Var fourier_pde_step(ad::Tape& tape, ad::Var seq, const SpectralParams& p,
                         double diffusion, double advection_speed, double dt,
                         double time_coord = 0.0);

// Default mode count from configuration, clamped to the available bins.
inline int clamp_modes(int m, int length) {
    int b = bin_count(length);
    return m < b ? m : b;
}

} // namespace neuroddaf::spectral
