#pragma once
// Adaptive Dormand-Prince (5,4) integration on the autodiff tape, the model
// vector field, and Monte-Carlo trajectory ensembles. Step-size control uses
// detached values; gradients flow through the accepted stages with step
// sizes treated as constants.

#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/rng.hpp"
#include "neuroddaf/spectral.hpp"
#include "neuroddaf/tape.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace neuroddaf::odecore {

struct OdeConfig {
    double rtol = 1e-5;
    double atol = 1e-5;
    int max_steps = 100000;
    double initial_dt = 0.1;
    double safety = 0.9;
    double min_dt = 1e-12;
};

class OdeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// dz/dt = f(z, t)
using Field = std::function<ad::Var(ad::Tape&, ad::Var, double)>;

struct StepResult {
    ad::Var z_next;   // 5th-order solution
    ad::Var f_next;   // f(z_next, t+dt), reusable as the next first stage
    double error;     // scaled RMS of the embedded (5th - 4th) difference
};

// One embedded step. f_start may pass a previously computed f(z, t) (FSAL).
StepResult dopri5_step(ad::Tape& tape, const Field& f, ad::Var z, double t,
                       double dt, double atol, double rtol, ad::Var f_start = {});

struct Trajectory {
    std::vector<double> times;
    std::vector<ad::Var> states;
    int accepted = 0;
    int rejected = 0;
};

// Adaptive integration from t0 emitting dense output (cubic Hermite) at the
// strictly increasing requested times.
Trajectory odeint(ad::Tape& tape, const Field& f, ad::Var z0, double t0,
                  const std::vector<double>& times, const OdeConfig& cfg);

// n equal dopri5 steps ignoring the error estimate.
ad::Var fixed_step_integrate(ad::Tape& tape, const Field& f, ad::Var z0,
                             double t0, double t_end, int n_steps);

enum class FieldMode { full, linear_theory, diffusion_only, advection_only };

struct PhiParams {
    ad::Var w1; // (d_l + d_cond) x hidden
    ad::Var b1;
    ad::Var w2; // hidden x d_l
    ad::Var b2;
    Tensor dropout_mask; // N x hidden; empty = no dropout
};

struct VectorFieldSpec {
    FieldMode mode = FieldMode::full;

    Tensor laplacian; // N x N
    Tensor advection; // N x N (learned or theory form)
    double diffusion = 1.0;

    // full-mode pieces
    std::vector<ad::Var> theta_d;
    std::vector<ad::Var> theta_a;
    graphnet::GateParams gate;
    Tensor wind_feat; // N x 3
    bool has_spectral = false;
    spectral::SpectralParams spec;
    double spectral_dt = 1.0;
    double mean_wind_speed = 0.0;
    bool has_phi = false;
    PhiParams phi;
    Tensor cond; // N x d_cond encoder conditioning
};

ad::Var vector_field(ad::Tape& tape, ad::Var z, double t, const VectorFieldSpec& spec);

// Field closure over a spec that must outlive the returned callable.
Field make_field(const VectorFieldSpec& spec);

// S trajectories, one per z0 sample; per-sample dropout masks on the Phi
// hidden layer are drawn from rng and held fixed along each trajectory.
std::vector<Trajectory> mc_trajectories(ad::Tape& tape, const VectorFieldSpec& spec,
                                        const std::vector<ad::Var>& z0_samples,
                                        double t0, const std::vector<double>& times,
                                        const OdeConfig& cfg, double dropout_rate,
                                        Rng& rng);

} // namespace neuroddaf::odecore
