#include "neuroddaf/odecore.hpp"

#include <cmath>
#include <limits>

namespace neuroddaf::odecore {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// 5th - 4th order weights (includes the k7 stage).
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                 e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                 e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

ad::Var combine(ad::Tape& tape, ad::Var z, double dt,
                std::initializer_list<std::pair<double, ad::Var>> terms) {
    ad::Var acc = z;
    for (const auto& [w, k] : terms)
        if (w != 0.0) acc = tape.axpy(dt * w, k, acc);
    return acc;
}

} // namespace

StepResult dopri5_step(ad::Tape& tape, const Field& f, ad::Var z, double t,
                       double dt, double atol, double rtol, ad::Var f_start) {
    if (dt <= 0.0) throw std::invalid_argument("dopri5_step: dt must be positive");
    ad::Var k1 = f_start.valid() ? f_start : f(tape, z, t);
    ad::Var k2 = f(tape, combine(tape, z, dt, {{a21, k1}}), t + c2 * dt);
    ad::Var k3 = f(tape, combine(tape, z, dt, {{a31, k1}, {a32, k2}}), t + c3 * dt);
    ad::Var k4 = f(tape, combine(tape, z, dt, {{a41, k1}, {a42, k2}, {a43, k3}}), t + c4 * dt);
    ad::Var k5 = f(tape, combine(tape, z, dt, {{a51, k1}, {a52, k2}, {a53, k3}, {a54, k4}}),
                   t + c5 * dt);
    ad::Var k6 = f(tape,
                   combine(tape, z, dt, {{a61, k1}, {a62, k2}, {a63, k3}, {a64, k4}, {a65, k5}}),
                   t + dt);
    ad::Var z_next = combine(tape, z, dt, {{b1, k1}, {b3, k3}, {b4, k4}, {b5, k5}, {b6, k6}});
    ad::Var k7 = f(tape, z_next, t + dt);

    // Error estimate from detached values.
    const Tensor& vz = tape.val(z);
    const Tensor& vn = tape.val(z_next);
    if (!vn.finite() || !tape.val(k7).finite())
        return {z_next, k7, std::numeric_limits<double>::infinity()};
    const Tensor& v1 = tape.val(k1);
    const Tensor& v3 = tape.val(k3);
    const Tensor& v4 = tape.val(k4);
    const Tensor& v5 = tape.val(k5);
    const Tensor& v6 = tape.val(k6);
    const Tensor& v7 = tape.val(k7);
    double acc = 0.0;
    for (std::size_t i = 0; i < vz.size(); ++i) {
        double err = dt * (e1 * v1[i] + e3 * v3[i] + e4 * v4[i] + e5 * v5[i] + e6 * v6[i] + e7 * v7[i]);
        double scale = atol + rtol * std::max(std::fabs(vz[i]), std::fabs(vn[i]));
        double r = err / scale;
        acc += r * r;
    }
    double error = std::sqrt(acc / static_cast<double>(vz.size()));
    if (!std::isfinite(error)) error = std::numeric_limits<double>::infinity();
    return {z_next, k7, error};
}

namespace {

// Cubic Hermite interpolation within an accepted step [t, t+h].
ad::Var hermite(ad::Tape& tape, double theta, double h,
                ad::Var z0, ad::Var z1, ad::Var f0, ad::Var f1) {
    double t2 = theta * theta, t3 = t2 * theta;
    double h00 = 2 * t3 - 3 * t2 + 1;
    double h10 = t3 - 2 * t2 + theta;
    double h01 = -2 * t3 + 3 * t2;
    double h11 = t3 - t2;
    ad::Var acc = tape.scale(z0, h00);
    acc = tape.axpy(h10 * h, f0, acc);
    acc = tape.add(acc, tape.scale(z1, h01));
    acc = tape.axpy(h11 * h, f1, acc);
    return acc;
}

} // namespace

Trajectory odeint(ad::Tape& tape, const Field& f, ad::Var z0, double t0,
                  const std::vector<double>& times, const OdeConfig& cfg) {
    if (times.empty()) throw std::invalid_argument("odeint: no output times");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (times[i + 1] <= times[i])
            throw std::invalid_argument("odeint: output times must be strictly increasing");
    if (!tape.val(z0).finite()) throw OdeError("odeint: non-finite initial state");

    Trajectory traj;
    traj.times = times;
    traj.states.reserve(times.size());

    std::size_t out = 0;
    while (out < times.size() && times[out] <= t0) {
        traj.states.push_back(z0);
        ++out;
    }
    double t_end = times.back();
    double t = t0;
    ad::Var z = z0;
    ad::Var fz = f(tape, z, t);
    double dt = std::min(cfg.initial_dt, t_end - t);
    int steps = 0;

    while (out < times.size()) {
        if (++steps > cfg.max_steps)
            throw OdeError("odeint: max_steps exceeded at t=" + std::to_string(t));
        if (dt < cfg.min_dt)
            throw OdeError("odeint: step size underflow at t=" + std::to_string(t));
        dt = std::min(dt, t_end - t);
        StepResult step = dopri5_step(tape, f, z, t, dt, cfg.atol, cfg.rtol, fz);
        if (step.error <= 1.0) {
            ++traj.accepted;
            while (out < times.size() && times[out] <= t + dt + 1e-14 * std::fabs(t + dt)) {
                double theta = (times[out] - t) / dt;
                if (theta >= 1.0)
                    traj.states.push_back(step.z_next);
                else
                    traj.states.push_back(hermite(tape, theta, dt, z, step.z_next, fz, step.f_next));
                ++out;
            }
            t += dt;
            z = step.z_next;
            fz = step.f_next;
        } else {
            ++traj.rejected;
        }
        double factor;
        if (step.error == 0.0)
            factor = 5.0;
        else if (std::isinf(step.error))
            factor = 0.2;
        else
            factor = std::clamp(cfg.safety * std::pow(step.error, -0.2), 0.2, 5.0);
        dt *= factor;
    }
    return traj;
}

ad::Var fixed_step_integrate(ad::Tape& tape, const Field& f, ad::Var z0,
                             double t0, double t_end, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("fixed_step_integrate: n_steps must be >= 1");
    double h = (t_end - t0) / n_steps;
    ad::Var z = z0;
    ad::Var fz = {};
    for (int i = 0; i < n_steps; ++i) {
        StepResult s = dopri5_step(tape, f, z, t0 + i * h, h, 1.0, 1.0, fz);
        z = s.z_next;
        fz = s.f_next;
    }
    return z;
}

ad::Var vector_field(ad::Tape& tape, ad::Var z, double t, const VectorFieldSpec& spec) {
    if (!tape.val(z).finite())
        throw OdeError("vector_field: non-finite state");

    if (spec.mode == FieldMode::linear_theory) {
        // -(D L - M) z
        int n = spec.laplacian.rows();
        Tensor a(n, n);
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = spec.advection[i] - spec.diffusion * spec.laplacian[i];
        return tape.matmul_cl(a, z);
    }

    ad::Var wind = tape.leaf(spec.wind_feat);
    ad::Var h_phys;
    if (spec.mode == FieldMode::diffusion_only) {
        h_phys = graphnet::k_hop_propagate(tape, spec.laplacian, z, spec.theta_d);
    } else if (spec.mode == FieldMode::advection_only) {
        h_phys = graphnet::k_hop_propagate(tape, spec.advection, z, spec.theta_a);
    } else {
        ad::Var h_diff = graphnet::k_hop_propagate(tape, spec.laplacian, z, spec.theta_d);
        ad::Var h_adv = graphnet::k_hop_propagate(tape, spec.advection, z, spec.theta_a);
        h_phys = graphnet::transport_gate(tape, h_diff, h_adv, wind, spec.gate).h_phys;
    }

    ad::Var out = h_phys;
    if (spec.has_spectral) {
        // Spectral transport along the station axis of the latent state.
        ad::Var psi = spectral::fourier_pde_step(tape, z, spec.spec, spec.diffusion,
                                                 spec.mean_wind_speed, spec.spectral_dt, t);
        out = tape.add(out, psi);
    }
    if (spec.has_phi) {
        ad::Var input = tape.concat_cols({z, tape.leaf(spec.cond)});
        ad::Var hidden = tape.tanh_(tape.linear(input, spec.phi.w1, spec.phi.b1));
        if (spec.phi.dropout_mask.size() > 0)
            hidden = tape.mul_const(hidden, spec.phi.dropout_mask);
        out = tape.add(out, tape.linear(hidden, spec.phi.w2, spec.phi.b2));
    }
    return out;
}

Field make_field(const VectorFieldSpec& spec) {
    return [&spec](ad::Tape& tape, ad::Var z, double t) {
        return vector_field(tape, z, t, spec);
    };
}

std::vector<Trajectory> mc_trajectories(ad::Tape& tape, const VectorFieldSpec& spec,
                                        const std::vector<ad::Var>& z0_samples,
                                        double t0, const std::vector<double>& times,
                                        const OdeConfig& cfg, double dropout_rate,
                                        Rng& rng) {
    if (z0_samples.empty()) throw std::invalid_argument("mc_trajectories: S must be >= 1");
    std::vector<Trajectory> out;
    out.reserve(z0_samples.size());
    for (ad::Var z0 : z0_samples) {
        VectorFieldSpec sample_spec = spec;
        if (spec.has_phi && dropout_rate > 0.0) {
            int n = tape.val(z0).rows();
            int hidden = tape.val(spec.phi.w1).cols();
            Tensor mask(n, hidden);
            double keep_scale = 1.0 / (1.0 - dropout_rate);
            // One mask per hidden unit, shared across stations, fixed per trajectory.
            for (int j = 0; j < hidden; ++j) {
                double v = rng.uniform() >= dropout_rate ? keep_scale : 0.0;
                for (int i = 0; i < n; ++i) mask(i, j) = v;
            }
            sample_spec.phi.dropout_mask = std::move(mask);
        }
        Field f = [&tape, sample_spec](ad::Tape& tp, ad::Var z, double t) {
            (void)tape;
            return vector_field(tp, z, t, sample_spec);
        };
        out.push_back(odeint(tape, f, z0, t0, times, cfg));
    }
    return out;
}

} // namespace neuroddaf::odecore
