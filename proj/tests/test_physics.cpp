// Graph operators, spectral transport and the adaptive integrator.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/odecore.hpp"
#include "neuroddaf/rng.hpp"
#include "neuroddaf/spectral.hpp"

#include <cmath>
#include <complex>
#include <vector>

using namespace neuroddaf;

namespace {

std::vector<graphnet::Station> test_stations() {
    return {
        {"A", 40.00, 116.00},
        {"B", 40.30, 116.00},
        {"C", 40.00, 116.40},
        {"D", 40.60, 116.50},
        {"E", 41.50, 118.00}, // far away: beyond a 150 km cutoff from A-D
    };
}

graphnet::DynamicGraph windy_graph() {
    graphnet::DynamicGraph g = graphnet::build_graph(test_stations(), 60.0, 150.0);
    std::vector<std::vector<graphnet::WindSample>> wind(3);
    Rng rng(99);
    for (auto& step : wind) {
        step.resize(5);
        for (auto& w : step) {
            w.speed = 2.0 + 3.0 * rng.uniform();
            w.direction = rng.uniform(0.0, 360.0);
        }
    }
    g.set_wind(std::move(wind));
    return g;
}

Tensor random_tensor(Rng& rng, int r, int c, double scale = 1.0) {
    Tensor t(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) t(i, j) = scale * rng.normal();
    return t;
}

} // namespace

TEST_CASE("great-circle distance oracle") {
    // One degree of latitude is ~111.2 km; same-point distance is zero.
    graphnet::Station a{"a", 40.0, 116.0}, b{"b", 41.0, 116.0};
    CHECK(graphnet::great_circle_km(a, a) == doctest::Approx(0.0));
    CHECK(graphnet::great_circle_km(a, b) == doctest::Approx(111.19).epsilon(0.01));
    CHECK(graphnet::great_circle_km(a, b) == doctest::Approx(graphnet::great_circle_km(b, a)));
}

TEST_CASE("graph construction: cutoff, symmetry, Gaussian weights") {
    auto stations = test_stations();
    graphnet::DynamicGraph g = graphnet::build_graph(stations, 60.0, 150.0);
    REQUIRE(g.n() == 5);
    Tensor w = g.weight_matrix();
    for (int i = 0; i < 5; ++i) {
        CHECK(w(i, i) == 0.0);
        for (int j = 0; j < 5; ++j) {
            CHECK(w(i, j) == w(j, i));
            double d = graphnet::great_circle_km(stations[i], stations[j]);
            if (i != j && d <= 150.0)
                CHECK(w(i, j) == doctest::Approx(std::exp(-d * d / (60.0 * 60.0))).epsilon(1e-12));
            if (d > 150.0) CHECK(w(i, j) == 0.0);
        }
    }
    // Station E is isolated from A at this cutoff.
    CHECK(w(0, 4) == 0.0);
}

TEST_CASE("laplacian is symmetric PSD with zero row sums") {
    graphnet::DynamicGraph g = windy_graph();
    Tensor lap = graphnet::laplacian(g, 0);
    for (int i = 0; i < g.n(); ++i) {
        double row = 0.0;
        for (int j = 0; j < g.n(); ++j) {
            CHECK(lap(i, j) == doctest::Approx(lap(j, i)).epsilon(1e-14));
            row += lap(i, j);
        }
        CHECK(row == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(graphnet::lambda_max(lap) >= 0.0);
    // PSD: x^T L x >= 0 for random vectors.
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, g.n(), 1);
        Tensor lx = matmul(lap, x);
        double q = 0.0;
        for (int i = 0; i < g.n(); ++i) q += x(i, 0) * lx(i, 0);
        CHECK(q >= -1e-10);
    }
}

TEST_CASE("eigenvalue helpers against a known matrix") {
    // diag(0, 1, 3) rotated is overkill; use the path-graph Laplacian on 2
    // nodes with weight w: eigenvalues {0, 2w}.
    Tensor l = Tensor::from_rows({{0.7, -0.7}, {-0.7, 0.7}});
    CHECK(graphnet::lambda_max(l) == doctest::Approx(1.4).epsilon(1e-9));
    CHECK(graphnet::lambda_min_pos(l) == doctest::Approx(1.4).epsilon(1e-9));
}

TEST_CASE("advection operator: learned rows normalized, theory skew-symmetric") {
    graphnet::DynamicGraph g = windy_graph();
    Tensor m = graphnet::advection_operator(g, 1, graphnet::OperatorMode::learned);
    for (int i = 0; i < g.n(); ++i) {
        double row = 0.0;
        for (int j = 0; j < g.n(); ++j) {
            CHECK(m(i, j) >= 0.0);
            row += m(i, j);
        }
        CHECK((row == doctest::Approx(0.0).epsilon(1e-12) ||
               row == doctest::Approx(1.0).epsilon(1e-12)));
    }
    Tensor mt = graphnet::advection_operator(g, 1, graphnet::OperatorMode::theory);
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < g.n(); ++j)
            CHECK(mt(i, j) == doctest::Approx(-mt(j, i)).epsilon(1e-14));
}

TEST_CASE("k-hop propagation reduces to tanh(Z Theta) at K=1") {
    Rng rng(5);
    graphnet::DynamicGraph g = windy_graph();
    Tensor lap = graphnet::laplacian(g, 0);
    Tensor z = random_tensor(rng, g.n(), 3), th = random_tensor(rng, 3, 3);
    ad::Tape tape;
    ad::Var out = graphnet::k_hop_propagate(tape, lap, tape.leaf(z), {tape.leaf(th)});
    Tensor expect = matmul(z, th);
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(tape.val(out)(i, j) == doctest::Approx(std::tanh(expect(i, j))).epsilon(1e-12));
}

TEST_CASE("k-hop propagation applies operator powers") {
    Rng rng(6);
    graphnet::DynamicGraph g = windy_graph();
    Tensor op = graphnet::laplacian(g, 0);
    Tensor z = random_tensor(rng, g.n(), 2);
    Tensor t0 = random_tensor(rng, 2, 2), t1 = random_tensor(rng, 2, 2), t2 = random_tensor(rng, 2, 2);
    ad::Tape tape;
    ad::Var out = graphnet::k_hop_propagate(tape, op, tape.leaf(z),
                                            {tape.leaf(t0), tape.leaf(t1), tape.leaf(t2)});
    Tensor acc = matmul(z, t0) + matmul(matmul(op, z), t1) +
                 matmul(matmul(op, matmul(op, z)), t2);
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(tape.val(out)(i, j) == doctest::Approx(std::tanh(acc(i, j))).epsilon(1e-10));
}

TEST_CASE("transport gate convex combination") {
    Rng rng(7);
    int n = 4, d = 3, dw = 3, dp = 2;
    Tensor hd = random_tensor(rng, n, d), ha = random_tensor(rng, n, d);
    Tensor wind = random_tensor(rng, n, dw);
    ad::Tape tape;
    graphnet::GateParams p;
    p.w_alpha = tape.leaf(random_tensor(rng, 2 * d + dp, d));
    p.b_alpha = tape.leaf(random_tensor(rng, 1, d));
    p.w_phi = tape.leaf(random_tensor(rng, dw, dp));
    p.b_phi = tape.leaf(random_tensor(rng, 1, dp));
    auto res = graphnet::transport_gate(tape, tape.leaf(hd), tape.leaf(ha), tape.leaf(wind), p);
    const Tensor& gate = tape.val(res.gate);
    const Tensor& hp = tape.val(res.h_phys);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            CHECK(gate(i, j) > 0.0);
            CHECK(gate(i, j) < 1.0);
            double expect = gate(i, j) * hd(i, j) + (1.0 - gate(i, j)) * ha(i, j);
            CHECK(hp(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

// ---------------------------------------------------------------- spectral

TEST_CASE("DFT round trip and agreement with a naive complex DFT") {
    Rng rng(11);
    for (int T : {4, 5, 8, 9, 24}) {
        Tensor sig = random_tensor(rng, T, 2);
        spectral::SpectralCoefs c = spectral::dft_forward(sig);
        REQUIRE(c.re.rows() == spectral::bin_count(T));
        Tensor back = spectral::dft_inverse(c);
        for (int t = 0; t < T; ++t)
            for (int ch = 0; ch < 2; ++ch)
                CHECK(back(t, ch) == doctest::Approx(sig(t, ch)).epsilon(1e-10));

        // Independent oracle: textbook complex DFT.
        for (int k = 0; k < spectral::bin_count(T); ++k)
            for (int ch = 0; ch < 2; ++ch) {
                std::complex<double> acc(0.0, 0.0);
                for (int t = 0; t < T; ++t)
                    acc += sig(t, ch) *
                           std::exp(std::complex<double>(0.0, -2.0 * M_PI * k * t / T));
                CHECK(c.re(k, ch) == doctest::Approx(acc.real()).epsilon(1e-9));
                CHECK(c.im(k, ch) == doctest::Approx(acc.imag()).epsilon(1e-9));
            }
    }
}

TEST_CASE("DFT matrices agree with dft_forward") {
    Rng rng(12);
    int T = 7;
    Tensor sig = random_tensor(rng, T, 3);
    const spectral::DftMatrices& m = spectral::dft_matrices(T);
    Tensor re = matmul(m.fwd_re, sig), im = matmul(m.fwd_im, sig);
    spectral::SpectralCoefs c = spectral::dft_forward(sig);
    for (int k = 0; k < c.re.rows(); ++k)
        for (int ch = 0; ch < 3; ++ch) {
            CHECK(re(k, ch) == doctest::Approx(c.re(k, ch)).epsilon(1e-10));
            CHECK(im(k, ch) == doctest::Approx(c.im(k, ch)).epsilon(1e-10));
        }
}

TEST_CASE("physics multiplier is nonexpansive, unit only at zero dissipation") {
    for (double k2 : {0.0, 0.5, 4.0})
        for (double vk : {-2.0, 0.0, 3.0})
            for (double D : {0.0, 0.1, 1.0})
                for (double dt : {0.0, 0.5, 2.0}) {
                    double mag = std::abs(spectral::multiplier(k2, vk, D, dt));
                    CHECK(mag <= 1.0 + 1e-15);
                    if (D * k2 * dt == 0.0)
                        CHECK(mag == doctest::Approx(1.0).epsilon(1e-14));
                    else
                        CHECK(mag < 1.0);
                }
}

TEST_CASE("bin frequencies span [0, pi/dt]") {
    int T = 16;
    double dt = 0.5;
    int bins = spectral::bin_count(T);
    CHECK(spectral::bin_frequency(0, T, dt) == 0.0);
    CHECK(spectral::bin_frequency(bins - 1, T, dt) == doctest::Approx(M_PI / dt));
    for (int b = 1; b < bins; ++b)
        CHECK(spectral::bin_frequency(b, T, dt) > spectral::bin_frequency(b - 1, T, dt));
}

namespace {
spectral::SpectralParams identity_params(ad::Tape& tape, int m, int d) {
    spectral::SpectralParams p;
    p.w_re = tape.leaf(Tensor(m, d, 1.0));
    p.w_im = tape.leaf(Tensor(m, d, 0.0));
    p.m = m;
    p.residual_enabled = false;
    return p;
}
} // namespace

TEST_CASE("fourier step with unit weights and zero physics is the identity") {
    Rng rng(13);
    int T = 8, d = 2;
    Tensor sig = random_tensor(rng, T, d);
    ad::Tape tape;
    spectral::SpectralParams p = identity_params(tape, spectral::bin_count(T), d);
    ad::Var out = spectral::fourier_pde_step(tape, tape.leaf(sig), p, 0.0, 0.0, 1.0);
    for (int t = 0; t < T; ++t)
        for (int ch = 0; ch < d; ++ch)
            CHECK(tape.val(out)(t, ch) == doctest::Approx(sig(t, ch)).epsilon(1e-10));
}

TEST_CASE("fourier step truncates modes above m") {
    Rng rng(14);
    int T = 16, d = 1;
    Tensor sig = random_tensor(rng, T, d);
    ad::Tape tape;
    int m = 3;
    spectral::SpectralParams p = identity_params(tape, m, d);
    ad::Var out = spectral::fourier_pde_step(tape, tape.leaf(sig), p, 0.0, 0.0, 1.0);
    spectral::SpectralCoefs c = spectral::dft_forward(tape.val(out));
    for (int k = m; k < spectral::bin_count(T); ++k) {
        CHECK(std::abs(c.re(k, 0)) < 1e-9);
        CHECK(std::abs(c.im(k, 0)) < 1e-9);
    }
}

TEST_CASE("fourier step rejects m beyond the bin count") {
    ad::Tape tape;
    spectral::SpectralParams p = identity_params(tape, spectral::bin_count(8) + 1, 1);
    Tensor sig(8, 1);
    CHECK_THROWS(spectral::fourier_pde_step(tape, tape.leaf(sig), p, 0.1, 0.0, 1.0));
}

TEST_CASE("fourier step gradient check") {
    Rng rng(15);
    int T = 6, d = 2, m = 3;
    Tensor sig = random_tensor(rng, T, d);
    Tensor wre = random_tensor(rng, m, d), wim = random_tensor(rng, m, d);
    Tensor w1 = random_tensor(rng, 4, 3, 0.5), b1 = random_tensor(rng, 1, 3, 0.1);
    Tensor w2 = random_tensor(rng, 3, 2, 0.5), b2 = random_tensor(rng, 1, 2, 0.1);

    auto eval = [&](const Tensor& s, const Tensor& a, const Tensor& b) {
        ad::Tape tape;
        spectral::SpectralParams p;
        p.w_re = tape.leaf(a);
        p.w_im = tape.leaf(b);
        p.r_w1 = tape.leaf(w1);
        p.r_b1 = tape.leaf(b1);
        p.r_w2 = tape.leaf(w2);
        p.r_b2 = tape.leaf(b2);
        p.m = m;
        p.residual_enabled = true;
        ad::Var out = spectral::fourier_pde_step(tape, tape.leaf(s), p, 0.3, 1.2, 0.7, 0.4);
        return tape.val(tape.sum(out))(0, 0);
    };

    ad::Tape tape;
    spectral::SpectralParams p;
    ad::Var vs = tape.leaf(sig);
    p.w_re = tape.leaf(wre);
    p.w_im = tape.leaf(wim);
    p.r_w1 = tape.leaf(w1);
    p.r_b1 = tape.leaf(b1);
    p.r_w2 = tape.leaf(w2);
    p.r_b2 = tape.leaf(b2);
    p.m = m;
    p.residual_enabled = true;
    ad::Var out = spectral::fourier_pde_step(tape, vs, p, 0.3, 1.2, 0.7, 0.4);
    tape.backward(tape.sum(out));

    double h = 1e-6;
    auto check_entry = [&](const Tensor& g, Tensor pert, auto which, int i, int j) {
        Tensor plus = pert, minus = pert;
        plus(i, j) += h;
        minus(i, j) -= h;
        double fd = (which(plus) - which(minus)) / (2.0 * h);
        CHECK(std::abs(g(i, j) - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
    };
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < d; ++j)
            check_entry(tape.grad(vs), sig, [&](const Tensor& x) { return eval(x, wre, wim); }, i, j);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) {
            check_entry(tape.grad(p.w_re), wre, [&](const Tensor& x) { return eval(sig, x, wim); }, i, j);
            check_entry(tape.grad(p.w_im), wim, [&](const Tensor& x) { return eval(sig, wre, x); }, i, j);
        }
}

// ---------------------------------------------------------------- odecore

namespace {
// z' = -z with analytic solution z0 * exp(-t).
odecore::Field decay_field() {
    return [](ad::Tape& tape, ad::Var z, double) { return tape.neg(z); };
}
// Nonlinear scalar problem z' = z - t^2 + 1, z(0) = 0.5; solution (t+1)^2 - e^t/2.
odecore::Field poly_field() {
    return [](ad::Tape& tape, ad::Var z, double t) {
        return tape.add_scalar(z, 1.0 - t * t);
    };
}
double poly_exact(double t) { return (t + 1.0) * (t + 1.0) - 0.5 * std::exp(t); }
} // namespace

TEST_CASE("fixed-step dopri5 shows at least 4th-order convergence") {
    Tensor z0(1, 1);
    z0(0, 0) = 0.5;
    double t_end = 2.0;
    std::vector<double> errs;
    for (int n : {8, 16, 32, 64}) {
        ad::Tape tape;
        ad::Var z = odecore::fixed_step_integrate(tape, poly_field(), tape.leaf(z0), 0.0, t_end, n);
        errs.push_back(std::abs(tape.val(z)(0, 0) - poly_exact(t_end)));
    }
    for (std::size_t i = 1; i < errs.size(); ++i) {
        double order = std::log2(errs[i - 1] / errs[i]);
        CHECK(order > 4.0);
    }
}

TEST_CASE("adaptive integration meets tolerance with dense output") {
    Tensor z0(1, 1);
    z0(0, 0) = 3.0;
    odecore::OdeConfig cfg;
    cfg.rtol = 1e-7;
    cfg.atol = 1e-9;
    std::vector<double> times{0.3, 0.77, 1.5, 2.9, 4.0};
    ad::Tape tape;
    odecore::Trajectory tr = odeint(tape, decay_field(), tape.leaf(z0), 0.0, times, cfg);
    REQUIRE(tr.states.size() == times.size());
    CHECK(tr.accepted > 0);
    for (std::size_t i = 0; i < times.size(); ++i)
        CHECK(tape.val(tr.states[i])(0, 0) ==
              doctest::Approx(3.0 * std::exp(-times[i])).epsilon(1e-5));
}

TEST_CASE("gradient through the integrator matches the variational equation") {
    // For z' = -z, dz(T)/dz0 = exp(-T).
    Tensor z0(1, 1);
    z0(0, 0) = 1.3;
    double T = 1.7;
    ad::Tape tape;
    ad::Var v0 = tape.leaf(z0);
    odecore::OdeConfig cfg;
    cfg.rtol = 1e-8;
    cfg.atol = 1e-10;
    odecore::Trajectory tr = odeint(tape, decay_field(), v0, 0.0, {T}, cfg);
    tape.backward(tape.sum(tr.states[0]));
    CHECK(tape.grad(v0)(0, 0) == doctest::Approx(std::exp(-T)).epsilon(1e-5));
}

TEST_CASE("linear-theory field equals -(D L - M) z") {
    Rng rng(21);
    graphnet::DynamicGraph g = windy_graph();
    odecore::VectorFieldSpec spec;
    spec.mode = odecore::FieldMode::linear_theory;
    spec.laplacian = graphnet::laplacian(g, 0);
    spec.advection = graphnet::advection_operator(g, 0, graphnet::OperatorMode::theory);
    spec.diffusion = 0.4;
    Tensor z = random_tensor(rng, g.n(), 2);
    ad::Tape tape;
    ad::Var out = odecore::vector_field(tape, tape.leaf(z), 0.0, spec);
    Tensor expect = matmul(spec.advection, z) - 0.4 * matmul(spec.laplacian, z);
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(tape.val(out)(i, j) == doctest::Approx(expect(i, j)).epsilon(1e-12));
}

TEST_CASE("integrator raises OdeError on an exploding problem") {
    // z' = z^2 from z0 = 1 blows up at t = 1; the step size controller must
    // give up rather than loop forever.
    odecore::Field blow = [](ad::Tape& tape, ad::Var z, double) {
        return tape.square_(z);
    };
    Tensor z0(1, 1);
    z0(0, 0) = 1.0;
    odecore::OdeConfig cfg;
    cfg.max_steps = 2000;
    ad::Tape tape;
    CHECK_THROWS_AS(odeint(tape, blow, tape.leaf(z0), 0.0, {2.0}, cfg), odecore::OdeError);
}

TEST_CASE("mc trajectories: one per sample, dropout masks differ") {
    Rng rng(31);
    graphnet::DynamicGraph g = windy_graph();
    int n = g.n(), d = 2, hidden = 16;
    odecore::VectorFieldSpec spec;
    spec.mode = odecore::FieldMode::diffusion_only;
    spec.laplacian = graphnet::laplacian(g, 0);
    spec.advection = graphnet::advection_operator(g, 0, graphnet::OperatorMode::learned);
    spec.wind_feat = graphnet::wind_features(g, 0);
    ad::Tape tape;
    spec.theta_d = {tape.leaf(random_tensor(rng, d, d, 0.1)), tape.leaf(random_tensor(rng, d, d, 0.1))};
    spec.has_phi = true;
    spec.phi.w1 = tape.leaf(random_tensor(rng, d + 1, hidden, 0.1));
    spec.phi.b1 = tape.leaf(Tensor(1, hidden));
    spec.phi.w2 = tape.leaf(random_tensor(rng, hidden, d, 0.1));
    spec.phi.b2 = tape.leaf(Tensor(1, d));
    spec.cond = Tensor(n, 1, 0.5);
    odecore::OdeConfig cfg;
    std::vector<ad::Var> z0s{tape.leaf(random_tensor(rng, n, d)), tape.leaf(random_tensor(rng, n, d))};
    auto trs = odecore::mc_trajectories(tape, spec, z0s, 0.0, {0.5, 1.0}, cfg, 0.5, rng);
    REQUIRE(trs.size() == 2);
    for (const auto& tr : trs) REQUIRE(tr.states.size() == 2);
    // Same z0 with different dropout masks should give different trajectories.
    std::vector<ad::Var> same{z0s[0], z0s[0]};
    Rng rng2(77);
    auto trs2 = odecore::mc_trajectories(tape, spec, same, 0.0, {1.0}, cfg, 0.5, rng2);
    double diff = 0.0;
    const Tensor& a = tape.val(trs2[0].states[0]);
    const Tensor& b = tape.val(trs2[1].states[0]);
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 1e-8);
}
