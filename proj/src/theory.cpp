#include "neuroddaf/theory.hpp"

#include <cmath>
#include <sstream>

#include "neuroddaf/dataio.hpp"
#include "neuroddaf/fusion.hpp"
#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/odecore.hpp"
#include "neuroddaf/rng.hpp"
#include "neuroddaf/spectral.hpp"
#include "neuroddaf/tape.hpp"
#include "neuroddaf/train.hpp"

namespace neuroddaf::theory {

namespace {

graphnet::DynamicGraph random_graph(Rng& rng, int n, bool with_wind) {
    std::vector<graphnet::Station> stations;
    for (int i = 0; i < n; ++i) {
        graphnet::Station s;
        s.id = "T" + std::to_string(i);
        s.lat = 40.0 + rng.uniform(0.0, 1.5);
        s.lon = 116.0 + rng.uniform(0.0, 1.5);
        stations.push_back(s);
    }
    graphnet::DynamicGraph g = graphnet::build_graph(stations, 80.0, 400.0);
    if (with_wind) {
        std::vector<std::vector<graphnet::WindSample>> wind(1);
        wind[0].resize(n);
        for (int i = 0; i < n; ++i) {
            wind[0][i].speed = rng.uniform(1.0, 6.0);
            wind[0][i].direction = rng.uniform(0.0, 360.0);
        }
        g.set_wind(std::move(wind));
    }
    return g;
}

// Values-only adaptive solve of a constant-coefficient linear system plus an
// optional tanh residual; returns the state at each requested time.
std::vector<Tensor> solve_linear(const Tensor& a, const Tensor& z0, double eps_tanh,
                                 const std::vector<double>& times, double tol) {
    ad::Tape tape;
    odecore::Field f = [&a, eps_tanh](ad::Tape& tp, ad::Var z, double) {
        ad::Var lin = tp.matmul_cl(a, z);
        if (eps_tanh != 0.0) lin = tp.axpy(eps_tanh, tp.tanh_(z), lin);
        return lin;
    };
    odecore::OdeConfig cfg;
    cfg.rtol = tol;
    cfg.atol = tol;
    cfg.initial_dt = 0.05;
    odecore::Trajectory traj = odecore::odeint(tape, f, tape.leaf(z0), 0.0, times, cfg);
    std::vector<Tensor> out;
    for (ad::Var v : traj.states) out.push_back(tape.val(v));
    return out;
}

double spectral_norm(const Tensor& a) {
    Tensor ata(a.cols(), a.cols());
    for (int i = 0; i < a.cols(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.rows(); ++k) acc += a(k, i) * a(k, j);
            ata(i, j) = acc;
        }
    return std::sqrt(std::max(0.0, graphnet::lambda_max(ata)));
}

std::string num(double v) { return dataio::format_double(v); }

CheckResult check_wellposed(Rng& rng) {
    CheckResult r{1, "Well-posedness (Lipschitz flow separation bound)", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        graphnet::DynamicGraph g = random_graph(rng, 5, true);
        Tensor lap = graphnet::laplacian(g, 0);
        Tensor m = graphnet::advection_operator(g, 0, graphnet::OperatorMode::theory);
        double d = rng.uniform(0.1, 0.5);
        int n = g.n();
        Tensor a(n, n);
        for (std::size_t q = 0; q < a.size(); ++q) a[q] = m[q] - d * lap[q];
        double eps = 0.1;
        double lip = spectral_norm(a) + eps; // tanh is 1-Lipschitz
        Tensor z0(n, 1), z0b(n, 1);
        for (int i = 0; i < n; ++i) z0(i, 0) = rng.normal();
        double delta = 1e-6;
        z0b = z0;
        z0b(0, 0) += delta;
        std::vector<double> times = {0.25, 0.5, 0.75, 1.0};
        std::vector<Tensor> za = solve_linear(a, z0, eps, times, 1e-9);
        std::vector<Tensor> zb = solve_linear(a, z0b, eps, times, 1e-9);
        for (std::size_t k = 0; k < times.size(); ++k) {
            double sep = (za[k] - zb[k]).norm();
            double bound = delta * std::exp(lip * times[k]);
            worst = std::max(worst, sep / bound);
        }
    }
    r.pass = worst <= 1.0 + 1e-6;
    r.detail = "max separation/bound ratio = " + num(worst) + " (<= 1)";
    return r;
}

CheckResult check_diffusion(Rng& rng) {
    CheckResult r{2, "Diffusion is contractive", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        graphnet::DynamicGraph g = random_graph(rng, 3 + static_cast<int>(rng.uniform() * 6), false);
        Tensor lap = graphnet::laplacian(g, 0);
        double d = rng.uniform(0.05, 0.5);
        int n = g.n();
        Tensor a(n, n);
        for (std::size_t q = 0; q < a.size(); ++q) a[q] = -d * lap[q];
        Tensor z0(n, 1);
        for (int i = 0; i < n; ++i) z0(i, 0) = rng.normal();
        std::vector<double> times;
        for (int k = 1; k <= 10; ++k) times.push_back(0.2 * k);
        std::vector<Tensor> zs = solve_linear(a, z0, 0.0, times, 1e-8);
        double prev = z0.norm();
        for (const Tensor& z : zs) {
            double cur = z.norm();
            worst = std::max(worst, cur - prev);
            prev = cur;
        }
    }
    r.pass = worst <= 1e-6;
    r.detail = "max norm increase = " + num(worst) + " (<= 1e-6)";
    return r;
}

CheckResult check_advection(Rng& rng) {
    CheckResult r{2, "Advection is norm-preserving", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        graphnet::DynamicGraph g = random_graph(rng, 5, true);
        Tensor m = graphnet::advection_operator(g, 0, graphnet::OperatorMode::theory);
        int n = g.n();
        Tensor z0(n, 1);
        for (int i = 0; i < n; ++i) z0(i, 0) = rng.normal();
        std::vector<Tensor> zs = solve_linear(m, z0, 0.0, {1.0}, 1e-9);
        worst = std::max(worst, std::fabs(zs[0].norm() / z0.norm() - 1.0));
    }
    r.pass = worst <= 1e-4;
    r.detail = "max |norm ratio - 1| = " + num(worst) + " (<= 1e-4)";
    return r;
}

CheckResult check_heat_kernel() {
    CheckResult r{2, "Heat kernel (2-node analytic solution)", true, ""};
    double w = 1.0, d = 0.7;
    Tensor a = Tensor::from_rows({{-d * w, d * w}, {d * w, -d * w}});
    Tensor z0 = Tensor::from_rows({{2.0}, {-1.0}});
    std::vector<double> times = {0.1, 0.5, 1.0};
    std::vector<Tensor> zs = solve_linear(a, z0, 0.0, times, 1e-9);
    double worst = 0.0;
    double mean = 0.5 * (z0(0, 0) + z0(1, 0));
    double half_diff = 0.5 * (z0(0, 0) - z0(1, 0));
    for (std::size_t k = 0; k < times.size(); ++k) {
        double decay = std::exp(-2.0 * d * w * times[k]);
        double e0 = std::fabs(zs[k](0, 0) - (mean + half_diff * decay));
        double e1 = std::fabs(zs[k](1, 0) - (mean - half_diff * decay));
        worst = std::max({worst, e0, e1});
    }
    r.pass = worst <= 1e-5;
    r.detail = "max |numeric - analytic| = " + num(worst) + " (<= 1e-5)";
    return r;
}

CheckResult check_dissipativity(Rng& rng) {
    CheckResult r{2, "Dissipativity of the linear transport core", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        graphnet::DynamicGraph g = random_graph(rng, 6, true);
        Tensor lap = graphnet::laplacian(g, 0);
        Tensor m = graphnet::advection_operator(g, 0, graphnet::OperatorMode::theory);
        double d = rng.uniform(0.05, 0.5);
        int n = g.n();
        Tensor a(n, n);
        for (std::size_t q = 0; q < a.size(); ++q) a[q] = m[q] - d * lap[q];
        Tensor z0(n, 1);
        for (int i = 0; i < n; ++i) z0(i, 0) = rng.normal();
        std::vector<double> times;
        for (int k = 1; k <= 8; ++k) times.push_back(0.25 * k);
        std::vector<Tensor> zs = solve_linear(a, z0, 0.0, times, 1e-8);
        double prev = z0.norm();
        for (const Tensor& z : zs) {
            worst = std::max(worst, z.norm() - prev);
            prev = z.norm();
        }
    }
    r.pass = worst <= 1e-6;
    r.detail = "max norm increase = " + num(worst) + " (<= 1e-6)";
    return r;
}

CheckResult check_residual_consistency(Rng& rng) {
    CheckResult r{2, "Residual consistency", true, ""};
    // (a) Exact forward-Euler rollout has zero discrete residual.
    graphnet::DynamicGraph g = random_graph(rng, 6, true);
    Tensor lap = graphnet::laplacian(g, 0);
    Tensor m = graphnet::advection_operator(g, 0, graphnet::OperatorMode::learned);
    double d = 0.2, dt = 0.05;
    int n = g.n(), tau = 12;
    Tensor y(tau, n);
    for (int j = 0; j < n; ++j) y(0, j) = rng.uniform(10.0, 30.0);
    for (int t = 0; t + 1 < tau; ++t)
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += (-d * lap(i, j) + m(i, j)) * y(t, j);
            y(t + 1, i) = y(t, i) + dt * acc;
        }
    double zero_res = train::pde_residual_value(y, lap, m, d, dt);
    // (b) RMS residual of the analytic 2-node heat solution halves with dt.
    auto heat_rms = [](double dt_h) {
        double w = 1.0, dd = 0.7;
        Tensor lap2 = Tensor::from_rows({{w, -w}, {-w, w}});
        Tensor m2(2, 2);
        int steps = static_cast<int>(std::round(1.0 / dt_h)) + 1;
        Tensor y2(steps, 2);
        for (int t = 0; t < steps; ++t) {
            double decay = std::exp(-2.0 * dd * w * t * dt_h);
            y2(t, 0) = 0.5 + 1.5 * decay;
            y2(t, 1) = 0.5 - 1.5 * decay;
        }
        return std::sqrt(train::pde_residual_value(y2, lap2, m2, dd, dt_h));
    };
    double r1 = heat_rms(0.1), r2 = heat_rms(0.05), r3 = heat_rms(0.025);
    double ratio = std::min(r1 / r2, r2 / r3);
    r.pass = zero_res <= 1e-10 && ratio >= 1.9;
    r.detail = "rollout residual = " + num(zero_res) + " (<= 1e-10), halving ratio = " +
               num(ratio) + " (>= 1.9)";
    return r;
}

CheckResult check_fourier() {
    CheckResult r{3, "Fourier prior is nonexpansive", true, ""};
    double worst = 0.0;
    bool equality_ok = true;
    for (int i = 0; i < 1000; ++i) {
        double k = 10.0 * i / 999.0;
        double d = (i % 2 == 0) ? 0.3 : 0.0;
        double dt = 0.5;
        double mag = std::abs(spectral::multiplier(k * k, 2.0 * k, d, dt));
        worst = std::max(worst, mag);
        bool at_one = std::fabs(mag - 1.0) <= 1e-15;
        bool should = d * k * k * dt == 0.0;
        if (at_one != should) equality_ok = false;
    }
    r.pass = worst <= 1.0 + 1e-15 && equality_ok;
    r.detail = "max |H| = " + num(worst) + " (<= 1), equality iff D*k^2*dt = 0: " +
               (equality_ok ? "yes" : "no");
    return r;
}

CheckResult check_residual_stability(Rng& rng) {
    CheckResult r{4, "Stability with residuals (mean-free exponential decay)", true, ""};
    graphnet::DynamicGraph g = random_graph(rng, 6, false);
    Tensor lap = graphnet::laplacian(g, 0);
    double lam = graphnet::lambda_min_pos(lap);
    double d = 0.5;
    double eps = 0.1 * d * lam; // L_Phi below the stability threshold
    int n = g.n();
    Tensor a(n, n);
    for (std::size_t q = 0; q < a.size(); ++q) a[q] = -d * lap[q];
    Tensor z0(n, 1);
    for (int i = 0; i < n; ++i) z0(i, 0) = rng.normal();
    std::vector<double> times;
    for (int k = 1; k <= 20; ++k) times.push_back(0.4 * k);
    std::vector<Tensor> zs = solve_linear(a, z0, eps, times, 1e-9);
    // Linear regression of log ||z_perp|| against t.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int cnt = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        double mean = zs[k].sum() / n;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double v = zs[k](i, 0) - mean;
            acc += v * v;
        }
        double norm_perp = std::sqrt(acc);
        if (norm_perp < 1e-13) break;
        double x = times[k], yv = std::log(norm_perp);
        sx += x;
        sy += yv;
        sxx += x * x;
        sxy += x * yv;
        syy += yv * yv;
        ++cnt;
    }
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    double r_num = cnt * sxy - sx * sy;
    double r_den = std::sqrt((cnt * sxx - sx * sx) * (cnt * syy - sy * sy));
    double r2 = r_den > 0 ? (r_num / r_den) * (r_num / r_den) : 0.0;
    double rho = -slope;
    r.pass = rho > 0.0 && r2 >= 0.99;
    r.detail = "fitted decay rate rho = " + num(rho) + " (> 0), R^2 = " + num(r2) + " (>= 0.99)";
    return r;
}

CheckResult check_dopri5_order() {
    CheckResult r{5, "dopri5 error order", true, ""};
    // Fixed-step convergence on z' = -z, z(0) = 1, over [0, 1].
    Tensor a = Tensor::from_rows({{-1.0}});
    Tensor z0 = Tensor::from_rows({{1.0}});
    double exact = std::exp(-1.0);
    std::vector<double> log_h, log_e;
    for (int n_steps = 16; n_steps <= 512; n_steps *= 2) {
        ad::Tape tape;
        odecore::Field f = [&a](ad::Tape& tp, ad::Var z, double) { return tp.matmul_cl(a, z); };
        ad::Var z = odecore::fixed_step_integrate(tape, f, tape.leaf(z0), 0.0, 1.0, n_steps);
        double err = std::fabs(tape.val(z)(0, 0) - exact);
        if (err <= 1e-16) break; // at roundoff, stop collecting points
        log_h.push_back(std::log(1.0 / n_steps));
        log_e.push_back(std::log(err));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = static_cast<int>(log_h.size());
    for (int i = 0; i < cnt; ++i) {
        sx += log_h[i];
        sy += log_e[i];
        sxx += log_h[i] * log_h[i];
        sxy += log_h[i] * log_e[i];
    }
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    // Adaptive solve at the default tolerances.
    std::vector<Tensor> zs = solve_linear(a, z0, 0.0, {1.0}, 1e-5);
    double adaptive_err = std::fabs(zs[0](0, 0) - exact);
    r.pass = slope >= 4.0 && adaptive_err <= 1e-5;
    r.detail = "convergence slope = " + num(slope) + " (>= 4.0), adaptive error = " +
               num(adaptive_err) + " (<= 1e-5)";
    return r;
}

CheckResult check_mse_fusion(Rng& rng) {
    CheckResult r{6, "MSE decomposition and bound; oracle gate", true, ""};
    double worst_rel = 0.0;
    bool bound_ok = true, oracle_ok = true;
    for (int i = 0; i < 10000; ++i) {
        double y = rng.normal() * 3.0;
        double a = y + rng.normal();
        double b = y + rng.normal();
        double gam = rng.uniform();
        double fused = gam * a + (1 - gam) * b;
        double lhs = (y - fused) * (y - fused);
        double ea = y - a, eb = y - b;
        double rhs = gam * ea * ea + (1 - gam) * eb * eb - gam * (1 - gam) * (a - b) * (a - b);
        double scale = std::max({1.0, lhs, std::fabs(rhs)});
        worst_rel = std::max(worst_rel, std::fabs(lhs - rhs) / scale);
        if (lhs > gam * ea * ea + (1 - gam) * eb * eb + 1e-12) bound_ok = false;
        double gstar = ea * ea < eb * eb ? 1.0 : 0.0;
        double of = gstar * a + (1 - gstar) * b;
        double oerr = (y - of) * (y - of);
        if (std::fabs(oerr - std::min(ea * ea, eb * eb)) > 1e-12) oracle_ok = false;
    }
    r.pass = worst_rel <= 1e-12 && bound_ok && oracle_ok;
    r.detail = "max relative identity error = " + num(worst_rel) +
               " (<= 1e-12), bound holds: " + (bound_ok ? "yes" : "no") + ", oracle optimal: " +
               (oracle_ok ? "yes" : "no");
    return r;
}

CheckResult check_total_variance(Rng& rng) {
    CheckResult r{6, "Law of total variance", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int s_count = 2 + static_cast<int>(rng.uniform() * 6);
        std::vector<Tensor> members, alea;
        for (int s = 0; s < s_count; ++s) {
            members.push_back(Tensor::from_rows({{rng.normal() * 2.0}}));
            alea.push_back(Tensor::from_rows({{rng.uniform(0.1, 2.0)}}));
        }
        fusion::EnsembleStats st = fusion::ensemble_stats(members, &alea);
        double mean = 0.0, vmean = 0.0;
        for (int s = 0; s < s_count; ++s) {
            mean += members[s](0, 0) / s_count;
            vmean += alea[s](0, 0) / s_count;
        }
        double epi = 0.0;
        for (int s = 0; s < s_count; ++s) {
            double dlt = members[s](0, 0) - mean;
            epi += dlt * dlt / s_count;
        }
        worst = std::max(worst, std::fabs(st.var_total(0, 0) - (vmean + epi)));
    }
    r.pass = worst <= 1e-14;
    r.detail = "max decomposition error = " + num(worst) + " (<= 1e-14)";
    return r;
}

} // namespace

std::vector<CheckResult> run_all(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CheckResult> out;
    out.push_back(check_wellposed(rng));
    out.push_back(check_diffusion(rng));
    out.push_back(check_advection(rng));
    out.push_back(check_heat_kernel());
    out.push_back(check_dissipativity(rng));
    out.push_back(check_residual_consistency(rng));
    out.push_back(check_fourier());
    out.push_back(check_residual_stability(rng));
    out.push_back(check_dopri5_order());
    out.push_back(check_mse_fusion(rng));
    out.push_back(check_total_variance(rng));
    return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

std::string format_report(const std::vector<CheckResult>& results) {
    std::ostringstream out;
    for (const CheckResult& r : results)
        out << "[item " << r.item << "] " << (r.pass ? "PASS" : "FAIL") << "  " << r.name
            << "  --  " << r.detail << "\n";
    return out.str();
}

} // namespace neuroddaf::theory
