#include "neuroddaf/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace neuroddaf::model {

int ParamStore::add(const std::string& name, Tensor init) {
    for (const Entry& e : entries_)
        if (e.name == name) throw std::logic_error("duplicate parameter " + name);
    Entry e;
    e.name = name;
    e.grad.resize(init.rows(), init.cols());
    e.adam_m.resize(init.rows(), init.cols());
    e.adam_v.resize(init.rows(), init.cols());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
    for (Entry& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("unknown parameter " + name);
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("unknown parameter " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return true;
    return false;
}

void ParamStore::zero_grads() {
    for (Entry& e : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_global_norm() const {
    double acc = 0.0;
    for (const Entry& e : entries_)
        for (std::size_t i = 0; i < e.grad.size(); ++i) acc += e.grad[i] * e.grad[i];
    return std::sqrt(acc);
}

GraphContext make_graph_context(const graphnet::DynamicGraph& g, int t) {
    GraphContext gc;
    gc.laplacian = graphnet::laplacian(g, t);
    gc.advection = graphnet::advection_operator(g, t, graphnet::OperatorMode::learned);
    gc.adj_mask = graphnet::adjacency_mask(g);
    gc.wind_feat = graphnet::wind_features(g, t);
    double mean = 0.0;
    const std::vector<graphnet::WindSample>& w = g.wind_at(t);
    for (const auto& s : w) mean += s.speed;
    gc.mean_wind_speed = w.empty() ? 0.0 : mean / static_cast<double>(w.size());
    return gc;
}

GraphContextSeries::GraphContextSeries(const graphnet::DynamicGraph& topology,
                                       const dataio::SeriesTable& series) {
    int n = topology.n();
    if (series.n_stations() != n)
        throw std::invalid_argument("GraphContextSeries: station count mismatch");
    int steps = series.steps();
    std::vector<std::vector<graphnet::WindSample>> wind(steps);
    for (int t = 0; t < steps; ++t) {
        wind[t].resize(n);
        for (int j = 0; j < n; ++j) {
            wind[t][j].speed = series.wind_speed(t, j);
            wind[t][j].direction = series.wind_direction(t, j);
        }
    }
    graph_ = graphnet::DynamicGraph(topology.stations(), topology.edges());
    graph_.set_wind(std::move(wind));
    cache_.resize(steps);
    ready_.assign(steps, 0);
}

const GraphContext& GraphContextSeries::at(int t) const {
    if (t < 0 || t >= static_cast<int>(cache_.size()))
        throw std::out_of_range("GraphContextSeries::at: step out of range");
    if (!ready_[t]) {
        cache_[t] = make_graph_context(graph_, t);
        ready_[t] = 1;
    }
    return cache_[t];
}

odecore::FieldMode parse_filter_type(const std::string& s) {
    if (s == "diff") return odecore::FieldMode::diffusion_only;
    if (s == "adv") return odecore::FieldMode::advection_only;
    if (s == "diff_adv") return odecore::FieldMode::full;
    throw std::invalid_argument("filter_type must be one of " + filter_type_names() +
                                ", got '" + s + "'");
}

std::string filter_type_names() { return "diff, adv, diff_adv"; }

namespace {

Tensor init_matrix(int rows, int cols, Rng& rng, double scale) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

Tensor init_fan_in(int rows, int cols, Rng& rng) {
    return init_matrix(rows, cols, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
}

} // namespace

Model::Model(const ModelConfig& cfg, int n_stations, std::uint64_t seed)
    : cfg_(cfg), n_(n_stations) {
    if (n_stations < 1) throw std::invalid_argument("Model: need >= 1 station");
    if (cfg.K < 1) throw std::invalid_argument("Model: K must be >= 1");
    if (cfg.S < 1) throw std::invalid_argument("Model: S must be >= 1");
    if (cfg.tau < 1 || cfg.T < 1) throw std::invalid_argument("Model: T and tau must be >= 1");
    parse_filter_type(cfg.filter_type); // validates
    Rng rng(seed);

    int h = cfg.gru_hidden, g = cfg.gat_out, d = cfg.d_l;
    int d_e = h + g;
    params_.add("gru.wx", init_fan_in(1, 3 * h, rng));
    params_.add("gru.wh", init_fan_in(h, 3 * h, rng));
    params_.add("gru.b", Tensor(1, 3 * h));
    params_.add("gat.w", init_fan_in(h, g, rng));
    params_.add("gat.a_self", init_fan_in(g, 1, rng));
    params_.add("gat.a_neigh", init_fan_in(g, 1, rng));
    params_.add("gat.a_wind", init_fan_in(3, 1, rng));
    params_.add("head.w_mu", init_fan_in(d_e, d, rng));
    params_.add("head.b_mu", Tensor(1, d));
    params_.add("head.w_sigma", init_fan_in(d_e, d, rng));
    params_.add("head.b_sigma", Tensor(1, d, -2.0));
    params_.add("cond.w", init_fan_in(d_e, cfg.cond_dim, rng));
    params_.add("cond.b", Tensor(1, cfg.cond_dim));
    for (int k = 0; k < cfg.K; ++k) {
        params_.add("transport.theta_d." + std::to_string(k), init_fan_in(d, d, rng));
        params_.add("transport.theta_a." + std::to_string(k), init_fan_in(d, d, rng));
    }
    params_.add("transport.w_alpha", init_fan_in(2 * d + cfg.wind_proj, d, rng));
    params_.add("transport.b_alpha", Tensor(1, d));
    params_.add("transport.w_phi", init_fan_in(3, cfg.wind_proj, rng));
    params_.add("transport.b_phi", Tensor(1, cfg.wind_proj));

    int m_field = spectral::clamp_modes(cfg.m_modes, n_stations);
    int m_temp = spectral::clamp_modes(cfg.m_modes, cfg.tau);
    params_.add("spec_field.w_re", init_matrix(m_field, d, rng, 0.1));
    params_.add("spec_field.w_im", init_matrix(m_field, d, rng, 0.1));
    params_.add("spec_field.r_w1", init_fan_in(4, cfg.spectral_hidden, rng));
    params_.add("spec_field.r_b1", Tensor(1, cfg.spectral_hidden));
    params_.add("spec_field.r_w2", init_matrix(cfg.spectral_hidden, 2, rng, 0.01));
    params_.add("spec_field.r_b2", Tensor(1, 2));
    params_.add("spec_temp.w_re", init_matrix(m_temp, d, rng, 0.5));
    params_.add("spec_temp.w_im", init_matrix(m_temp, d, rng, 0.1));
    params_.add("spec_temp.r_w1", init_fan_in(4, cfg.spectral_hidden, rng));
    params_.add("spec_temp.r_b1", Tensor(1, cfg.spectral_hidden));
    params_.add("spec_temp.r_w2", init_matrix(cfg.spectral_hidden, 2, rng, 0.01));
    params_.add("spec_temp.r_b2", Tensor(1, 2));

    params_.add("phi.w1", init_fan_in(d + cfg.cond_dim, cfg.phi_hidden, rng));
    params_.add("phi.b1", Tensor(1, cfg.phi_hidden));
    params_.add("phi.w2", init_matrix(cfg.phi_hidden, d, rng, 0.01));
    params_.add("phi.b2", Tensor(1, d));
    params_.add("fusion.w1", init_fan_in(3 * d, cfg.gate_hidden, rng));
    params_.add("fusion.b1", Tensor(1, cfg.gate_hidden));
    params_.add("fusion.w2", init_fan_in(cfg.gate_hidden, d, rng));
    params_.add("fusion.b2", Tensor(1, d));
    params_.add("decoder.w", init_fan_in(d, 1, rng));
    params_.add("decoder.b", Tensor(1, 1));
    params_.add("decoder.w_logvar", init_matrix(d, 1, rng, 0.01));
    params_.add("decoder.b_logvar", Tensor(1, 1, -1.0));
    params_.add("nig.w", init_fan_in(d, 4, rng));
    params_.add("nig.b", Tensor(1, 4));
    // softplus(raw) + 1e-6 = 0.1
    params_.add("diffusion_raw", Tensor(1, 1, std::log(std::expm1(0.1))));
}

BoundParams Model::bind(ad::Tape& tape) const {
    BoundParams b;
    b.vars.reserve(params_.count());
    for (int i = 0; i < params_.count(); ++i) b.vars.push_back(tape.leaf(params_.at(i).value));
    auto v = [&](const std::string& name) -> ad::Var {
        for (int i = 0; i < params_.count(); ++i)
            if (params_.at(i).name == name) return b.vars[i];
        throw std::out_of_range("unknown parameter " + name);
    };
    b.enc.gru = {v("gru.wx"), v("gru.wh"), v("gru.b"), cfg_.gru_hidden};
    b.enc.gat = {v("gat.w"), v("gat.a_self"), v("gat.a_neigh"), v("gat.a_wind"), 0.2};
    b.enc.head = {v("head.w_mu"), v("head.b_mu"), v("head.w_sigma"), v("head.b_sigma"),
                  cfg_.sigma_floor};
    b.w_cond = v("cond.w");
    b.b_cond = v("cond.b");
    for (int k = 0; k < cfg_.K; ++k) {
        b.theta_d.push_back(v("transport.theta_d." + std::to_string(k)));
        b.theta_a.push_back(v("transport.theta_a." + std::to_string(k)));
    }
    b.transport = {v("transport.w_alpha"), v("transport.b_alpha"), v("transport.w_phi"),
                   v("transport.b_phi")};
    b.spec_field = {v("spec_field.w_re"), v("spec_field.w_im"), v("spec_field.r_w1"),
                    v("spec_field.r_b1"), v("spec_field.r_w2"), v("spec_field.r_b2"),
                    params_.find("spec_field.w_re").value.rows(), cfg_.spectral_residual};
    b.spec_temp = {v("spec_temp.w_re"), v("spec_temp.w_im"), v("spec_temp.r_w1"),
                   v("spec_temp.r_b1"), v("spec_temp.r_w2"), v("spec_temp.r_b2"),
                   params_.find("spec_temp.w_re").value.rows(), cfg_.spectral_residual};
    b.phi = {v("phi.w1"), v("phi.b1"), v("phi.w2"), v("phi.b2"), Tensor()};
    b.fusion_gate = {v("fusion.w1"), v("fusion.b1"), v("fusion.w2"), v("fusion.b2")};
    b.decoder = {v("decoder.w"), v("decoder.b"), cfg_.heteroscedastic,
                 v("decoder.w_logvar"), v("decoder.b_logvar")};
    b.nig = {v("nig.w"), v("nig.b")};
    b.diffusion_raw = v("diffusion_raw");
    return b;
}

ForwardResult Model::forward(ad::Tape& tape, const std::vector<Tensor>& inputs,
                             const GraphContext& gc, Rng& rng, bool training) const {
    if (static_cast<int>(inputs.size()) != cfg_.T)
        throw std::invalid_argument("forward: expected T = " + std::to_string(cfg_.T) +
                                    " input steps, got " + std::to_string(inputs.size()));
    ForwardResult res;
    res.bound = bind(tape);
    const BoundParams& bp = res.bound;
    const int n = n_, d = cfg_.d_l, tau = cfg_.tau, S = cfg_.S;

    // Step 1: encoder and z0 sampling.
    encoder::EncoderOutput enc =
        encoder::encode_sequence(tape, inputs, gc.adj_mask, gc.wind_feat, bp.enc);
    std::vector<ad::Var> z0s = encoder::sample_z0(tape, enc, S, rng);

    res.diffusion = tape.add_scalar(tape.softplus_(bp.diffusion_raw), 1e-6);
    double d_value = tape.val(res.diffusion)(0, 0);

    // Step 2: physics-aware latent ODE over the forecast horizon.
    odecore::VectorFieldSpec spec;
    spec.mode = parse_filter_type(cfg_.filter_type);
    spec.laplacian = gc.laplacian;
    spec.advection = gc.advection;
    spec.diffusion = d_value;
    spec.theta_d = bp.theta_d;
    spec.theta_a = bp.theta_a;
    spec.gate = bp.transport;
    spec.wind_feat = gc.wind_feat;
    spec.has_spectral = cfg_.spectral_in_field && n >= 2;
    spec.spec = bp.spec_field;
    spec.spectral_dt = 1.0; // station-axis spacing
    spec.mean_wind_speed = gc.mean_wind_speed;
    spec.has_phi = true;
    spec.phi = bp.phi;
    // Conditioning on the encoder summary, projected small; held constant
    // inside the field (no gradient through the conditioning path).
    Tensor cond_val = tape.val(tape.tanh_(tape.linear(enc.e_t, bp.w_cond, bp.b_cond)));
    spec.cond = cond_val;

    std::vector<double> times(tau);
    for (int t = 0; t < tau; ++t) times[t] = (t + 1) * cfg_.dt;
    odecore::OdeConfig ocfg;
    ocfg.rtol = cfg_.rtol;
    ocfg.atol = cfg_.atol;
    ocfg.initial_dt = 0.5 * cfg_.dt;
    double drop = cfg_.dropout;
    std::vector<odecore::Trajectory> trajs =
        odecore::mc_trajectories(tape, spec, z0s, 0.0, times, ocfg, drop, rng);
    (void)training; // MC dropout stays active at inference by design

    // Steps 3-4: spectral transport, evidential fusion, decoding per sample.
    std::vector<std::vector<ad::Var>> z_final(n); // [station][sample], tau x d
    for (int s = 0; s < S; ++s) {
        // Stack the trajectory into tau x (n*d): row t = z(t) flattened.
        std::vector<ad::Var> flat;
        flat.reserve(tau);
        for (ad::Var st : trajs[s].states) flat.push_back(tape.reshape(st, 1, n * d));
        ad::Var stacked = tape.reshape(tape.concat_cols(flat), tau, n * d);
        if (drop > 0.0) {
            // Per-sample dropout on the latent trajectory before fusion;
            // columns dropped jointly across the horizon.
            Tensor mask(tau, n * d);
            double keep = 1.0 / (1.0 - drop);
            for (int j = 0; j < n * d; ++j) {
                double mv = rng.uniform() >= drop ? keep : 0.0;
                for (int t = 0; t < tau; ++t) mask(t, j) = mv;
            }
            stacked = tape.mul_const(stacked, mask);
        }
        std::vector<ad::Var> y_cols, a_cols;
        for (int i = 0; i < n; ++i) {
            ad::Var zi = tape.slice_cols(stacked, i * d, (i + 1) * d); // tau x d
            ad::Var zspec = spectral::fourier_pde_step(tape, zi, bp.spec_temp, d_value,
                                                       gc.mean_wind_speed, cfg_.dt);
            Tensor gamma(tau, d);
            for (std::size_t q = 0; q < gamma.size(); ++q) gamma[q] = rng.uniform();
            ad::Var gate = fusion::evidential_gate(tape, zspec, zi, gamma, bp.fusion_gate);
            ad::Var zf = fusion::fuse(tape, zspec, zi, gate);
            z_final[i].push_back(zf);
            y_cols.push_back(fusion::decode(tape, zf, bp.decoder));
            if (cfg_.heteroscedastic)
                a_cols.push_back(fusion::decode_variance(tape, zf, bp.decoder));
        }
        res.y_samples.push_back(tape.concat_cols(y_cols));
        if (cfg_.heteroscedastic) res.aleatoric.push_back(tape.concat_cols(a_cols));
    }

    // Step 5: ensemble mean on the tape (variances are computed from values
    // by fusion::ensemble_stats at the call site).
    ad::Var acc = tape.scale(res.y_samples[0], 1.0 / S);
    for (int s = 1; s < S; ++s) acc = tape.axpy(1.0 / S, res.y_samples[s], acc);
    res.y_mean = acc;

    if (cfg_.evidential) {
        std::vector<ad::Var> mu_c, la_c, al_c, be_c;
        for (int i = 0; i < n; ++i) {
            ad::Var zm = tape.scale(z_final[i][0], 1.0 / S);
            for (int s = 1; s < S; ++s) zm = tape.axpy(1.0 / S, z_final[i][s], zm);
            fusion::NigOutput o = fusion::nig_head(tape, zm, bp.nig);
            mu_c.push_back(o.mu);
            la_c.push_back(o.lambda);
            al_c.push_back(o.alpha);
            be_c.push_back(o.beta);
        }
        res.nig = {tape.concat_cols(mu_c), tape.concat_cols(la_c), tape.concat_cols(al_c),
                   tape.concat_cols(be_c)};
        res.has_nig = true;
    }
    return res;
}

namespace {

void write_double(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    out << buf;
}

double read_double(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated value stream");
    return std::strtod(tok.c_str(), nullptr);
}

} // namespace

void Model::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "neuroddaf-checkpoint 1\n";
    out << "n_stations " << n_ << "\n";
    out << "T " << cfg_.T << "\ntau " << cfg_.tau << "\nd_l " << cfg_.d_l << "\ngru_hidden "
        << cfg_.gru_hidden << "\ngat_out " << cfg_.gat_out << "\nK " << cfg_.K << "\nS "
        << cfg_.S << "\nm_modes " << cfg_.m_modes << "\ngate_hidden " << cfg_.gate_hidden
        << "\nphi_hidden " << cfg_.phi_hidden << "\ncond_dim " << cfg_.cond_dim
        << "\nwind_proj " << cfg_.wind_proj << "\nspectral_hidden " << cfg_.spectral_hidden
        << "\n";
    out << "rtol ";
    write_double(out, cfg_.rtol);
    out << "\natol ";
    write_double(out, cfg_.atol);
    out << "\ndt ";
    write_double(out, cfg_.dt);
    out << "\ndropout ";
    write_double(out, cfg_.dropout);
    out << "\nsigma_floor ";
    write_double(out, cfg_.sigma_floor);
    out << "\nspectral_in_field " << (cfg_.spectral_in_field ? 1 : 0) << "\nspectral_residual "
        << (cfg_.spectral_residual ? 1 : 0) << "\nheteroscedastic "
        << (cfg_.heteroscedastic ? 1 : 0) << "\nevidential " << (cfg_.evidential ? 1 : 0)
        << "\nfilter_type " << cfg_.filter_type << "\n";
    out << "params " << params_.count() << "\n";
    for (int i = 0; i < params_.count(); ++i) {
        const ParamStore::Entry& e = params_.at(i);
        out << e.name << " " << e.value.rows() << " " << e.value.cols() << "\n";
        for (std::size_t q = 0; q < e.value.size(); ++q) {
            if (q) out << ' ';
            write_double(out, e.value[q]);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int version;
    if (!(in >> magic >> version) || magic != "neuroddaf-checkpoint" || version != 1)
        throw std::runtime_error(path + ": not a version-1 checkpoint");
    ModelConfig cfg;
    int n = 0;
    std::string key;
    auto expect = [&](const char* want) {
        if (!(in >> key) || key != want)
            throw std::runtime_error(path + ": expected key '" + want + "', got '" + key + "'");
    };
    expect("n_stations");
    in >> n;
    expect("T");
    in >> cfg.T;
    expect("tau");
    in >> cfg.tau;
    expect("d_l");
    in >> cfg.d_l;
    expect("gru_hidden");
    in >> cfg.gru_hidden;
    expect("gat_out");
    in >> cfg.gat_out;
    expect("K");
    in >> cfg.K;
    expect("S");
    in >> cfg.S;
    expect("m_modes");
    in >> cfg.m_modes;
    expect("gate_hidden");
    in >> cfg.gate_hidden;
    expect("phi_hidden");
    in >> cfg.phi_hidden;
    expect("cond_dim");
    in >> cfg.cond_dim;
    expect("wind_proj");
    in >> cfg.wind_proj;
    expect("spectral_hidden");
    in >> cfg.spectral_hidden;
    expect("rtol");
    cfg.rtol = read_double(in);
    expect("atol");
    cfg.atol = read_double(in);
    expect("dt");
    cfg.dt = read_double(in);
    expect("dropout");
    cfg.dropout = read_double(in);
    expect("sigma_floor");
    cfg.sigma_floor = read_double(in);
    int flag;
    expect("spectral_in_field");
    in >> flag;
    cfg.spectral_in_field = flag != 0;
    expect("spectral_residual");
    in >> flag;
    cfg.spectral_residual = flag != 0;
    expect("heteroscedastic");
    in >> flag;
    cfg.heteroscedastic = flag != 0;
    expect("evidential");
    in >> flag;
    cfg.evidential = flag != 0;
    expect("filter_type");
    in >> cfg.filter_type;
    Model m(cfg, n, 0);
    expect("params");
    int count;
    in >> count;
    if (count != m.params_.count())
        throw std::runtime_error(path + ": parameter count mismatch");
    for (int i = 0; i < count; ++i) {
        std::string name;
        int r, c;
        if (!(in >> name >> r >> c)) throw std::runtime_error(path + ": truncated parameter header");
        ParamStore::Entry& e = m.params_.find(name);
        if (e.value.rows() != r || e.value.cols() != c)
            throw std::runtime_error(path + ": shape mismatch for " + name);
        for (std::size_t q = 0; q < e.value.size(); ++q) e.value[q] = read_double(in);
    }
    return m;
}

} // namespace neuroddaf::model
