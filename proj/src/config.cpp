#include "neuroddaf/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace neuroddaf::config {

namespace {

struct Field {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_int(long v) { return std::to_string(v); }

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

long parse_int(const std::string& s) {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not an integer");
    return v;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("not a number");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("not a boolean (use true/false)");
}

#define INT_FIELD(key, ref)                                                        \
    {key, [](const RunConfig& c) { return fmt_int(c.ref); },                       \
     [](RunConfig& c, const std::string& s) { c.ref = static_cast<int>(parse_int(s)); }}
#define U64_FIELD(key, ref)                                                        \
    {key, [](const RunConfig& c) { return fmt_int(static_cast<long>(c.ref)); },    \
     [](RunConfig& c, const std::string& s) { c.ref = static_cast<std::uint64_t>(parse_int(s)); }}
#define DBL_FIELD(key, ref)                                                        \
    {key, [](const RunConfig& c) { return fmt_double(c.ref); },                    \
     [](RunConfig& c, const std::string& s) { c.ref = parse_double(s); }}
#define BOOL_FIELD(key, ref)                                                       \
    {key, [](const RunConfig& c) { return std::string(c.ref ? "true" : "false"); },\
     [](RunConfig& c, const std::string& s) { c.ref = parse_bool(s); }}
#define STR_FIELD(key, ref)                                                        \
    {key, [](const RunConfig& c) { return c.ref; },                                \
     [](RunConfig& c, const std::string& s) { c.ref = s; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        INT_FIELD("T", model.T),
        INT_FIELD("tau", model.tau),
        INT_FIELD("d_l", model.d_l),
        INT_FIELD("gru_hidden", model.gru_hidden),
        INT_FIELD("gat_out", model.gat_out),
        INT_FIELD("K", model.K),
        INT_FIELD("S", model.S),
        INT_FIELD("m_modes", model.m_modes),
        INT_FIELD("gate_hidden", model.gate_hidden),
        INT_FIELD("phi_hidden", model.phi_hidden),
        INT_FIELD("cond_dim", model.cond_dim),
        INT_FIELD("wind_proj", model.wind_proj),
        INT_FIELD("spectral_hidden", model.spectral_hidden),
        DBL_FIELD("rtol", model.rtol),
        DBL_FIELD("atol", model.atol),
        DBL_FIELD("dt", model.dt),
        DBL_FIELD("dropout", model.dropout),
        DBL_FIELD("sigma_floor", model.sigma_floor),
        BOOL_FIELD("spectral_in_field", model.spectral_in_field),
        BOOL_FIELD("spectral_residual", model.spectral_residual),
        BOOL_FIELD("heteroscedastic", model.heteroscedastic),
        BOOL_FIELD("evidential", model.evidential),
        STR_FIELD("filter_type", model.filter_type),
        DBL_FIELD("lr", train.lr),
        DBL_FIELD("beta1", train.beta1),
        DBL_FIELD("beta2", train.beta2),
        DBL_FIELD("eps", train.eps),
        INT_FIELD("batch_size", train.batch_size),
        DBL_FIELD("lr_decay", train.lr_decay),
        INT_FIELD("lr_decay_epochs", train.lr_decay_epochs),
        DBL_FIELD("grad_clip_norm", train.grad_clip_norm),
        INT_FIELD("max_epochs", train.max_epochs),
        INT_FIELD("patience", train.patience),
        DBL_FIELD("lambda_phys", train.lambda_phys),
        DBL_FIELD("lambda_unc", train.lambda_unc),
        DBL_FIELD("lambda_reg", train.lambda_reg),
        INT_FIELD("window_stride", train.window_stride),
        U64_FIELD("seed", train.seed),
        DBL_FIELD("length_scale_km", length_scale_km),
        DBL_FIELD("cutoff_km", cutoff_km),
        INT_FIELD("eval_stride", eval_stride),
        INT_FIELD("synth_stations", synth_stations),
        INT_FIELD("synth_steps", synth_steps),
        DBL_FIELD("synth_diffusion", synth_diffusion),
        DBL_FIELD("synth_noise_std", synth_noise_std),
        DBL_FIELD("synth_wind_base", synth_wind_base),
        DBL_FIELD("synth_wind_amplitude", synth_wind_amplitude),
        DBL_FIELD("synth_advection_strength", synth_advection_strength),
    };
    return f;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace

void validate(const RunConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("config constraint: " + msg); };
    if (cfg.model.T < 1) fail("T must be >= 1");
    if (cfg.model.tau < 1) fail("tau must be >= 1");
    if (cfg.model.d_l < 1) fail("d_l must be >= 1");
    if (cfg.model.K < 1) fail("K must be >= 1");
    if (cfg.model.S < 1) fail("S must be >= 1");
    if (cfg.model.m_modes < 1) fail("m_modes must be >= 1");
    if (cfg.model.gru_hidden < 1 || cfg.model.gat_out < 1) fail("encoder sizes must be >= 1");
    if (cfg.model.rtol <= 0 || cfg.model.atol <= 0) fail("rtol and atol must be positive");
    if (cfg.model.dt <= 0) fail("dt must be positive");
    if (cfg.model.dropout < 0 || cfg.model.dropout >= 1) fail("dropout must be in [0, 1)");
    try {
        model::parse_filter_type(cfg.model.filter_type);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    if (cfg.train.lr <= 0) fail("lr must be positive");
    if (cfg.train.beta1 <= 0 || cfg.train.beta1 >= 1 || cfg.train.beta2 <= 0 ||
        cfg.train.beta2 >= 1)
        fail("betas must be in (0, 1)");
    if (cfg.train.eps <= 0) fail("eps must be positive");
    if (cfg.train.batch_size < 1) fail("batch_size must be >= 1");
    if (cfg.train.lr_decay <= 0 || cfg.train.lr_decay > 1) fail("lr_decay must be in (0, 1]");
    if (cfg.train.lr_decay_epochs < 1) fail("lr_decay_epochs must be >= 1");
    if (cfg.train.grad_clip_norm <= 0) fail("grad_clip_norm must be positive");
    if (cfg.train.max_epochs < 0) fail("max_epochs must be >= 0");
    if (cfg.train.patience < 1) fail("patience must be >= 1");
    if (cfg.train.lambda_phys < 0 || cfg.train.lambda_unc < 0 || cfg.train.lambda_reg < 0)
        fail("loss weights must be >= 0");
    if (cfg.train.window_stride < 1) fail("window_stride must be >= 1");
    if (cfg.length_scale_km <= 0 || cfg.cutoff_km <= 0) fail("graph scales must be positive");
    if (cfg.eval_stride < 1) fail("eval_stride must be >= 1");
    if (cfg.synth_stations < 2) fail("synth_stations must be >= 2");
    if (cfg.synth_steps < 1) fail("synth_steps must be >= 1");
    if (cfg.synth_diffusion < 0 || cfg.synth_noise_std < 0) fail("synth parameters must be >= 0");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        const Field* field = nullptr;
        for (const Field& f : fields())
            if (key == f.name) {
                field = &f;
                break;
            }
        if (!field)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        try {
            field->set(cfg, value);
        } catch (const std::exception& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + key +
                              "': " + e.what());
        }
    }
    validate(cfg);
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize(const RunConfig& cfg) {
    std::ostringstream out;
    for (const Field& f : fields()) out << f.name << " = " << f.get(cfg) << "\n";
    return out.str();
}

void write_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << serialize(cfg);
    if (!out) throw std::runtime_error("write failed for " + path);
}

dataio::SynthConfig synth_config(const RunConfig& cfg, std::uint64_t seed) {
    dataio::SynthConfig s;
    s.n_stations = cfg.synth_stations;
    s.n_steps = cfg.synth_steps;
    s.diffusion = cfg.synth_diffusion;
    s.noise_std = cfg.synth_noise_std;
    s.wind_base = cfg.synth_wind_base;
    s.wind_amplitude = cfg.synth_wind_amplitude;
    s.advection_strength = cfg.synth_advection_strength;
    s.length_scale_km = cfg.length_scale_km;
    s.cutoff_km = cfg.cutoff_km;
    s.seed = seed;
    return s;
}

} // namespace neuroddaf::config
