#pragma once
// Flat key=value run configuration covering model, training, graph and
// synthetic-data settings. Unknown keys are rejected; parse -> serialize ->
// parse is the identity.

#include "neuroddaf/dataio.hpp"
#include "neuroddaf/model.hpp"
#include "neuroddaf/train.hpp"

#include <string>

namespace neuroddaf::config {

struct RunConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    double length_scale_km = 60.0;
    double cutoff_km = 150.0;
    int eval_stride = 1;
    int synth_stations = 10;
    int synth_steps = 4000;
    double synth_diffusion = 0.15;
    double synth_noise_std = 0.05;
    double synth_wind_base = 3.0;
    double synth_wind_amplitude = 2.0;
    double synth_advection_strength = 1.0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Strict parse of `key = value` lines ('#' comments, blank lines allowed).
// Unknown keys, malformed values and constraint violations raise ConfigError
// naming the key and line. Missing keys keep their defaults.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config(const std::string& path);

// One `key = value` line per key, fixed order, value-preserving for doubles.
std::string serialize(const RunConfig& cfg);
void write_config(const std::string& path, const RunConfig& cfg);

// Constraint checks shared by parsing and programmatic construction.
void validate(const RunConfig& cfg);

dataio::SynthConfig synth_config(const RunConfig& cfg, std::uint64_t seed);

} // namespace neuroddaf::config
