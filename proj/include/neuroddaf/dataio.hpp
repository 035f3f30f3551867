#pragma once
// CSV ingestion, imputation, windowing/splitting, normalization, the
// synthetic diffusion-advection generator, forecast metrics and regime
// classification.

#include "neuroddaf/graphnet.hpp"
#include "neuroddaf/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace neuroddaf::dataio {

// Uniform 3-hour-resolution multi-station table. Values are stored as
// step x station matrices; mask(t, i) == 1 where a value was observed.
struct SeriesTable {
    std::vector<std::string> station_ids;
    std::vector<std::int64_t> timestamps; // unix seconds, strictly increasing, uniform
    Tensor pm25;            // T x N
    Tensor wind_speed;      // T x N
    Tensor wind_direction;  // T x N, degrees in [0, 360)
    Tensor mask;            // T x N, 1 = observed

    int steps() const { return pm25.rows(); }
    int n_stations() const { return pm25.cols(); }
};

constexpr std::int64_t kStepSeconds = 3 * 3600; // 3-hour resolution

// Parse "YYYY-MM-DDTHH:MM:SS" (optional trailing 'Z') to unix seconds.
// Throws std::invalid_argument on malformed input.
std::int64_t parse_iso8601(const std::string& s);
std::string format_iso8601(std::int64_t t);

// Header must be exactly `station_id,timestamp,pm25,wind_speed,wind_direction`.
// Rows are sorted and de-duplicated by (station, timestamp); the timeline is
// the union of timestamps, regularized to the 3-hour grid, with gaps masked.
// An empty pm25/wind field marks a missing observation. Errors carry the
// 1-based line number.
SeriesTable ingest_csv(const std::string& path);

// Header must be exactly `station_id,lat,lon`.
std::vector<graphnet::Station> ingest_station_meta(const std::string& path);

// Centered 24-hour (+/-4 step) moving-mean imputation of masked-out values;
// anything still missing falls back to the station mean over observed values.
// Throws if a station has zero observed values. Idempotent.
SeriesTable impute(const SeriesTable& series);

struct NormStats {
    std::vector<double> mean; // per station
    std::vector<double> std;  // per station, floored at 1e-8
};

struct Window {
    int start = 0; // index into the segment's series
};

// One chronological segment of the timeline plus the windows built inside it.
struct WindowedDataset {
    SeriesTable series;       // segment slice (normalized pm25)
    int T = 24;               // input length
    int tau = 24;             // forecast horizon
    std::vector<Window> windows;
    NormStats norm;           // fit on the training split

    int count() const { return static_cast<int>(windows.size()); }
    // T x N inputs (normalized pm25) and tau x N targets for window w.
    Tensor input_pm25(int w) const;
    Tensor target_pm25(int w) const;
};

struct SplitResult {
    WindowedDataset train, val, test;
};

// Contiguous chronological 70/10/20 split, per-station z-score fit on train.
// fractions must be positive and sum to 1.
SplitResult window_and_split(const SeriesTable& series, int T, int tau,
                             double f_train = 0.7, double f_val = 0.1,
                             double f_test = 0.2);

double denormalize(double v, const NormStats& norm, int station);
double normalize_value(double v, const NormStats& norm, int station);

struct SynthConfig {
    int n_stations = 10;
    int n_steps = 4000;
    double diffusion = 0.15;    // D
    double dt = 0.2;            // model time units per 3h step
    double wind_base = 3.0;     // mean wind speed, m/s
    double wind_amplitude = 2.0;
    double noise_std = 0.05;    // observation noise
    std::uint64_t seed = 0;
    double length_scale_km = 60.0;
    double cutoff_km = 150.0;
    double advection_strength = 1.0; // scales M(v_t)
    double emission_rate = 0.02;     // per-step probability of a pulse
    double emission_size = 5.0;
    double deposition_rate = 0.01;   // relaxation toward the background level
    double background = 20.0;
    // Optional piecewise wind regimes for the classifier benchmark:
    // each entry is (start_step, end_step, speed). Empty = sinusoidal wind.
    std::vector<std::array<double, 3>> wind_segments;
};

struct SynthResult {
    SeriesTable series;      // observed (noisy) data
    Tensor ground_truth;     // T x N noise-free concentrations
    graphnet::DynamicGraph graph;
    std::vector<int> regime_truth; // 0 = diffusion, 1 = advection, 2 = other
};

// Mass-conserving form of a transport matrix: subtracts each source column's
// total outflow from its diagonal so the result has zero column sums.
Tensor conservative_advection(const Tensor& p);

// Forward-Euler rollout c_{t+1} = c_t + dt*(-D L c_t + M(v_t) c_t) with
// seeded wind, emission pulses, relaxation toward a background level and
// Gaussian observation noise. M(v_t) is the conservative advection operator.
// Rejects dt violating the explicit-Euler stability bound, both the diffusion
// bound dt <= 2/(D*lambda_max(L)) and the combined-operator positivity bound.
SynthResult synth_generate(const SynthConfig& cfg);

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
};

// Mean absolute / root-mean-square error over all entries, original units.
Metrics mae_rmse(const Tensor& yhat, const Tensor& y);

// Fraction of truth values inside [lower, upper].
double interval_coverage(const Tensor& y, const Tensor& lower, const Tensor& upper);

enum class Regime { diffusion, advection, other };

// advection if mean wind >= wind_hi; diffusion if mean wind <= wind_lo and
// the cross-station pm25 std >= grad_hi; otherwise other.
Regime classify_regime(const SeriesTable& series, int t, double wind_hi,
                       double wind_lo, double grad_hi);

struct RegimeThresholds {
    double wind_hi = 0.0;
    double wind_lo = 0.0;
    double grad_hi = 0.0;
};

// Defaults: wind_hi/lo = 67th/33rd percentile of per-step mean wind speed,
// grad_hi = median of the cross-station pm25 std.
RegimeThresholds default_thresholds(const SeriesTable& series);

const char* regime_name(Regime r);

// Floats serialized with 9 significant digits throughout.
std::string format_double(double v);

void write_series_csv(const std::string& path, const SeriesTable& series);
void write_station_meta_csv(const std::string& path,
                            const std::vector<graphnet::Station>& stations);

} // namespace neuroddaf::dataio
