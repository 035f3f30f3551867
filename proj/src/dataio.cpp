#include "neuroddaf/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "neuroddaf/rng.hpp"

namespace neuroddaf::dataio {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& s, const char* what, int line_no) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what +
                                    " value '" + s + "'");
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size())
        throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what +
                                    " value '" + s + "'");
    return v;
}

constexpr int kDaysBeforeMonth[] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

} // namespace

std::int64_t parse_iso8601(const std::string& s) {
    // YYYY-MM-DD[T ]HH:MM:SS with optional trailing Z.
    std::string t = s;
    if (!t.empty() && t.back() == 'Z') t.pop_back();
    int y, mo, d, h, mi, sec;
    char sep;
    if (std::sscanf(t.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec) != 7 ||
        (sep != 'T' && sep != ' '))
        throw std::invalid_argument("malformed timestamp '" + s + "'");
    if (mo < 1 || mo > 12 || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60)
        throw std::invalid_argument("malformed timestamp '" + s + "'");
    int month_days = (mo == 12 ? 365 : kDaysBeforeMonth[mo]) - kDaysBeforeMonth[mo - 1] +
                     (mo == 2 && is_leap(y) ? 1 : 0);
    if (d < 1 || d > month_days)
        throw std::invalid_argument("malformed timestamp '" + s + "'");
    // Days since 1970-01-01.
    std::int64_t days = 0;
    for (int yy = 1970; yy < y; ++yy) days += is_leap(yy) ? 366 : 365;
    for (int yy = y; yy < 1970; ++yy) days -= is_leap(yy) ? 366 : 365;
    days += kDaysBeforeMonth[mo - 1] + (mo > 2 && is_leap(y) ? 1 : 0) + (d - 1);
    return days * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_iso8601(std::int64_t t) {
    std::int64_t days = t / 86400, rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y = 1970;
    while (true) {
        int len = is_leap(y) ? 366 : 365;
        if (days >= len) {
            days -= len;
            ++y;
        } else if (days < 0) {
            --y;
            days += is_leap(y) ? 366 : 365;
        } else {
            break;
        }
    }
    int mo = 12;
    while (kDaysBeforeMonth[mo - 1] + (mo > 2 && is_leap(y) ? 1 : 0) > days) --mo;
    int d = static_cast<int>(days) - kDaysBeforeMonth[mo - 1] - (mo > 2 && is_leap(y) ? 1 : 0) + 1;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, mo, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

SeriesTable ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument(path + ": empty file (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "station_id,timestamp,pm25,wind_speed,wind_direction")
        throw std::invalid_argument(path + ": bad header '" + line + "'");

    struct Row {
        double pm25 = 0, speed = 0, dir = 0;
        bool has_pm25 = false, has_speed = false, has_dir = false;
    };
    // (station, timestamp) -> row; later rows overwrite duplicates.
    std::map<std::string, std::map<std::int64_t, Row>> by_station;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 5)
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                        std::to_string(f.size()));
        if (f[0].empty())
            throw std::invalid_argument("line " + std::to_string(line_no) + ": empty station_id");
        std::int64_t ts;
        try {
            ts = parse_iso8601(f[1]);
        } catch (const std::exception& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
        }
        Row r;
        if (!f[2].empty()) {
            r.pm25 = parse_double_field(f[2], "pm25", line_no);
            r.has_pm25 = true;
        }
        if (!f[3].empty()) {
            r.speed = parse_double_field(f[3], "wind_speed", line_no);
            r.has_speed = true;
        }
        if (!f[4].empty()) {
            r.dir = parse_double_field(f[4], "wind_direction", line_no);
            if (r.dir < 0.0 || r.dir >= 360.0) {
                r.dir = std::fmod(std::fmod(r.dir, 360.0) + 360.0, 360.0);
            }
            r.has_dir = true;
        }
        by_station[f[0]][ts] = r;
    }

    SeriesTable out;
    for (const auto& [id, rows] : by_station) out.station_ids.push_back(id);
    if (out.station_ids.empty()) return out;

    std::int64_t t_min = 0, t_max = 0;
    bool first = true;
    for (const auto& [id, rows] : by_station) {
        if (rows.empty()) continue;
        std::int64_t lo = rows.begin()->first, hi = rows.rbegin()->first;
        if (first) {
            t_min = lo;
            t_max = hi;
            first = false;
        } else {
            t_min = std::min(t_min, lo);
            t_max = std::max(t_max, hi);
        }
        for (const auto& [ts, r] : rows)
            if ((ts - lo) % kStepSeconds != 0)
                throw std::invalid_argument("station " + id + ": timestamp " + format_iso8601(ts) +
                                            " off the 3-hour grid");
    }
    if ((t_max - t_min) % kStepSeconds != 0)
        throw std::invalid_argument("station timelines are offset against each other");

    int steps = static_cast<int>((t_max - t_min) / kStepSeconds) + 1;
    int n = static_cast<int>(out.station_ids.size());
    out.timestamps.resize(steps);
    for (int t = 0; t < steps; ++t) out.timestamps[t] = t_min + t * kStepSeconds;
    out.pm25.resize(steps, n);
    out.wind_speed.resize(steps, n);
    out.wind_direction.resize(steps, n);
    out.mask.resize(steps, n);
    int j = 0;
    for (const auto& [id, rows] : by_station) {
        for (const auto& [ts, r] : rows) {
            int t = static_cast<int>((ts - t_min) / kStepSeconds);
            if (r.has_pm25) {
                out.pm25(t, j) = r.pm25;
                out.mask(t, j) = 1.0;
            }
            if (r.has_speed) out.wind_speed(t, j) = r.speed;
            if (r.has_dir) out.wind_direction(t, j) = r.dir;
        }
        ++j;
    }
    return out;
}

std::vector<graphnet::Station> ingest_station_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument(path + ": empty file (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "station_id,lat,lon")
        throw std::invalid_argument(path + ": bad header '" + line + "'");
    std::vector<graphnet::Station> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 3)
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 3 fields");
        graphnet::Station s;
        s.id = f[0];
        s.lat = parse_double_field(f[1], "lat", line_no);
        s.lon = parse_double_field(f[2], "lon", line_no);
        out.push_back(s);
    }
    return out;
}

SeriesTable impute(const SeriesTable& series) {
    SeriesTable out = series;
    int steps = series.steps(), n = series.n_stations();
    for (int j = 0; j < n; ++j) {
        double station_sum = 0.0;
        int station_count = 0;
        for (int t = 0; t < steps; ++t)
            if (series.mask(t, j) != 0.0) {
                station_sum += series.pm25(t, j);
                ++station_count;
            }
        if (station_count == 0)
            throw std::runtime_error("station " + series.station_ids[j] +
                                     ": no observed values to impute from");
        double station_mean = station_sum / station_count;
        for (int t = 0; t < steps; ++t) {
            if (series.mask(t, j) != 0.0) continue;
            double sum = 0.0;
            int count = 0;
            for (int k = std::max(0, t - 4); k <= std::min(steps - 1, t + 4); ++k)
                if (series.mask(k, j) != 0.0) {
                    sum += series.pm25(k, j);
                    ++count;
                }
            out.pm25(t, j) = count > 0 ? sum / count : station_mean;
            out.mask(t, j) = 1.0;
        }
    }
    return out;
}

Tensor WindowedDataset::input_pm25(int w) const {
    int start = windows.at(w).start;
    Tensor x(T, series.n_stations());
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < series.n_stations(); ++j) x(t, j) = series.pm25(start + t, j);
    return x;
}

Tensor WindowedDataset::target_pm25(int w) const {
    int start = windows.at(w).start + T;
    Tensor y(tau, series.n_stations());
    for (int t = 0; t < tau; ++t)
        for (int j = 0; j < series.n_stations(); ++j) y(t, j) = series.pm25(start + t, j);
    return y;
}

namespace {

SeriesTable slice_series(const SeriesTable& s, int begin, int end) {
    SeriesTable out;
    out.station_ids = s.station_ids;
    int n = s.n_stations(), len = end - begin;
    out.timestamps.assign(s.timestamps.begin() + begin, s.timestamps.begin() + end);
    out.pm25.resize(len, n);
    out.wind_speed.resize(len, n);
    out.wind_direction.resize(len, n);
    out.mask.resize(len, n);
    for (int t = 0; t < len; ++t)
        for (int j = 0; j < n; ++j) {
            out.pm25(t, j) = s.pm25(begin + t, j);
            out.wind_speed(t, j) = s.wind_speed(begin + t, j);
            out.wind_direction(t, j) = s.wind_direction(begin + t, j);
            out.mask(t, j) = s.mask(begin + t, j);
        }
    return out;
}

WindowedDataset make_split(const SeriesTable& s, int begin, int end, int T, int tau,
                           const NormStats& norm) {
    WindowedDataset d;
    d.series = slice_series(s, begin, end);
    d.T = T;
    d.tau = tau;
    d.norm = norm;
    int n = d.series.n_stations();
    for (int t = 0; t < d.series.steps(); ++t)
        for (int j = 0; j < n; ++j)
            d.series.pm25(t, j) = (d.series.pm25(t, j) - norm.mean[j]) / norm.std[j];
    int usable = d.series.steps();
    for (int start = 0; start + T + tau <= usable; ++start) d.windows.push_back({start});
    return d;
}

} // namespace

SplitResult window_and_split(const SeriesTable& series, int T, int tau,
                             double f_train, double f_val, double f_test) {
    if (T < 1 || tau < 1) throw std::invalid_argument("window_and_split: T and tau must be >= 1");
    if (f_train <= 0 || f_val <= 0 || f_test <= 0 ||
        std::fabs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("window_and_split: fractions must be positive and sum to 1");
    int steps = series.steps();
    int min_per_split = T + tau;
    int n_train = static_cast<int>(std::floor(steps * f_train));
    int n_val = static_cast<int>(std::floor(steps * f_val));
    int n_test = steps - n_train - n_val;
    if (n_train < min_per_split || n_val < min_per_split || n_test < min_per_split)
        throw std::invalid_argument(
            "window_and_split: need at least " + std::to_string(min_per_split) +
            " steps per split (T + tau); have train/val/test = " + std::to_string(n_train) + "/" +
            std::to_string(n_val) + "/" + std::to_string(n_test));

    NormStats norm;
    int n = series.n_stations();
    norm.mean.resize(n);
    norm.std.resize(n);
    for (int j = 0; j < n; ++j) {
        double sum = 0.0;
        for (int t = 0; t < n_train; ++t) sum += series.pm25(t, j);
        double mean = sum / n_train;
        double sq = 0.0;
        for (int t = 0; t < n_train; ++t) {
            double d = series.pm25(t, j) - mean;
            sq += d * d;
        }
        norm.mean[j] = mean;
        norm.std[j] = std::max(std::sqrt(sq / n_train), 1e-8);
    }

    SplitResult out;
    out.train = make_split(series, 0, n_train, T, tau, norm);
    out.val = make_split(series, n_train, n_train + n_val, T, tau, norm);
    out.test = make_split(series, n_train + n_val, steps, T, tau, norm);
    return out;
}

double denormalize(double v, const NormStats& norm, int station) {
    return v * norm.std[station] + norm.mean[station];
}

double normalize_value(double v, const NormStats& norm, int station) {
    return (v - norm.mean[station]) / norm.std[station];
}

Tensor conservative_advection(const Tensor& p) {
    if (p.rows() != p.cols())
        throw std::invalid_argument("conservative_advection: matrix must be square");
    Tensor m = p;
    for (int j = 0; j < p.cols(); ++j) {
        double outflow = 0.0;
        for (int i = 0; i < p.rows(); ++i) outflow += p(i, j);
        m(j, j) -= outflow;
    }
    return m;
}

SynthResult synth_generate(const SynthConfig& cfg) {
    if (cfg.n_stations < 2) throw std::invalid_argument("synth_generate: need >= 2 stations");
    if (cfg.n_steps < 1) throw std::invalid_argument("synth_generate: n_steps must be >= 1");
    if (cfg.diffusion < 0 || cfg.dt <= 0 || cfg.noise_std < 0)
        throw std::invalid_argument("synth_generate: parameters must be non-negative, dt > 0");

    Rng rng(cfg.seed);
    // Stations scattered on a rough grid around (40N, 116E), tens of km apart.
    std::vector<graphnet::Station> stations;
    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.n_stations))));
    for (int i = 0; i < cfg.n_stations; ++i) {
        graphnet::Station s;
        s.id = "S" + std::to_string(i);
        s.lat = 40.0 + 0.4 * (i / cols) + 0.1 * rng.uniform();
        s.lon = 116.0 + 0.4 * (i % cols) + 0.1 * rng.uniform();
        stations.push_back(s);
    }
    graphnet::DynamicGraph graph = graphnet::build_graph(stations, cfg.length_scale_km, cfg.cutoff_km);

    // Wind field: either piecewise regimes or a slow sinusoid, with a drifting
    // direction shared across stations plus small per-station jitter.
    std::vector<std::vector<graphnet::WindSample>> wind(cfg.n_steps);
    std::vector<int> regime_truth(cfg.n_steps, 2);
    double dir0 = rng.uniform(0.0, 360.0);
    for (int t = 0; t < cfg.n_steps; ++t) {
        double speed;
        if (!cfg.wind_segments.empty()) {
            speed = cfg.wind_base;
            for (const auto& seg : cfg.wind_segments)
                if (t >= seg[0] && t < seg[1]) speed = seg[2];
        } else {
            speed = cfg.wind_base + cfg.wind_amplitude * std::sin(2.0 * M_PI * t / 64.0);
        }
        speed = std::max(0.0, speed);
        double dir = std::fmod(dir0 + 0.5 * t + 10.0 * std::sin(2.0 * M_PI * t / 200.0), 360.0);
        wind[t].resize(cfg.n_stations);
        for (int j = 0; j < cfg.n_stations; ++j) {
            wind[t][j].speed = std::max(0.0, speed + 0.1 * rng.normal());
            wind[t][j].direction = std::fmod(dir + 5.0 * rng.normal() + 360.0, 360.0);
        }
    }
    graph.set_wind(std::move(wind));

    Tensor lap = graphnet::laplacian(graph, 0);
    double lmax = graphnet::lambda_max(lap);
    if (cfg.diffusion > 0.0 && cfg.dt > 2.0 / (cfg.diffusion * lmax))
        throw std::invalid_argument(
            "synth_generate: unstable explicit step, need dt <= 2/(D*lambda_max) = " +
            format_double(2.0 / (cfg.diffusion * lmax)));

    SynthResult out;
    out.ground_truth.resize(cfg.n_steps, cfg.n_stations);
    Tensor c(cfg.n_stations, 1);
    for (int j = 0; j < cfg.n_stations; ++j) c(j, 0) = 20.0 + 10.0 * rng.uniform();

    for (int t = 0; t < cfg.n_steps; ++t) {
        for (int j = 0; j < cfg.n_stations; ++j) out.ground_truth(t, j) = c(j, 0);
        Tensor m = conservative_advection(
            graphnet::advection_operator(graph, t, graphnet::OperatorMode::learned));
        // The combined operator A = -D*L + a*M has zero column sums and
        // non-negative off-diagonal entries, so the Euler update I + dt*A is
        // column-stochastic -- hence mass-conserving and bounded -- exactly
        // when every diagonal entry stays non-negative.
        for (int j = 0; j < cfg.n_stations; ++j) {
            double drain = cfg.diffusion * lap(j, j) - cfg.advection_strength * m(j, j);
            if (cfg.dt * drain > 1.0)
                throw std::invalid_argument(
                    "synth_generate: unstable explicit step at t=" + std::to_string(t) +
                    ", need dt <= " + format_double(1.0 / drain));
        }
        Tensor dc(cfg.n_stations, 1);
        for (int i = 0; i < cfg.n_stations; ++i) {
            double acc = 0.0;
            for (int j = 0; j < cfg.n_stations; ++j)
                acc += (-cfg.diffusion * lap(i, j) + cfg.advection_strength * m(i, j)) * c(j, 0);
            dc(i, 0) = acc;
        }
        for (int i = 0; i < cfg.n_stations; ++i) c(i, 0) += cfg.dt * dc(i, 0);
        if (cfg.deposition_rate > 0.0)
            for (int i = 0; i < cfg.n_stations; ++i)
                c(i, 0) += cfg.dt * cfg.deposition_rate * (cfg.background - c(i, 0));
        if (cfg.emission_rate > 0.0)
            for (int i = 0; i < cfg.n_stations; ++i)
                if (rng.uniform() < cfg.emission_rate) c(i, 0) += cfg.emission_size * rng.uniform();
        for (int i = 0; i < cfg.n_stations; ++i) c(i, 0) = std::max(0.0, c(i, 0));
    }

    out.series.station_ids.reserve(cfg.n_stations);
    for (const auto& s : stations) out.series.station_ids.push_back(s.id);
    out.series.timestamps.resize(cfg.n_steps);
    std::int64_t t0 = parse_iso8601("2020-01-01T00:00:00");
    for (int t = 0; t < cfg.n_steps; ++t) out.series.timestamps[t] = t0 + t * kStepSeconds;
    out.series.pm25.resize(cfg.n_steps, cfg.n_stations);
    out.series.wind_speed.resize(cfg.n_steps, cfg.n_stations);
    out.series.wind_direction.resize(cfg.n_steps, cfg.n_stations);
    out.series.mask.resize(cfg.n_steps, cfg.n_stations);
    out.series.mask.fill(1.0);
    for (int t = 0; t < cfg.n_steps; ++t) {
        const std::vector<graphnet::WindSample>& w = graph.wind_at(t);
        for (int j = 0; j < cfg.n_stations; ++j) {
            out.series.pm25(t, j) = out.ground_truth(t, j) + cfg.noise_std * rng.normal();
            out.series.wind_speed(t, j) = w[j].speed;
            out.series.wind_direction(t, j) = w[j].direction;
        }
        // Ground-truth regime from the generating wind segments.
        if (!cfg.wind_segments.empty()) {
            for (const auto& seg : cfg.wind_segments)
                if (t >= seg[0] && t < seg[1])
                    regime_truth[t] = seg[2] >= cfg.wind_base ? 1 : 0;
        }
    }
    out.regime_truth = std::move(regime_truth);
    out.graph = std::move(graph);
    return out;
}

Metrics mae_rmse(const Tensor& yhat, const Tensor& y) {
    if (!yhat.same_shape(y)) throw std::invalid_argument("mae_rmse: shape mismatch");
    if (y.size() == 0) throw std::invalid_argument("mae_rmse: empty input");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double e = yhat[i] - y[i];
        abs_sum += std::fabs(e);
        sq_sum += e * e;
    }
    double n = static_cast<double>(y.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

double interval_coverage(const Tensor& y, const Tensor& lower, const Tensor& upper) {
    if (!y.same_shape(lower) || !y.same_shape(upper))
        throw std::invalid_argument("interval_coverage: shape mismatch");
    if (y.size() == 0) throw std::invalid_argument("interval_coverage: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] >= lower[i] && y[i] <= upper[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(y.size());
}

Regime classify_regime(const SeriesTable& series, int t, double wind_hi,
                       double wind_lo, double grad_hi) {
    if (wind_lo >= wind_hi)
        throw std::invalid_argument("classify_regime: need wind_lo < wind_hi");
    int n = series.n_stations();
    double mean_wind = 0.0, mean_pm = 0.0;
    for (int j = 0; j < n; ++j) {
        mean_wind += series.wind_speed(t, j);
        mean_pm += series.pm25(t, j);
    }
    mean_wind /= n;
    mean_pm /= n;
    double sq = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = series.pm25(t, j) - mean_pm;
        sq += d * d;
    }
    double grad = std::sqrt(sq / n);
    if (mean_wind >= wind_hi) return Regime::advection;
    if (mean_wind <= wind_lo && grad >= grad_hi) return Regime::diffusion;
    return Regime::other;
}

RegimeThresholds default_thresholds(const SeriesTable& series) {
    int steps = series.steps(), n = series.n_stations();
    std::vector<double> winds(steps), grads(steps);
    for (int t = 0; t < steps; ++t) {
        double mw = 0.0, mp = 0.0;
        for (int j = 0; j < n; ++j) {
            mw += series.wind_speed(t, j);
            mp += series.pm25(t, j);
        }
        mw /= n;
        mp /= n;
        double sq = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = series.pm25(t, j) - mp;
            sq += d * d;
        }
        winds[t] = mw;
        grads[t] = std::sqrt(sq / n);
    }
    auto percentile = [](std::vector<double> v, double p) {
        std::sort(v.begin(), v.end());
        double idx = p * (v.size() - 1);
        std::size_t lo = static_cast<std::size_t>(idx);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (idx - lo) * (v[hi] - v[lo]);
    };
    return {percentile(winds, 0.67), percentile(winds, 0.33), percentile(grads, 0.5)};
}

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::diffusion: return "diffusion";
        case Regime::advection: return "advection";
        default: return "other";
    }
}

void write_series_csv(const std::string& path, const SeriesTable& series) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "station_id,timestamp,pm25,wind_speed,wind_direction\n";
    for (int t = 0; t < series.steps(); ++t)
        for (int j = 0; j < series.n_stations(); ++j) {
            out << series.station_ids[j] << ',' << format_iso8601(series.timestamps[t]) << ',';
            if (series.mask(t, j) != 0.0) out << format_double(series.pm25(t, j));
            out << ',' << format_double(series.wind_speed(t, j)) << ','
                << format_double(series.wind_direction(t, j)) << '\n';
        }
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_station_meta_csv(const std::string& path,
                            const std::vector<graphnet::Station>& stations) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "station_id,lat,lon\n";
    for (const auto& s : stations)
        out << s.id << ',' << format_double(s.lat) << ',' << format_double(s.lon) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

} // namespace neuroddaf::dataio
