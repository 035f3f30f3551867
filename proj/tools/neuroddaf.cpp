// Command-line front end: ingest, simulate, train, forecast, evaluate,
// verify-theory, classify-regimes, plot.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
// 5 theory-suite failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "neuroddaf/config.hpp"
#include "neuroddaf/dataio.hpp"
#include "neuroddaf/model.hpp"
#include "neuroddaf/odecore.hpp"
#include "neuroddaf/theory.hpp"
#include "neuroddaf/train.hpp"

namespace nd = neuroddaf;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitTheory = 5;

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::uint64_t resolve_seed(bool seed_set, std::uint64_t seed_flag, const nd::config::RunConfig& cfg) {
    if (seed_set) return seed_flag;
    if (const char* env = std::getenv("NEURODDAF_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw CliError(kExitConfig, "NEURODDAF_SEED is not an integer: " + std::string(env));
        }
    }
    return cfg.train.seed;
}

nd::config::RunConfig load_config(const std::string& path) {
    if (path.empty()) return nd::config::RunConfig{};
    return nd::config::parse_config(path);
}

void echo_config(const fs::path& out_dir, const nd::config::RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    nd::config::write_config((out_dir / "effective-config.txt").string(), cfg);
}

nd::dataio::SeriesTable load_series(const std::string& path) {
    nd::dataio::SeriesTable s = nd::dataio::ingest_csv(path);
    if (s.n_stations() == 0) throw CliError(kExitData, "no stations in " + path);
    return nd::dataio::impute(s);
}

nd::graphnet::DynamicGraph build_graph_for(const nd::dataio::SeriesTable& series,
                                           const std::string& stations_path,
                                           const nd::config::RunConfig& cfg) {
    std::vector<nd::graphnet::Station> stations =
        nd::dataio::ingest_station_meta(stations_path);
    // Order metadata to match the series' station order.
    std::vector<nd::graphnet::Station> ordered;
    for (const std::string& id : series.station_ids) {
        bool found = false;
        for (const auto& s : stations)
            if (s.id == id) {
                ordered.push_back(s);
                found = true;
                break;
            }
        if (!found) throw CliError(kExitData, "station " + id + " missing from metadata");
    }
    nd::graphnet::DynamicGraph g =
        nd::graphnet::build_graph(ordered, cfg.length_scale_km, cfg.cutoff_km);
    std::vector<std::vector<nd::graphnet::WindSample>> wind(series.steps());
    for (int t = 0; t < series.steps(); ++t) {
        wind[t].resize(series.n_stations());
        for (int j = 0; j < series.n_stations(); ++j) {
            wind[t][j].speed = series.wind_speed(t, j);
            wind[t][j].direction = series.wind_direction(t, j);
        }
    }
    g.set_wind(std::move(wind));
    return g;
}

void write_norm_csv(const std::string& path, const nd::dataio::SeriesTable& series,
                    const nd::dataio::NormStats& norm) {
    std::ofstream out(path);
    if (!out) throw CliError(kExitData, "cannot write " + path);
    out << "station_id,mean,std\n";
    for (int j = 0; j < series.n_stations(); ++j)
        out << series.station_ids[j] << ',' << nd::dataio::format_double(norm.mean[j]) << ','
            << nd::dataio::format_double(norm.std[j]) << '\n';
}

nd::dataio::NormStats read_norm_csv(const std::string& path,
                                    const nd::dataio::SeriesTable& series) {
    std::ifstream in(path);
    if (!in) throw CliError(kExitData, "cannot open " + path);
    std::string line;
    std::getline(in, line);
    nd::dataio::NormStats norm;
    norm.mean.assign(series.n_stations(), 0.0);
    norm.std.assign(series.n_stations(), 1.0);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw CliError(kExitData, path + ": malformed row '" + line + "'");
        std::string id = line.substr(0, c1);
        for (int j = 0; j < series.n_stations(); ++j)
            if (series.station_ids[j] == id) {
                norm.mean[j] = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
                norm.std[j] = std::stod(line.substr(c2 + 1));
            }
    }
    return norm;
}

int cmd_ingest(const std::string& data, const std::string& stations, const std::string& output) {
    nd::dataio::SeriesTable series = load_series(data);
    if (!stations.empty()) {
        std::vector<nd::graphnet::Station> meta = nd::dataio::ingest_station_meta(stations);
        for (const std::string& id : series.station_ids) {
            bool found = false;
            for (const auto& s : meta) found = found || s.id == id;
            if (!found) throw CliError(kExitData, "station " + id + " missing from metadata");
        }
    }
    nd::dataio::write_series_csv(output, series);
    std::cout << "ingested " << series.n_stations() << " stations x " << series.steps()
              << " steps -> " << output << "\n";
    return kExitOk;
}

int cmd_simulate(const nd::config::RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    nd::dataio::SynthConfig scfg = nd::config::synth_config(cfg, seed);
    nd::dataio::SynthResult synth = nd::dataio::synth_generate(scfg);
    fs::create_directories(out_dir);
    nd::dataio::write_series_csv((fs::path(out_dir) / "data.csv").string(), synth.series);
    nd::dataio::write_station_meta_csv((fs::path(out_dir) / "stations.csv").string(),
                                       synth.graph.stations());
    echo_config(out_dir, cfg);
    std::cout << "simulated " << synth.series.n_stations() << " stations x "
              << synth.series.steps() << " steps -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const nd::config::RunConfig& cfg, std::uint64_t seed, const std::string& data,
              const std::string& stations, const std::string& out_dir) {
    nd::dataio::SeriesTable series = load_series(data);
    nd::graphnet::DynamicGraph graph = build_graph_for(series, stations, cfg);
    nd::dataio::SplitResult split =
        nd::dataio::window_and_split(series, cfg.model.T, cfg.model.tau);
    nd::model::Model m(cfg.model, series.n_stations(), seed);
    nd::train::TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;
    nd::train::FitResult fit = nd::train::fit(m, split, graph, tcfg);
    fs::create_directories(out_dir);
    m.save((fs::path(out_dir) / "checkpoint.txt").string());
    nd::train::write_history_csv((fs::path(out_dir) / "history.csv").string(), fit.history);
    write_norm_csv((fs::path(out_dir) / "norm.csv").string(), series, split.train.norm);
    echo_config(out_dir, cfg);
    std::cout << "trained " << fit.history.epochs.size() << " epochs, best val MAE "
              << nd::dataio::format_double(fit.history.best_val_mae) << " (epoch "
              << fit.history.best_epoch << ") -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_forecast(const nd::config::RunConfig& cfg, std::uint64_t seed, const std::string& data,
                 const std::string& stations, const std::string& checkpoint,
                 const std::string& norm_path, const std::string& output) {
    nd::dataio::SeriesTable series = load_series(data);
    nd::model::Model m = nd::model::Model::load(checkpoint);
    const nd::model::ModelConfig& mcfg = m.config();
    if (m.n_stations() != series.n_stations())
        throw CliError(kExitData, "checkpoint expects " + std::to_string(m.n_stations()) +
                                      " stations, data has " +
                                      std::to_string(series.n_stations()));
    if (series.steps() < mcfg.T)
        throw CliError(kExitData, "need at least " + std::to_string(mcfg.T) + " steps of data");
    nd::dataio::NormStats norm;
    if (!norm_path.empty()) {
        norm = read_norm_csv(norm_path, series);
    } else {
        norm.mean.assign(series.n_stations(), 0.0);
        norm.std.assign(series.n_stations(), 1.0);
        for (int j = 0; j < series.n_stations(); ++j) {
            double s = 0;
            for (int t = 0; t < series.steps(); ++t) s += series.pm25(t, j);
            norm.mean[j] = s / series.steps();
            double sq = 0;
            for (int t = 0; t < series.steps(); ++t) {
                double d = series.pm25(t, j) - norm.mean[j];
                sq += d * d;
            }
            norm.std[j] = std::max(std::sqrt(sq / series.steps()), 1e-8);
        }
    }
    nd::graphnet::DynamicGraph graph = build_graph_for(series, stations, cfg);
    nd::model::GraphContext gc = nd::model::make_graph_context(graph, series.steps() - 1);

    int t0 = series.steps() - mcfg.T, n = series.n_stations();
    std::vector<nd::Tensor> inputs;
    for (int t = 0; t < mcfg.T; ++t) {
        nd::Tensor col(n, 1);
        for (int j = 0; j < n; ++j)
            col(j, 0) = nd::dataio::normalize_value(series.pm25(t0 + t, j), norm, j);
        inputs.push_back(std::move(col));
    }
    nd::ad::Tape tape;
    nd::Rng rng(seed);
    nd::model::ForwardResult fwd = m.forward(tape, inputs, gc, rng, false);
    std::vector<nd::Tensor> members, alea;
    for (nd::ad::Var v : fwd.y_samples) members.push_back(tape.val(v));
    for (nd::ad::Var v : fwd.aleatoric) alea.push_back(tape.val(v));
    nd::fusion::EnsembleStats st =
        nd::fusion::ensemble_stats(members, alea.empty() ? nullptr : &alea);
    double q90 = nd::fusion::normal_quantile(0.95);

    std::ofstream out(output);
    if (!out) throw CliError(kExitData, "cannot write " + output);
    out << "station_id,timestamp,mean,lower,upper,var_epistemic,var_aleatoric\n";
    std::int64_t last_ts = series.timestamps.back();
    for (int t = 0; t < mcfg.tau; ++t)
        for (int j = 0; j < n; ++j) {
            double sd = norm.std[j];
            double mean = nd::dataio::denormalize(st.mean(t, j), norm, j);
            double ve = st.var_epistemic(t, j) * sd * sd;
            double va = st.var_aleatoric(t, j) * sd * sd;
            double hw = q90 * std::sqrt(ve + va);
            out << series.station_ids[j] << ','
                << nd::dataio::format_iso8601(last_ts + (t + 1) * nd::dataio::kStepSeconds) << ','
                << nd::dataio::format_double(mean) << ',' << nd::dataio::format_double(mean - hw)
                << ',' << nd::dataio::format_double(mean + hw) << ','
                << nd::dataio::format_double(ve) << ',' << nd::dataio::format_double(va) << '\n';
        }
    std::cout << "forecast " << mcfg.tau << " steps x " << n << " stations -> " << output << "\n";
    return kExitOk;
}

int cmd_evaluate(const nd::config::RunConfig& cfg, std::uint64_t seed, const std::string& data,
                 const std::string& stations, const std::string& checkpoint,
                 const std::string& output) {
    nd::dataio::SeriesTable series = load_series(data);
    nd::model::Model m = nd::model::Model::load(checkpoint);
    nd::graphnet::DynamicGraph graph = build_graph_for(series, stations, cfg);
    nd::dataio::SplitResult split =
        nd::dataio::window_and_split(series, m.config().T, m.config().tau);
    nd::train::EvalResult res = nd::train::evaluate(m, split.test, graph, seed, cfg.eval_stride);
    std::cout << "metric      value\n"
              << "mae         " << nd::dataio::format_double(res.mae) << "\n"
              << "rmse        " << nd::dataio::format_double(res.rmse) << "\n"
              << "coverage90  " << nd::dataio::format_double(res.coverage90) << "\n"
              << "points      " << res.points << "\n";
    if (!output.empty()) {
        std::ofstream out(output);
        if (!out) throw CliError(kExitData, "cannot write " + output);
        out << "metric,value\nmae," << nd::dataio::format_double(res.mae) << "\nrmse,"
            << nd::dataio::format_double(res.rmse) << "\ncoverage90,"
            << nd::dataio::format_double(res.coverage90) << "\npoints," << res.points << "\n";
    }
    return kExitOk;
}

int cmd_verify_theory(std::uint64_t seed) {
    std::vector<nd::theory::CheckResult> results = nd::theory::run_all(seed);
    std::cout << nd::theory::format_report(results);
    if (!nd::theory::all_passed(results)) {
        std::cerr << "error: 5 theory-suite failure\n";
        return kExitTheory;
    }
    return kExitOk;
}

int cmd_classify_regimes(const std::string& data, const std::string& output) {
    nd::dataio::SeriesTable series = load_series(data);
    nd::dataio::RegimeThresholds th = nd::dataio::default_thresholds(series);
    int counts[3] = {0, 0, 0};
    std::ofstream out;
    if (!output.empty()) {
        out.open(output);
        if (!out) throw CliError(kExitData, "cannot write " + output);
        out << "timestamp,regime\n";
    }
    for (int t = 0; t < series.steps(); ++t) {
        nd::dataio::Regime r =
            nd::dataio::classify_regime(series, t, th.wind_hi, th.wind_lo, th.grad_hi);
        ++counts[static_cast<int>(r)];
        if (out.is_open())
            out << nd::dataio::format_iso8601(series.timestamps[t]) << ','
                << nd::dataio::regime_name(r) << '\n';
    }
    std::cout << "thresholds: wind_hi=" << nd::dataio::format_double(th.wind_hi)
              << " wind_lo=" << nd::dataio::format_double(th.wind_lo)
              << " grad_hi=" << nd::dataio::format_double(th.grad_hi) << "\n";
    std::cout << "diffusion " << counts[0] << "\nadvection " << counts[1] << "\nother "
              << counts[2] << "\n";
    return kExitOk;
}

struct ForecastRow {
    std::string station;
    std::string timestamp;
    double mean, lower, upper;
};

int cmd_plot(const std::string& forecast, const std::string& output) {
    std::ifstream in(forecast);
    if (!in) throw CliError(kExitData, "cannot open " + forecast);
    std::string line;
    if (!std::getline(in, line) ||
        line != "station_id,timestamp,mean,lower,upper,var_epistemic,var_aleatoric")
        throw CliError(kExitData, forecast + ": not a forecast CSV");
    std::vector<ForecastRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        f.push_back(cur);
        if (f.size() != 7) throw CliError(kExitData, forecast + ": malformed row '" + line + "'");
        rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    }
    if (rows.empty()) throw CliError(kExitData, forecast + ": no rows");

    std::vector<std::string> stations;
    for (const auto& r : rows)
        if (std::find(stations.begin(), stations.end(), r.station) == stations.end())
            stations.push_back(r.station);
    int steps = static_cast<int>(rows.size() / stations.size());
    double lo = rows[0].lower, hi = rows[0].upper;
    for (const auto& r : rows) {
        lo = std::min(lo, r.lower);
        hi = std::max(hi, r.upper);
    }
    if (hi <= lo) hi = lo + 1.0;

    const double w = 900, h = 480, ml = 60, mr = 20, mt = 20, mb = 40;
    auto xpos = [&](int t) { return ml + (w - ml - mr) * (steps > 1 ? t / double(steps - 1) : 0.5); };
    auto ypos = [&](double v) { return mt + (h - mt - mb) * (1.0 - (v - lo) / (hi - lo)); };

    fs::path svg_path(output);
    std::ofstream svg(svg_path);
    if (!svg) throw CliError(kExitData, "cannot write " + output);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    // Shaded interval band for the first station, mean lines for all.
    {
        std::ostringstream pts;
        for (int t = 0; t < steps; ++t) {
            const ForecastRow& r = rows[t * stations.size()];
            pts << xpos(t) << ',' << ypos(r.upper) << ' ';
        }
        for (int t = steps - 1; t >= 0; --t) {
            const ForecastRow& r = rows[t * stations.size()];
            pts << xpos(t) << ',' << ypos(r.lower) << ' ';
        }
        svg << "<polygon points=\"" << pts.str()
            << "\" fill=\"#1f77b4\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    for (std::size_t s = 0; s < stations.size(); ++s) {
        svg << "<polyline fill=\"none\" stroke=\"" << colors[s % 10] << "\" points=\"";
        for (int t = 0; t < steps; ++t) {
            const ForecastRow& r = rows[t * stations.size() + s];
            svg << xpos(t) << ',' << ypos(r.mean) << ' ';
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << w - mr - 100 << "\" y=\"" << mt + 14 * (s + 1) << "\" fill=\""
            << colors[s % 10] << "\" font-size=\"12\">" << stations[s] << "</text>\n";
    }
    svg << "<text x=\"" << ml << "\" y=\"" << mt - 4 << "\" font-size=\"12\">"
        << nd::dataio::format_double(hi) << "</text>\n"
        << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-size=\"12\">"
        << nd::dataio::format_double(lo) << "</text>\n</svg>\n";

    // Underlying data next to the SVG; the appended extension avoids
    // clobbering a forecast CSV that shares the SVG's stem.
    fs::path csv_path = svg_path;
    csv_path += ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw CliError(kExitData, "cannot write " + csv_path.string());
    csv << "station_id,timestamp,mean,lower,upper\n";
    for (const auto& r : rows)
        csv << r.station << ',' << r.timestamp << ',' << nd::dataio::format_double(r.mean) << ','
            << nd::dataio::format_double(r.lower) << ',' << nd::dataio::format_double(r.upper)
            << '\n';
    std::cout << "plot -> " << output << " and " << csv_path.string() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-informed air-quality forecasting pipeline"};
    app.require_subcommand(1);
    app.fallthrough(); // allow the global --config/--seed after the subcommand

    std::string config_path, data, stations, output, checkpoint, norm_path, forecast_path;
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    int threads = 1;
    app.add_option("--config", config_path, "configuration file (key = value lines)");
    app.add_option("--seed", seed_flag, "random seed (overrides NEURODDAF_SEED and config)")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "worker cap (single-threaded build accepts and ignores)");

    CLI::App* ingest = app.add_subcommand("ingest", "validate and normalize a data CSV");
    ingest->add_option("--data", data, "input series CSV")->required();
    ingest->add_option("--stations", stations, "station metadata CSV");
    ingest->add_option("--output", output, "normalized output CSV")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    simulate->add_option("--output", output, "output directory")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--data", data, "series CSV")->required();
    train_cmd->add_option("--stations", stations, "station metadata CSV")->required();
    train_cmd->add_option("--output", output, "output directory")->required();

    CLI::App* forecast_cmd = app.add_subcommand("forecast", "forecast from the end of a series");
    forecast_cmd->add_option("--data", data, "series CSV")->required();
    forecast_cmd->add_option("--stations", stations, "station metadata CSV")->required();
    forecast_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    forecast_cmd->add_option("--norm", norm_path, "normalization stats CSV from training");
    forecast_cmd->add_option("--output", output, "forecast CSV")->required();

    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "evaluate on the test split");
    evaluate_cmd->add_option("--data", data, "series CSV")->required();
    evaluate_cmd->add_option("--stations", stations, "station metadata CSV")->required();
    evaluate_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    evaluate_cmd->add_option("--output", output, "metrics CSV");

    app.add_subcommand("verify-theory", "run the theory property suite");

    CLI::App* classify = app.add_subcommand("classify-regimes", "label transport regimes");
    classify->add_option("--data", data, "series CSV")->required();
    classify->add_option("--output", output, "per-timestep labels CSV");

    CLI::App* plot = app.add_subcommand("plot", "render a forecast CSV as SVG + CSV");
    plot->add_option("--forecast", forecast_path, "forecast CSV")->required();
    plot->add_option("--output", output, "output SVG path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        nd::config::RunConfig cfg = load_config(config_path);
        std::uint64_t seed = resolve_seed(seed_set, seed_flag, cfg);
        if (app.got_subcommand("ingest")) return cmd_ingest(data, stations, output);
        if (app.got_subcommand("simulate")) return cmd_simulate(cfg, seed, output);
        if (app.got_subcommand("train")) return cmd_train(cfg, seed, data, stations, output);
        if (app.got_subcommand("forecast"))
            return cmd_forecast(cfg, seed, data, stations, checkpoint, norm_path, output);
        if (app.got_subcommand("evaluate"))
            return cmd_evaluate(cfg, seed, data, stations, checkpoint, output);
        if (app.got_subcommand("verify-theory")) return cmd_verify_theory(seed);
        if (app.got_subcommand("classify-regimes")) return cmd_classify_regimes(data, output);
        if (app.got_subcommand("plot")) return cmd_plot(forecast_path, output);
        std::cerr << "error: 2 unknown command\n";
        return kExitConfig;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.code << " " << e.what() << "\n";
        return e.code;
    } catch (const nd::config::ConfigError& e) {
        std::cerr << "error: 2 " << e.what() << "\n";
        return kExitConfig;
    } catch (const nd::odecore::OdeError& e) {
        std::cerr << "error: 4 " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: 3 " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: 3 " << e.what() << "\n";
        return kExitData;
    }
}
