// CSV ingestion, imputation, windowing, the synthetic generator, metrics
// and the run configuration.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "neuroddaf/config.hpp"
#include "neuroddaf/dataio.hpp"
#include "neuroddaf/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace neuroddaf;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

} // namespace

TEST_CASE("iso8601 parsing round trip") {
    for (const char* s : {"2020-01-01T00:00:00", "2020-02-29T21:00:00", "1999-12-31T23:59:59",
                          "2024-06-15T12:30:45"}) {
        std::int64_t t = dataio::parse_iso8601(s);
        CHECK(dataio::format_iso8601(t) == s);
    }
    CHECK(dataio::parse_iso8601("1970-01-01T00:00:00") == 0);
    CHECK(dataio::parse_iso8601("1970-01-02T00:00:00Z") == 86400);
    CHECK_THROWS_AS(dataio::parse_iso8601("2020-13-01T00:00:00"), std::invalid_argument);
    CHECK_THROWS_AS(dataio::parse_iso8601("2020-02-30T00:00:00"), std::invalid_argument);
    CHECK_THROWS_AS(dataio::parse_iso8601("not a time"), std::invalid_argument);
    // Space-separated timestamps are an accepted lenient form.
    CHECK(dataio::parse_iso8601("2020-01-01 00:00:00") ==
          dataio::parse_iso8601("2020-01-01T00:00:00"));
}

TEST_CASE("csv ingestion: values, gaps, masks") {
    fs::path p = write_temp("nd_test_series.csv",
        "station_id,timestamp,pm25,wind_speed,wind_direction\n"
        "A,2020-01-01T00:00:00,10.5,2.0,90\n"
        "A,2020-01-01T03:00:00,,2.5,100\n"     // missing pm25
        "A,2020-01-01T06:00:00,12.25,3.0,110\n"
        "B,2020-01-01T00:00:00,20,1.0,45\n"
        "B,2020-01-01T06:00:00,22,1.5,50\n");   // B missing the middle step
    dataio::SeriesTable t = dataio::ingest_csv(p.string());
    fs::remove(p);
    REQUIRE(t.n_stations() == 2);
    REQUIRE(t.steps() == 3);
    int a = t.station_ids[0] == "A" ? 0 : 1, b = 1 - a;
    CHECK(t.pm25(0, a) == 10.5);
    CHECK(t.mask(0, a) == 1.0);
    CHECK(t.mask(1, a) == 0.0); // empty field masked out
    CHECK(t.pm25(2, a) == 12.25);
    CHECK(t.mask(1, b) == 0.0); // absent row masked out
    CHECK(t.pm25(2, b) == 22.0);
    CHECK(t.timestamps[1] - t.timestamps[0] == dataio::kStepSeconds);
}

TEST_CASE("csv ingestion rejects malformed input with line numbers") {
    fs::path bad_header = write_temp("nd_test_badhdr.csv", "foo,bar\n");
    CHECK_THROWS_AS(dataio::ingest_csv(bad_header.string()), std::invalid_argument);
    fs::remove(bad_header);

    fs::path bad_fields = write_temp("nd_test_badfields.csv",
        "station_id,timestamp,pm25,wind_speed,wind_direction\n"
        "A,2020-01-01T00:00:00,1.0\n");
    try {
        dataio::ingest_csv(bad_fields.string());
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    fs::remove(bad_fields);

    fs::path off_grid = write_temp("nd_test_offgrid.csv",
        "station_id,timestamp,pm25,wind_speed,wind_direction\n"
        "A,2020-01-01T00:00:00,1.0,1.0,0\n"
        "A,2020-01-01T01:30:00,1.0,1.0,0\n");
    CHECK_THROWS(dataio::ingest_csv(off_grid.string()));
    fs::remove(off_grid);
}

TEST_CASE("station metadata ingestion") {
    fs::path p = write_temp("nd_test_meta.csv",
        "station_id,lat,lon\nA,40.1,116.2\nB,40.5,116.8\n");
    auto st = dataio::ingest_station_meta(p.string());
    fs::remove(p);
    REQUIRE(st.size() == 2);
    CHECK(st[0].id == "A");
    CHECK(st[0].lat == 40.1);
    CHECK(st[1].lon == 116.8);
    fs::path bad = write_temp("nd_test_meta_bad.csv", "id,lat\nA,1\n");
    CHECK_THROWS(dataio::ingest_station_meta(bad.string()));
    fs::remove(bad);
}

namespace {
dataio::SeriesTable make_series(int steps, int n, double base = 10.0) {
    dataio::SeriesTable t;
    for (int j = 0; j < n; ++j) t.station_ids.push_back("S" + std::to_string(j));
    std::int64_t t0 = dataio::parse_iso8601("2020-01-01T00:00:00");
    for (int i = 0; i < steps; ++i) t.timestamps.push_back(t0 + i * dataio::kStepSeconds);
    t.pm25.resize(steps, n);
    t.wind_speed.resize(steps, n);
    t.wind_direction.resize(steps, n);
    t.mask.resize(steps, n);
    t.mask.fill(1.0);
    for (int i = 0; i < steps; ++i)
        for (int j = 0; j < n; ++j) {
            t.pm25(i, j) = base + i + 0.5 * j;
            t.wind_speed(i, j) = 2.0;
        }
    return t;
}
} // namespace

TEST_CASE("imputation: centered mean, fallback, idempotence") {
    dataio::SeriesTable t = make_series(12, 2);
    t.mask(5, 0) = 0.0;
    t.pm25(5, 0) = -999.0; // garbage behind the mask
    dataio::SeriesTable f = dataio::impute(t);
    // Centered +/-4 window around step 5 excluding itself: steps 1..9 minus 5.
    double expect = 0.0;
    int cnt = 0;
    for (int i = 1; i <= 9; ++i)
        if (i != 5) {
            expect += t.pm25(i, 0);
            ++cnt;
        }
    expect /= cnt;
    CHECK(f.pm25(5, 0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(f.mask(5, 0) == 1.0); // imputed entries count as observed afterwards

    // Idempotence: imputing again changes nothing.
    dataio::SeriesTable f2 = dataio::impute(f);
    for (int i = 0; i < t.steps(); ++i)
        for (int j = 0; j < t.n_stations(); ++j) CHECK(f2.pm25(i, j) == f.pm25(i, j));

    // A fully masked station throws.
    dataio::SeriesTable bad = make_series(6, 2);
    for (int i = 0; i < 6; ++i) bad.mask(i, 1) = 0.0;
    CHECK_THROWS(dataio::impute(bad));
}

TEST_CASE("imputation falls back to the station mean for long gaps") {
    dataio::SeriesTable t = make_series(30, 1);
    // Mask a stretch longer than the +/-4 window so its middle has no
    // observed neighbor.
    for (int i = 5; i <= 20; ++i) t.mask(i, 0) = 0.0;
    dataio::SeriesTable f = dataio::impute(t);
    double mean = 0.0;
    int cnt = 0;
    for (int i = 0; i < 30; ++i)
        if (t.mask(i, 0) == 1.0) {
            mean += t.pm25(i, 0);
            ++cnt;
        }
    mean /= cnt;
    CHECK(f.pm25(12, 0) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("windowing and chronological split") {
    dataio::SeriesTable t = make_series(200, 3);
    dataio::SplitResult sp = dataio::window_and_split(t, 8, 4);
    CHECK(sp.train.series.steps() == 140);
    CHECK(sp.val.series.steps() == 20);
    CHECK(sp.test.series.steps() == 40);
    // Chronological and disjoint.
    CHECK(sp.train.series.timestamps.back() < sp.val.series.timestamps.front());
    CHECK(sp.val.series.timestamps.back() < sp.test.series.timestamps.front());
    // Window counts: steps - (T + tau) + 1 valid starts.
    CHECK(sp.train.count() == 140 - 12 + 1);
    CHECK(sp.val.count() == 20 - 12 + 1);
    CHECK(sp.test.count() == 40 - 12 + 1);
    // A split too short to hold one window is rejected outright.
    CHECK_THROWS(dataio::window_and_split(make_series(30, 3), 8, 4));
    // Shapes.
    Tensor in = sp.train.input_pm25(0), tg = sp.train.target_pm25(0);
    CHECK(in.rows() == 8);
    CHECK(in.cols() == 3);
    CHECK(tg.rows() == 4);
    CHECK(tg.cols() == 3);
    // Normalization stats come from the training split and are shared.
    for (int j = 0; j < 3; ++j) {
        CHECK(sp.test.norm.mean[j] == sp.train.norm.mean[j]);
        double v = dataio::denormalize(dataio::normalize_value(42.0, sp.train.norm, j),
                                       sp.train.norm, j);
        CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
    }
    // Train inputs are normalized: overall mean ~0.
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < sp.train.series.steps(); ++i)
        for (int j = 0; j < 3; ++j) {
            acc += sp.train.series.pm25(i, j);
            ++cnt;
        }
    CHECK(std::abs(acc / cnt) < 1e-10);
    CHECK_THROWS(dataio::window_and_split(t, 8, 4, 0.5, 0.2, 0.2)); // fractions != 1
}

TEST_CASE("rmse dominates mae on random data") {
    Rng rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 1 + static_cast<int>(rng.uniform() * 20);
        Tensor a(1, n), b(1, n);
        for (int i = 0; i < n; ++i) {
            a(0, i) = rng.normal() * 10.0;
            b(0, i) = rng.normal() * 10.0;
        }
        dataio::Metrics m = dataio::mae_rmse(a, b);
        CHECK(m.rmse >= m.mae - 1e-12);
    }
}

TEST_CASE("metrics oracles") {
    Tensor yhat = Tensor::from_rows({{1.0, 2.0, 3.0}});
    Tensor y = Tensor::from_rows({{2.0, 2.0, 1.0}});
    dataio::Metrics m = dataio::mae_rmse(yhat, y);
    CHECK(m.mae == doctest::Approx(1.0));
    CHECK(m.rmse == doctest::Approx(std::sqrt((1.0 + 0.0 + 4.0) / 3.0)));

    Tensor lo = Tensor::from_rows({{0.0, 3.0, 0.0}});
    Tensor hi = Tensor::from_rows({{3.0, 4.0, 0.5}});
    CHECK(dataio::interval_coverage(y, lo, hi) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("synthetic generator: shapes, positivity, stability") {
    dataio::SynthConfig cfg;
    cfg.n_stations = 6;
    cfg.n_steps = 300;
    cfg.seed = 5;
    dataio::SynthResult r = dataio::synth_generate(cfg);
    CHECK(r.series.steps() == 300);
    CHECK(r.series.n_stations() == 6);
    CHECK(r.ground_truth.rows() == 300);
    double max_val = 0.0;
    for (std::size_t i = 0; i < r.ground_truth.size(); ++i) {
        CHECK(r.ground_truth[i] >= 0.0);
        max_val = std::max(max_val, r.ground_truth[i]);
    }
    CHECK(max_val < 1e4); // bounded rollout
    for (std::size_t i = 0; i < r.series.mask.size(); ++i) CHECK(r.series.mask[i] == 1.0);
    CHECK(r.graph.n() == 6);
    CHECK(r.graph.time_steps() == 300);
    // Deterministic in the seed.
    dataio::SynthResult r2 = dataio::synth_generate(cfg);
    for (std::size_t i = 0; i < r.series.pm25.size(); ++i)
        CHECK(r.series.pm25[i] == r2.series.pm25[i]);
}

TEST_CASE("generator trajectory satisfies the discrete transport equation") {
    dataio::SynthConfig cfg;
    cfg.n_stations = 5;
    cfg.n_steps = 50;
    cfg.noise_std = 0.0;
    cfg.emission_rate = 0.0;
    cfg.deposition_rate = 0.0;
    cfg.seed = 9;
    dataio::SynthResult r = dataio::synth_generate(cfg);
    Tensor lap = graphnet::laplacian(r.graph, 0);
    int n = cfg.n_stations;
    double max_res = 0.0;
    for (int t = 0; t + 1 < cfg.n_steps; ++t) {
        Tensor m = dataio::conservative_advection(
            graphnet::advection_operator(r.graph, t, graphnet::OperatorMode::learned));
        for (int i = 0; i < n; ++i) {
            double rhs = 0.0;
            for (int j = 0; j < n; ++j)
                rhs += (-cfg.diffusion * lap(i, j) + cfg.advection_strength * m(i, j)) *
                       r.ground_truth(t, j);
            double res = (r.ground_truth(t + 1, i) - r.ground_truth(t, i)) / cfg.dt - rhs;
            max_res = std::max(max_res, std::abs(res));
        }
    }
    CHECK(max_res < 1e-10);
}

TEST_CASE("generator conserves mass without sources or sinks") {
    dataio::SynthConfig cfg;
    cfg.n_stations = 5;
    cfg.n_steps = 200;
    cfg.noise_std = 0.0;
    cfg.emission_rate = 0.0;
    cfg.deposition_rate = 0.0;
    cfg.seed = 10;
    dataio::SynthResult r = dataio::synth_generate(cfg);
    double m0 = 0.0, mN = 0.0;
    for (int j = 0; j < 5; ++j) {
        m0 += r.ground_truth(0, j);
        mN += r.ground_truth(199, j);
    }
    CHECK(mN == doctest::Approx(m0).epsilon(1e-9));
}

TEST_CASE("generator rejects unstable step sizes") {
    dataio::SynthConfig cfg;
    cfg.n_stations = 6;
    cfg.n_steps = 50;
    cfg.dt = 50.0;
    CHECK_THROWS_AS(dataio::synth_generate(cfg), std::invalid_argument);
}

TEST_CASE("conservative advection has zero column sums") {
    Rng rng(11);
    Tensor p(4, 4);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform();
    Tensor m = dataio::conservative_advection(p);
    for (int j = 0; j < 4; ++j) {
        double col = 0.0;
        for (int i = 0; i < 4; ++i) col += m(i, j);
        CHECK(col == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("regime classifier with segment winds") {
    dataio::SynthConfig cfg;
    cfg.n_stations = 6;
    cfg.n_steps = 240;
    cfg.seed = 12;
    cfg.wind_segments = {{0, 80, 0.5}, {80, 160, 6.0}, {160, 240, 0.5}};
    dataio::SynthResult r = dataio::synth_generate(cfg);
    REQUIRE(static_cast<int>(r.regime_truth.size()) == 240);
    dataio::RegimeThresholds th = dataio::default_thresholds(r.series);
    CHECK(th.wind_lo < th.wind_hi);
    int hits = 0, total = 0;
    for (int t = 0; t < 240; ++t) {
        dataio::Regime pred = dataio::classify_regime(r.series, t, th.wind_hi, th.wind_lo, th.grad_hi);
        if (r.regime_truth[t] == 1) {
            ++total;
            if (pred == dataio::Regime::advection) ++hits;
        }
    }
    CHECK(total == 80);
    CHECK(hits > 60); // strong-wind steps overwhelmingly labeled advection
    CHECK(std::string(dataio::regime_name(dataio::Regime::diffusion)) == "diffusion");
    CHECK_THROWS(dataio::classify_regime(r.series, 0, 1.0, 2.0, 0.0)); // lo >= hi
}

TEST_CASE("series csv writer round trips through ingestion") {
    dataio::SeriesTable t = make_series(6, 2);
    fs::path p = fs::temp_directory_path() / "nd_test_roundtrip.csv";
    dataio::write_series_csv(p.string(), t);
    dataio::SeriesTable back = dataio::ingest_csv(p.string());
    fs::remove(p);
    REQUIRE(back.steps() == t.steps());
    REQUIRE(back.n_stations() == t.n_stations());
    for (int i = 0; i < t.steps(); ++i)
        for (int j = 0; j < t.n_stations(); ++j)
            CHECK(back.pm25(i, j) == doctest::Approx(t.pm25(i, j)).epsilon(1e-8));
}

// ---------------------------------------------------------------- config

TEST_CASE("config parse, defaults and round trip") {
    config::RunConfig base;
    std::string text = config::serialize(base);
    config::RunConfig re = config::parse_config_text(text, "mem");
    CHECK(config::serialize(re) == text); // parse(serialize) identity

    config::RunConfig c = config::parse_config_text(
        "# comment\n\nT = 12\ntau = 6\nlr = 0.001\nfilter_type = adv\nsynth_steps = 99\n",
        "mem");
    CHECK(c.model.T == 12);
    CHECK(c.model.tau == 6);
    CHECK(c.train.lr == 0.001);
    CHECK(c.model.filter_type == "adv");
    CHECK(c.synth_steps == 99);
    // Unspecified keys keep defaults.
    CHECK(c.model.gru_hidden == base.model.gru_hidden);
}

TEST_CASE("config rejects unknown keys, bad values and violations") {
    try {
        config::parse_config_text("T = 12\nnot_a_key = 5\n", "f.cfg");
        FAIL("expected throw");
    } catch (const config::ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("not_a_key") != std::string::npos);
        CHECK(msg.find("f.cfg") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos); // line number
    }
    CHECK_THROWS_AS(config::parse_config_text("T = twelve\n", "m"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_config_text("T = 0\n", "m"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_config_text("lr = -1\n", "m"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_config_text("filter_type = nope\n", "m"), config::ConfigError);
    CHECK_THROWS_AS(config::parse_config_text("garbage line\n", "m"), config::ConfigError);
}

TEST_CASE("config doubles survive serialization exactly") {
    config::RunConfig c;
    c.train.lr = 0.1 + 0.2; // not representable in short decimal
    c.model.rtol = 1e-7 / 3.0;
    config::RunConfig re = config::parse_config_text(config::serialize(c), "m");
    CHECK(re.train.lr == c.train.lr);
    CHECK(re.model.rtol == c.model.rtol);
}

TEST_CASE("synth config mapping") {
    config::RunConfig c;
    c.synth_stations = 7;
    c.synth_diffusion = 0.25;
    c.synth_steps = 123;
    dataio::SynthConfig s = config::synth_config(c, 42);
    CHECK(s.n_stations == 7);
    CHECK(s.diffusion == 0.25);
    CHECK(s.n_steps == 123);
    CHECK(s.seed == 42);
    CHECK(s.length_scale_km == c.length_scale_km);
}
